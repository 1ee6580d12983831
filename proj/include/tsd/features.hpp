// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsd/audio.hpp"

namespace tsd {

enum class FeatureKind { LogMel, Mfcc, LogMelMfcc };

/// Time x feature matrix, row-major.
struct FeatureMatrix {
    int64_t t = 0;
    int64_t f = 0;
    std::vector<double> values; // t * f
    double frames_per_second = 0.0;
    FeatureKind kind = FeatureKind::LogMel;

    double& at(int64_t i, int64_t j) { return values[i * f + j]; }
    double at(int64_t i, int64_t j) const { return values[i * f + j]; }
    const double* row(int64_t i) const { return values.data() + i * f; }
};

/// Both branch configurations. Defaults give 64 mel bins at exactly 50
/// frames per second on the mixture branch and log-mel + 20 MFCCs at
/// 220.5 fps on the reference branch.
struct DspConfig {
    int mixture_sample_rate = 22050;
    int mixture_window = 2048;
    int mixture_hop = 441;
    int mixture_mels = 64;

    int reference_sample_rate = 44100;
    int reference_window = 400;
    int reference_hop = 200;
    int reference_mels = 64;
    int reference_mfcc = 20;

    double log_eps = 1e-10;
    std::string cache_dir; // empty: disk cache off
};

/// One-sided STFT magnitudes: frames x (window/2 + 1). Hann window,
/// reflect padding, frame k centered at sample k*hop; the frame count is
/// floor(len / hop).
FeatureMatrix stft_magnitude(const AudioClip& clip, int window_size, int hop_size);

/// Triangular mel filterbank, HTK mel scale, 0 Hz..Nyquist. Each weight is
/// the mean of the triangle over the bin's frequency span, so every filter
/// row has positive mass for any bin resolution. Row-major n_mels x n_bins.
std::vector<double> mel_filterbank(int n_mels, int n_bins, int sample_rate, int window_size);

/// Log-mel spectrogram of the power spectrum: log(mel + eps).
FeatureMatrix log_mel(const AudioClip& clip, int window_size, int hop_size, int n_mels,
                      double log_eps);

/// MFCCs as the orthonormal DCT-II of a log-mel matrix, first n_mfcc
/// coefficients (coefficient 0 retained).
FeatureMatrix mfcc_from_log_mel(const FeatureMatrix& logmel, int n_mfcc);

/// Mixture-branch features: resample to the mixture rate, 64-bin log-mel.
FeatureMatrix mixture_features(const AudioClip& clip, const DspConfig& cfg = {});

/// Reference-branch features: resample to the reference rate, log-mel and
/// MFCC concatenated per frame as [log-mel | mfcc].
FeatureMatrix reference_features(const AudioClip& clip, const DspConfig& cfg = {});

/// Stable hash of the settings that change feature values; keys the disk cache
/// and the checkpoint compatibility check together with the model config.
uint64_t dsp_config_hash(const DspConfig& cfg);

/// Versioned binary feature cache. Load returns false on miss or on a stale
/// cache version.
bool feature_cache_load(const std::string& cache_dir, const std::string& source_id,
                        uint64_t config_hash, FeatureMatrix& out);
void feature_cache_store(const std::string& cache_dir, const std::string& source_id,
                         uint64_t config_hash, const FeatureMatrix& m);

} // namespace tsd
