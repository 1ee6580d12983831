// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/features.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tsd/common.hpp"
#include "tsd/fft.hpp"

namespace tsd {

namespace {

constexpr uint32_t kCacheVersion = 1;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Mean of the triangle (left, center, right) over [lo, hi). Piecewise-linear,
// integrated analytically.
double triangle_mean(double left, double center, double right, double lo, double hi) {
    auto ramp_integral = [](double a, double b, double x0, double x1) {
        // integral of (x - a) / (b - a) over [x0, x1]
        if (x1 <= x0) return 0.0;
        double m = 1.0 / (b - a);
        return m * (0.5 * (x1 * x1 - x0 * x0) - a * (x1 - x0));
    };
    double total = 0.0;
    double a0 = std::max(lo, left), a1 = std::min(hi, center);
    if (a1 > a0 && center > left) total += ramp_integral(left, center, a0, a1);
    double b0 = std::max(lo, center), b1 = std::min(hi, right);
    if (b1 > b0 && right > center) {
        // falling edge: (right - x) / (right - center)
        double m = 1.0 / (right - center);
        total += m * (right * (b1 - b0) - 0.5 * (b1 * b1 - b0 * b0));
    }
    return hi > lo ? total / (hi - lo) : 0.0;
}

// Reflect an out-of-range index into [0, len), mirroring about the ends.
int64_t reflect_index(int64_t idx, int64_t len) {
    if (len == 1) return 0;
    const int64_t period = 2 * (len - 1);
    idx = ((idx % period) + period) % period;
    return idx < len ? idx : period - idx;
}

std::string cache_path(const std::string& cache_dir, const std::string& source_id,
                       uint64_t config_hash) {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, size_t n) {
        const uint8_t* p = static_cast<const uint8_t*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    mix(source_id.data(), source_id.size());
    mix(&config_hash, sizeof(config_hash));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return cache_dir + "/" + buf + ".feat";
}

} // namespace

FeatureMatrix stft_magnitude(const AudioClip& clip, int window_size, int hop_size) {
    if (window_size < 2) data_error("stft_magnitude: window size must be >= 2");
    if (hop_size < 1) data_error("stft_magnitude: hop size must be >= 1");
    const int64_t len = static_cast<int64_t>(clip.samples.size());
    const int64_t n_frames = len / hop_size;
    if (n_frames < 1 || len < 2)
        data_error("stft_magnitude: clip too short for one frame (need >= " +
                   std::to_string(hop_size) + " samples, got " + std::to_string(len) + ")");

    const int64_t bins = window_size / 2 + 1;
    const int64_t pad = window_size / 2;

    std::vector<double> window(window_size);
    for (int i = 0; i < window_size; ++i) {
        window[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / window_size));
    }

    Fft fft(static_cast<size_t>(window_size));

    FeatureMatrix out;
    out.t = n_frames;
    out.f = bins;
    out.values.resize(static_cast<size_t>(n_frames * bins));
    out.frames_per_second = static_cast<double>(clip.sample_rate) / hop_size;
    out.kind = FeatureKind::LogMel; // raw spectra reuse the container

    std::vector<double> frame(window_size);
    for (int64_t k = 0; k < n_frames; ++k) {
        const int64_t start = k * hop_size - pad;
        for (int i = 0; i < window_size; ++i) {
            frame[i] = clip.samples[reflect_index(start + i, len)] * window[i];
        }
        std::vector<double> mag = fft.real_magnitude(frame);
        std::memcpy(out.values.data() + k * bins, mag.data(), sizeof(double) * bins);
    }
    return out;
}

std::vector<double> mel_filterbank(int n_mels, int n_bins, int sample_rate, int window_size) {
    const double nyquist = sample_rate / 2.0;
    const double bin_width = static_cast<double>(sample_rate) / window_size;
    const double mel_max = hz_to_mel(nyquist);

    std::vector<double> edges(n_mels + 2);
    for (int m = 0; m < n_mels + 2; ++m) {
        edges[m] = mel_to_hz(mel_max * m / (n_mels + 1));
    }

    std::vector<double> fb(static_cast<size_t>(n_mels) * n_bins, 0.0);
    for (int m = 0; m < n_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        for (int b = 0; b < n_bins; ++b) {
            const double lo = (b - 0.5) * bin_width;
            const double hi = (b + 0.5) * bin_width;
            double w = triangle_mean(left, center, right, std::max(0.0, lo), std::min(nyquist, hi));
            if (w > 0.0) fb[static_cast<size_t>(m) * n_bins + b] = w;
        }
    }
    return fb;
}

FeatureMatrix log_mel(const AudioClip& clip, int window_size, int hop_size, int n_mels,
                      double log_eps) {
    FeatureMatrix spec = stft_magnitude(clip, window_size, hop_size);
    const int64_t bins = spec.f;
    std::vector<double> fb = mel_filterbank(n_mels, static_cast<int>(bins), clip.sample_rate,
                                            window_size);

    FeatureMatrix out;
    out.t = spec.t;
    out.f = n_mels;
    out.values.resize(static_cast<size_t>(out.t * out.f));
    out.frames_per_second = spec.frames_per_second;
    out.kind = FeatureKind::LogMel;

    for (int64_t i = 0; i < spec.t; ++i) {
        const double* s = spec.row(i);
        for (int m = 0; m < n_mels; ++m) {
            const double* w = fb.data() + static_cast<size_t>(m) * bins;
            double acc = 0.0;
            for (int64_t b = 0; b < bins; ++b) acc += w[b] * s[b] * s[b];
            out.at(i, m) = std::log(acc + log_eps);
        }
    }
    return out;
}

FeatureMatrix mfcc_from_log_mel(const FeatureMatrix& logmel, int n_mfcc) {
    const int64_t n = logmel.f;
    FeatureMatrix out;
    out.t = logmel.t;
    out.f = n_mfcc;
    out.values.resize(static_cast<size_t>(out.t * out.f));
    out.frames_per_second = logmel.frames_per_second;
    out.kind = FeatureKind::Mfcc;

    // orthonormal DCT-II basis
    std::vector<double> basis(static_cast<size_t>(n_mfcc) * n);
    for (int k = 0; k < n_mfcc; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
        for (int64_t j = 0; j < n; ++j) {
            basis[static_cast<size_t>(k) * n + j] =
                scale * std::cos(M_PI * k * (2.0 * j + 1.0) / (2.0 * n));
        }
    }

    for (int64_t i = 0; i < logmel.t; ++i) {
        const double* x = logmel.row(i);
        for (int k = 0; k < n_mfcc; ++k) {
            const double* b = basis.data() + static_cast<size_t>(k) * n;
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += b[j] * x[j];
            out.at(i, k) = acc;
        }
    }
    return out;
}

FeatureMatrix mixture_features(const AudioClip& clip, const DspConfig& cfg) {
    AudioClip at_rate = resample(clip, cfg.mixture_sample_rate);
    FeatureMatrix out = log_mel(at_rate, cfg.mixture_window, cfg.mixture_hop, cfg.mixture_mels,
                                cfg.log_eps);
    out.kind = FeatureKind::LogMel;
    return out;
}

FeatureMatrix reference_features(const AudioClip& clip, const DspConfig& cfg) {
    AudioClip at_rate = resample(clip, cfg.reference_sample_rate);
    FeatureMatrix lm = log_mel(at_rate, cfg.reference_window, cfg.reference_hop,
                               cfg.reference_mels, cfg.log_eps);
    FeatureMatrix mf = mfcc_from_log_mel(lm, cfg.reference_mfcc);

    FeatureMatrix out;
    out.t = lm.t;
    out.f = lm.f + mf.f;
    out.values.resize(static_cast<size_t>(out.t * out.f));
    out.frames_per_second = lm.frames_per_second;
    out.kind = FeatureKind::LogMelMfcc;
    for (int64_t i = 0; i < out.t; ++i) {
        std::memcpy(out.values.data() + i * out.f, lm.row(i), sizeof(double) * lm.f);
        std::memcpy(out.values.data() + i * out.f + lm.f, mf.row(i), sizeof(double) * mf.f);
    }
    return out;
}

uint64_t dsp_config_hash(const DspConfig& cfg) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "m:%d,%d,%d,%d;r:%d,%d,%d,%d,%d;e:%.17g",
                  cfg.mixture_sample_rate, cfg.mixture_window, cfg.mixture_hop, cfg.mixture_mels,
                  cfg.reference_sample_rate, cfg.reference_window, cfg.reference_hop,
                  cfg.reference_mels, cfg.reference_mfcc, cfg.log_eps);
    uint64_t h = 1469598103934665603ULL;
    for (const char* p = buf; *p; ++p) {
        h ^= static_cast<uint8_t>(*p);
        h *= 1099511628211ULL;
    }
    return h;
}

bool feature_cache_load(const std::string& cache_dir, const std::string& source_id,
                        uint64_t config_hash, FeatureMatrix& out) {
    if (cache_dir.empty()) return false;
    std::ifstream in(cache_path(cache_dir, source_id, config_hash), std::ios::binary);
    if (!in) return false;
    char magic[4];
    uint32_t version = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || std::memcmp(magic, "TSDF", 4) != 0 || version != kCacheVersion) return false;
    int32_t kind = 0;
    int64_t t = 0, f = 0;
    double fps = 0.0;
    in.read(reinterpret_cast<char*>(&kind), 4);
    in.read(reinterpret_cast<char*>(&t), 8);
    in.read(reinterpret_cast<char*>(&f), 8);
    in.read(reinterpret_cast<char*>(&fps), 8);
    if (!in || t <= 0 || f <= 0) return false;
    out.t = t;
    out.f = f;
    out.frames_per_second = fps;
    out.kind = static_cast<FeatureKind>(kind);
    out.values.resize(static_cast<size_t>(t * f));
    in.read(reinterpret_cast<char*>(out.values.data()), static_cast<std::streamsize>(8 * t * f));
    return static_cast<bool>(in);
}

void feature_cache_store(const std::string& cache_dir, const std::string& source_id,
                         uint64_t config_hash, const FeatureMatrix& m) {
    if (cache_dir.empty()) return;
    std::filesystem::create_directories(cache_dir);
    std::ofstream out(cache_path(cache_dir, source_id, config_hash), std::ios::binary);
    if (!out) return;
    out.write("TSDF", 4);
    uint32_t version = kCacheVersion;
    int32_t kind = static_cast<int32_t>(m.kind);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&kind), 4);
    out.write(reinterpret_cast<const char*>(&m.t), 8);
    out.write(reinterpret_cast<const char*>(&m.f), 8);
    out.write(reinterpret_cast<const char*>(&m.frames_per_second), 8);
    out.write(reinterpret_cast<const char*>(m.values.data()),
              static_cast<std::streamsize>(8 * m.t * m.f));
}

} // namespace tsd
