// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsd/audio.hpp"
#include "tsd/rng.hpp"

namespace tsd {

struct EventAnnotation {
    std::string category;
    double onset = 0.0;
    double offset = 0.0;
};

struct Soundscape {
    std::string id;
    AudioClip mixture;
    double duration = 0.0;
    std::vector<EventAnnotation> annotations;
    std::string background_id;
    std::vector<std::string> ingredient_clip_ids;
};

struct BankEntry {
    std::string clip_id;
    std::string category;
    double duration = 0.0;
    std::string split;
    std::string path;
};

struct ClipBank {
    std::vector<BankEntry> entries;

    std::vector<std::string> categories() const;
    std::vector<const BankEntry*> split_entries(const std::string& split) const;
};

using ClipLoader = std::function<AudioClip(const BankEntry&)>;

struct CorpusParams {
    double duration = 10.0;
    int min_events = 1;
    int max_events = 9;
    double snr_min_db = -5.0;
    double snr_max_db = 20.0;
    double background_rms = 0.03;
    int sample_rate = 22050;
};

enum class DatasetMode { Strong, StrongPlus, Weak };

std::string dataset_mode_name(DatasetMode mode);
DatasetMode dataset_mode_from_name(const std::string& name);

/// One manifest record. Strong samples carry frame labels; weak training
/// samples carry the clip bit only, weak validation/test samples carry both.
struct TsdSample {
    std::string sample_id;
    std::string mixture_path;
    std::string reference_path;
    std::string target_category;
    std::string polarity; // "positive" | "negative"
    DatasetMode mode = DatasetMode::Strong;
    double fps = 0.0;
    double duration = 0.0;
    std::vector<uint8_t> frame_labels; // populated on build; read back lazily
    bool has_frame_labels = false;
    std::string frame_labels_path; // empty: the default labels/<sample_id>.txt
    std::optional<int> clip_label;
};

/// Rasterize annotations of one category: frame i is active iff
/// [i/fps, (i+1)/fps) overlaps an annotation with positive measure.
std::vector<uint8_t> frame_labels(const std::vector<EventAnnotation>& annotations,
                                  const std::string& target, double fps, int64_t t);

/// Pink noise via the Voss-McCartney octave-bank scheme, normalized to rms.
std::vector<double> pink_noise(Rng& rng, int64_t length, double rms);

/// Place k ~ U[min_events, max_events] bank clips at uniform onsets over a
/// pink-noise background, each at an SNR drawn from the configured range.
/// Deterministic in rng. Events running past the end are trimmed and the
/// annotation reflects the trimmed extent.
Soundscape synthesize_soundscape(const std::vector<const BankEntry*>& bank_split,
                                 const ClipLoader& loader, Rng& rng, const CorpusParams& params,
                                 const std::string& scape_id);

struct DrawnSample {
    std::string target_category;
    const BankEntry* reference = nullptr;
    std::vector<uint8_t> labels;
    std::string polarity;
};

/// One positive sample per distinct category present in the soundscape;
/// repeated events of one category union into a single label vector. The
/// reference is drawn uniformly from same-category clips not mixed into the
/// soundscape; if none exists the sample is skipped with a warning.
std::vector<DrawnSample> make_positive_samples(const Soundscape& scape,
                                               const std::vector<const BankEntry*>& bank_split,
                                               Rng& rng, double fps, int64_t t,
                                               std::vector<std::string>* warnings = nullptr);

/// A sample whose target category is absent from the soundscape; labels are
/// all zero. Throws a data error when every bank category is present.
DrawnSample make_negative_sample(const Soundscape& scape,
                                 const std::vector<const BankEntry*>& bank_split, Rng& rng,
                                 int64_t t);

struct SplitCounts {
    int64_t soundscapes = 0;
    int64_t positives = 0;
    int64_t negatives = 0;
};

struct BuildReport {
    DatasetMode mode = DatasetMode::Strong;
    uint64_t seed = 0;
    std::map<std::string, SplitCounts> splits;
    std::vector<std::string> categories;
    double toy_separability = -1.0; // < 0: not a toy bank build
};

struct DatasetSizes {
    int64_t train_soundscapes = 0;
    int64_t validation_soundscapes = 0;
    int64_t test_soundscapes = 0;
};

/// Build a full dataset under out_dir: soundscape wavs, annotations, label
/// files and one manifest per split. Pure function of
/// (bank, mode, sizes, seed, params): re-runs are byte-identical.
BuildReport build_dataset(const ClipBank& bank, DatasetMode mode, const DatasetSizes& sizes,
                          uint64_t seed, const CorpusParams& params, double fps,
                          const std::string& out_dir);

/// Synthesize a bank of parameterized signal families (tone, chirp, band
/// noise burst) with within-category jitter, clips 1-4 s, written as wavs
/// under out_dir/bank plus out_dir/bank.jsonl.
ClipBank synth_toy_bank(uint64_t seed, int n_categories, int clips_per_category,
                        const std::string& out_dir, int sample_rate = 22050);

/// Center frequencies of the toy categories (log-spaced).
std::vector<double> toy_category_centers(int n_categories);

/// Band-energy classification accuracy over the bank; the toy families are
/// built to be separable at >= 95%.
double toy_bank_separability(const ClipBank& bank, const ClipLoader& loader);

/// Default loader reading entry.path relative to a base directory.
ClipLoader file_clip_loader(const std::string& base_dir);

} // namespace tsd
