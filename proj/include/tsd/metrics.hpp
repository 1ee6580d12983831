// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsd/corpus.hpp"

namespace tsd {

struct PredictedEvent {
    double onset = 0.0;
    double offset = 0.0;
};

struct CategoryCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;
};

struct SegmentCounts {
    std::map<std::string, CategoryCounts> per_category;
    double segment_length = 1.0;

    void add(const std::string& category, const CategoryCounts& c);
};

struct EvalConfig {
    double segment_length = 1.0;
    double threshold = 0.5;
    int median_window = 5;
};

/// Median-filter frame probabilities, threshold, and convert maximal runs of
/// active frames into events at the feature frame rate.
std::vector<PredictedEvent> binarize(const std::vector<double>& frame_probs, double fps,
                                     double threshold = 0.5, int median_window = 5);

/// Per-segment comparison over ceil(duration / segment_length) segments; a
/// segment is active when it overlaps an event with positive measure.
CategoryCounts segment_tabulate(const std::vector<PredictedEvent>& pred,
                                const std::vector<PredictedEvent>& ref, double duration,
                                double segment_length);

/// F = 2tp / (2tp + fp + fn), 0 when the denominator is 0.
double f_score(const CategoryCounts& c);

struct FMeasureResult {
    std::map<std::string, double> per_category;
    double macro_f = 0.0;
};

/// Macro F over categories with reference presence (tp + fn > 0).
FMeasureResult f_measure(const SegmentCounts& counts);

/// Per-sample frame probabilities come from a model adapter so both real
/// checkpoints and test oracles (ground-truth, constant, random) can be
/// scored. Receives the sample and its reference frame labels.
using FrameProbFn =
    std::function<std::vector<double>(const TsdSample&, const std::vector<uint8_t>&)>;

struct ClipLevelResult {
    double accuracy = 0.0;
    double macro_f = 0.0;
    int64_t n_samples = 0;
};

struct EvalReport {
    SegmentCounts counts;
    FMeasureResult f;
    std::optional<ClipLevelResult> clip_level; // weak manifests only
    int64_t n_samples = 0;
    std::string dataset;
    std::string checkpoint_hash;
};

/// Score a manifest: run the adapter per sample, binarize, tabulate against
/// the reference frame labels, aggregate counts per target category.
EvalReport evaluate_manifest(const std::string& manifest_path,
                             const std::vector<TsdSample>& samples, const FrameProbFn& probs,
                             const EvalConfig& cfg);

/// Macro F a random-probability predictor scores on this manifest,
/// estimated by Monte-Carlo simulation over `trials` draws.
double chance_level(const std::string& manifest_path, const std::vector<TsdSample>& samples,
                    const EvalConfig& cfg, int trials, uint64_t seed);

/// Turn events back into per-frame intervals for the predicted-event list.
std::vector<PredictedEvent> labels_to_events(const std::vector<uint8_t>& labels, double fps);

/// Serialize/print reports.
std::string report_to_json(const EvalReport& report, const EvalConfig& cfg);
std::string report_to_table(const EvalReport& report);

} // namespace tsd
