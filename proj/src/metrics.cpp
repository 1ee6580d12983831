// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "tsd/common.hpp"
#include "tsd/manifest.hpp"
#include "tsd/nn/layers.hpp"
#include "tsd/rng.hpp"

namespace tsd {

using nlohmann::json;

void SegmentCounts::add(const std::string& category, const CategoryCounts& c) {
    CategoryCounts& acc = per_category[category];
    acc.tp += c.tp;
    acc.fp += c.fp;
    acc.fn += c.fn;
}

std::vector<PredictedEvent> binarize(const std::vector<double>& frame_probs, double fps,
                                     double threshold, int median_window) {
    if (threshold <= 0.0 || threshold >= 1.0) config_error("binarize: threshold must be in (0,1)");
    if (median_window < 1 || median_window % 2 == 0)
        config_error("binarize: median window must be odd");

    const int64_t t = static_cast<int64_t>(frame_probs.size());
    const int half = median_window / 2;
    std::vector<double> window;
    std::vector<PredictedEvent> events;
    int64_t run_start = -1;

    for (int64_t i = 0; i < t; ++i) {
        // centered window, truncated at the edges
        const int64_t lo = std::max<int64_t>(0, i - half);
        const int64_t hi = std::min<int64_t>(t - 1, i + half);
        window.assign(frame_probs.begin() + lo, frame_probs.begin() + hi + 1);
        std::sort(window.begin(), window.end());
        const double med = window[window.size() / 2];
        const bool active = med >= threshold;
        if (active && run_start < 0) run_start = i;
        if (!active && run_start >= 0) {
            events.push_back({static_cast<double>(run_start) / fps, static_cast<double>(i) / fps});
            run_start = -1;
        }
    }
    if (run_start >= 0) {
        events.push_back({static_cast<double>(run_start) / fps, static_cast<double>(t) / fps});
    }
    return events;
}

CategoryCounts segment_tabulate(const std::vector<PredictedEvent>& pred,
                                const std::vector<PredictedEvent>& ref, double duration,
                                double segment_length) {
    if (segment_length <= 0.0) config_error("segment_tabulate: segment length must be positive");
    const int64_t n_segments = static_cast<int64_t>(std::ceil(duration / segment_length));

    auto active_in = [](const std::vector<PredictedEvent>& events, double lo, double hi) {
        for (const PredictedEvent& e : events) {
            if (std::max(e.onset, lo) < std::min(e.offset, hi)) return true;
        }
        return false;
    };

    CategoryCounts c;
    for (int64_t s = 0; s < n_segments; ++s) {
        const double lo = s * segment_length;
        const double hi = std::min(duration, (s + 1) * segment_length);
        const bool p = active_in(pred, lo, hi);
        const bool r = active_in(ref, lo, hi);
        if (p && r) ++c.tp;
        else if (p && !r) ++c.fp;
        else if (!p && r) ++c.fn;
    }
    return c;
}

double f_score(const CategoryCounts& c) {
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    return denom > 0.0 ? 2.0 * static_cast<double>(c.tp) / denom : 0.0;
}

FMeasureResult f_measure(const SegmentCounts& counts) {
    FMeasureResult out;
    double sum = 0.0;
    int64_t present = 0;
    for (const auto& [cat, c] : counts.per_category) {
        const double f = f_score(c);
        out.per_category[cat] = f;
        if (c.tp + c.fn > 0) { // categories without reference presence are excluded
            sum += f;
            ++present;
        }
    }
    out.macro_f = present > 0 ? sum / static_cast<double>(present) : 0.0;
    return out;
}

std::vector<PredictedEvent> labels_to_events(const std::vector<uint8_t>& labels, double fps) {
    std::vector<PredictedEvent> events;
    int64_t run_start = -1;
    const int64_t t = static_cast<int64_t>(labels.size());
    for (int64_t i = 0; i <= t; ++i) {
        const bool on = i < t && labels[static_cast<size_t>(i)] != 0;
        if (on && run_start < 0) run_start = i;
        if (!on && run_start >= 0) {
            events.push_back({static_cast<double>(run_start) / fps, static_cast<double>(i) / fps});
            run_start = -1;
        }
    }
    return events;
}

EvalReport evaluate_manifest(const std::string& manifest_path,
                             const std::vector<TsdSample>& samples, const FrameProbFn& probs,
                             const EvalConfig& cfg) {
    EvalReport report;
    report.dataset = manifest_path;
    report.counts.segment_length = cfg.segment_length;

    bool any_clip_labels = false;
    std::map<std::string, CategoryCounts> clip_counts;
    int64_t clip_correct = 0, clip_total = 0;

    for (const TsdSample& s : samples) {
        std::vector<uint8_t> ref_labels;
        if (s.has_frame_labels) {
            ref_labels = load_frame_labels(manifest_path, s);
        } else {
            data_error("evaluate_manifest: sample " + s.sample_id +
                       " has no frame labels; segment evaluation needs them");
        }
        std::vector<double> frame_probs = probs(s, ref_labels);

        std::vector<PredictedEvent> pred =
            binarize(frame_probs, s.fps, cfg.threshold, cfg.median_window);
        std::vector<PredictedEvent> ref = labels_to_events(ref_labels, s.fps);
        report.counts.add(s.target_category,
                          segment_tabulate(pred, ref, s.duration, cfg.segment_length));
        ++report.n_samples;

        if (s.clip_label.has_value()) {
            any_clip_labels = true;
            const double clip_prob = nn::linear_softmax_pool(frame_probs);
            const int predicted = clip_prob >= cfg.threshold ? 1 : 0;
            const int truth = *s.clip_label;
            if (predicted == truth) ++clip_correct;
            ++clip_total;
            CategoryCounts& cc = clip_counts[s.target_category];
            if (predicted == 1 && truth == 1) ++cc.tp;
            else if (predicted == 1 && truth == 0) ++cc.fp;
            else if (predicted == 0 && truth == 1) ++cc.fn;
        }
    }

    report.f = f_measure(report.counts);
    if (any_clip_labels && clip_total > 0) {
        ClipLevelResult clip;
        clip.n_samples = clip_total;
        clip.accuracy = static_cast<double>(clip_correct) / static_cast<double>(clip_total);
        double sum = 0.0;
        int64_t present = 0;
        for (const auto& [cat, c] : clip_counts) {
            if (c.tp + c.fn > 0) {
                sum += f_score(c);
                ++present;
            }
        }
        clip.macro_f = present > 0 ? sum / static_cast<double>(present) : 0.0;
        report.clip_level = clip;
    }
    return report;
}

double chance_level(const std::string& manifest_path, const std::vector<TsdSample>& samples,
                    const EvalConfig& cfg, int trials, uint64_t seed) {
    Rng master(seed);
    double sum = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng = master.substream(static_cast<uint64_t>(trial));
        FrameProbFn random_probs = [&rng](const TsdSample& s,
                                          const std::vector<uint8_t>& labels) {
            (void)labels;
            const int64_t t = static_cast<int64_t>(s.duration * s.fps);
            std::vector<double> p(static_cast<size_t>(t));
            for (double& x : p) x = rng.uniform();
            return p;
        };
        sum += evaluate_manifest(manifest_path, samples, random_probs, cfg).f.macro_f;
    }
    return trials > 0 ? sum / trials : 0.0;
}

std::string report_to_json(const EvalReport& report, const EvalConfig& cfg) {
    json out;
    out["dataset"] = report.dataset;
    out["checkpoint_hash"] = report.checkpoint_hash;
    out["segment_length"] = cfg.segment_length;
    out["n_samples"] = report.n_samples;
    json cats = json::object();
    for (const auto& [cat, c] : report.counts.per_category) {
        cats[cat] = {{"tp", c.tp},
                     {"fp", c.fp},
                     {"fn", c.fn},
                     {"f", report.f.per_category.at(cat)}};
    }
    out["per_category"] = cats;
    out["macro_f"] = report.f.macro_f;
    if (report.clip_level.has_value()) {
        out["clip_level"] = {{"accuracy", report.clip_level->accuracy},
                             {"macro_f", report.clip_level->macro_f},
                             {"n_samples", report.clip_level->n_samples}};
    }
    return out.dump(2);
}

std::string report_to_table(const EvalReport& report) {
    std::ostringstream out;
    out << "category          tp     fp     fn      F\n";
    for (const auto& [cat, c] : report.counts.per_category) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-15s %5lld  %5lld  %5lld  %.4f\n", cat.c_str(),
                      static_cast<long long>(c.tp), static_cast<long long>(c.fp),
                      static_cast<long long>(c.fn), report.f.per_category.at(cat));
        out << line;
    }
    char macro[64];
    std::snprintf(macro, sizeof(macro), "macro F: %.4f\n", report.f.macro_f);
    out << macro;
    if (report.clip_level.has_value()) {
        char clip[96];
        std::snprintf(clip, sizeof(clip), "clip-level accuracy: %.4f  macro F: %.4f\n",
                      report.clip_level->accuracy, report.clip_level->macro_f);
        out << clip;
    }
    return out.str();
}

} // namespace tsd
