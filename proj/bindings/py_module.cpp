// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tsd/audio.hpp"
#include "tsd/checkpoint.hpp"
#include "tsd/common.hpp"
#include "tsd/config.hpp"
#include "tsd/corpus.hpp"
#include "tsd/features.hpp"
#include "tsd/losses.hpp"
#include "tsd/metrics.hpp"
#include "tsd/mixup.hpp"
#include "tsd/model.hpp"
#include "tsd/train.hpp"

namespace py = pybind11;
using namespace tsd;

namespace {

AudioClip clip_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> samples,
                          int sample_rate) {
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.source_id = "ndarray";
    clip.samples.assign(samples.data(), samples.data() + samples.size());
    return clip;
}

py::array_t<double> feature_array(const FeatureMatrix& m) {
    py::array_t<double> out({m.t, m.f});
    std::copy(m.values.begin(), m.values.end(), out.mutable_data());
    return out;
}

std::vector<PredictedEvent> events_from_list(const std::vector<std::pair<double, double>>& in) {
    std::vector<PredictedEvent> out;
    out.reserve(in.size());
    for (const auto& [onset, offset] : in) out.push_back({onset, offset});
    return out;
}

} // namespace

PYBIND11_MODULE(_tsdkit, m) {
    m.doc() = "Target sound detection workbench: feature pipelines, pooling, "
              "losses, metrics and checkpoint inference";
    m.attr("__version__") = "0.1.0";

    py::register_exception<Error>(m, "TsdError");

    m.def(
        "load_wav",
        [](const std::string& path) {
            AudioClip clip = load_wav(path);
            py::array_t<double> samples(static_cast<py::ssize_t>(clip.samples.size()));
            std::copy(clip.samples.begin(), clip.samples.end(), samples.mutable_data());
            return py::make_tuple(samples, clip.sample_rate);
        },
        py::arg("path"), "Read a wav file; returns (samples in [-1, 1], sample_rate).");

    m.def(
        "save_wav",
        [](const std::string& path,
           py::array_t<double, py::array::c_style | py::array::forcecast> samples,
           int sample_rate) { save_wav(path, clip_from_array(samples, sample_rate)); },
        py::arg("path"), py::arg("samples"), py::arg("sample_rate"),
        "Write mono 16-bit PCM.");

    m.def(
        "resample",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> samples, int sample_rate,
           int target_rate) {
            AudioClip out = resample(clip_from_array(samples, sample_rate), target_rate);
            py::array_t<double> arr(static_cast<py::ssize_t>(out.samples.size()));
            std::copy(out.samples.begin(), out.samples.end(), arr.mutable_data());
            return arr;
        },
        py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate"));

    m.def(
        "stft_magnitude",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> samples, int sample_rate,
           int window, int hop) {
            return feature_array(stft_magnitude(clip_from_array(samples, sample_rate), window, hop));
        },
        py::arg("samples"), py::arg("sample_rate"), py::arg("window") = 2048,
        py::arg("hop") = 441, "One-sided magnitude STFT, frames x bins.");

    m.def(
        "mixture_features",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> samples,
           int sample_rate) {
            FeatureMatrix f = mixture_features(clip_from_array(samples, sample_rate));
            return py::make_tuple(feature_array(f), f.frames_per_second);
        },
        py::arg("samples"), py::arg("sample_rate"),
        "64-bin log-mel features of the mixture branch; returns (features, fps).");

    m.def(
        "reference_features",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> samples,
           int sample_rate) {
            FeatureMatrix f = reference_features(clip_from_array(samples, sample_rate));
            return py::make_tuple(feature_array(f), f.frames_per_second);
        },
        py::arg("samples"), py::arg("sample_rate"),
        "Log-mel + MFCC features of the reference branch; returns (features, fps).");

    m.def(
        "linear_softmax_pool",
        [](const std::vector<double>& p) { return linear_softmax_pool(p); }, py::arg("probs"),
        "sum(p^2) / sum(p); 0 on an all-zero vector.");

    m.def("frame_bce", &frame_bce, py::arg("p_hat"), py::arg("p"),
          "Binary cross-entropy summed over frames; accepts soft targets.");
    m.def("clip_bce", &clip_bce, py::arg("p_hat"), py::arg("p"));

    m.def(
        "mixup_ratio",
        [](int64_t step, int64_t total_steps, double alpha_start, double alpha_end) {
            MixupConfig cfg;
            cfg.alpha_start = alpha_start;
            cfg.alpha_end = alpha_end;
            return mixup_ratio(step, total_steps, cfg);
        },
        py::arg("step"), py::arg("total_steps"), py::arg("alpha_start") = 0.3,
        py::arg("alpha_end") = 0.0, "Linearly decayed mixing probability.");

    m.def(
        "frame_labels",
        [](const std::vector<std::tuple<std::string, double, double>>& events,
           const std::string& target, double fps, int64_t t) {
            std::vector<EventAnnotation> anns;
            for (const auto& [cat, onset, offset] : events) anns.push_back({cat, onset, offset});
            std::vector<uint8_t> labels = frame_labels(anns, target, fps, t);
            py::array_t<uint8_t> out(static_cast<py::ssize_t>(labels.size()));
            std::copy(labels.begin(), labels.end(), out.mutable_data());
            return out;
        },
        py::arg("events"), py::arg("target"), py::arg("fps"), py::arg("t"),
        "Rasterize (category, onset, offset) events for one target category.");

    m.def(
        "binarize",
        [](const std::vector<double>& probs, double fps, double threshold, int median_window) {
            std::vector<std::pair<double, double>> out;
            for (const PredictedEvent& e : binarize(probs, fps, threshold, median_window)) {
                out.emplace_back(e.onset, e.offset);
            }
            return out;
        },
        py::arg("frame_probs"), py::arg("fps"), py::arg("threshold") = 0.5,
        py::arg("median_window") = 5, "Median-filter, threshold, and merge runs into events.");

    m.def(
        "segment_tabulate",
        [](const std::vector<std::pair<double, double>>& pred,
           const std::vector<std::pair<double, double>>& ref, double duration,
           double segment_length) {
            CategoryCounts c = segment_tabulate(events_from_list(pred), events_from_list(ref),
                                                duration, segment_length);
            return py::make_tuple(c.tp, c.fp, c.fn);
        },
        py::arg("pred"), py::arg("ref"), py::arg("duration"), py::arg("segment_length") = 1.0,
        "Per-segment activity comparison; returns (tp, fp, fn).");

    m.def(
        "f_score",
        [](int64_t tp, int64_t fp, int64_t fn) {
            return f_score(CategoryCounts{tp, fp, fn});
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"), "2tp / (2tp + fp + fn), 0 when empty.");

    m.def(
        "detect",
        [](const std::string& checkpoint, const std::string& mixture_wav,
           const std::string& reference_wav, const std::string& config_path) {
            ExperimentConfig cfg = load_config(config_path);
            TsdNet net;
            load_checkpoint(checkpoint, net, nullptr, cfg.model_hash(), config_path.empty());
            FeatureMatrix mix = mixture_features(load_wav(mixture_wav), cfg.dsp);
            FeatureMatrix ref = reference_features(load_wav(reference_wav), cfg.dsp);
            ConditionalOutput cond = net.conditional().forward(ref, false);
            DetectionOutput det =
                net.detection().forward(mix, cond.embedding, DetectionMode::Weak, false);
            py::array_t<double> probs(static_cast<py::ssize_t>(det.frame_probs.size()));
            std::copy(det.frame_probs.begin(), det.frame_probs.end(), probs.mutable_data());
            return py::make_tuple(probs, mix.frames_per_second, *det.clip_prob);
        },
        py::arg("checkpoint"), py::arg("mixture_wav"), py::arg("reference_wav"),
        py::arg("config") = std::string(),
        "Run a trained checkpoint on (mixture, reference) wavs; returns "
        "(frame_probs, fps, clip_prob). Without a config file the checkpoint's "
        "stored architecture is trusted as-is.");
}
