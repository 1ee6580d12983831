// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tsd/corpus.hpp"
#include "tsd/features.hpp"
#include "tsd/metrics.hpp"
#include "tsd/mixup.hpp"
#include "tsd/model.hpp"

namespace tsd {

enum class MixupMode { Off, Fixed, Linear };

struct TrainSettings {
    int batch_size = 32;
    uint64_t seed = 1;
    double pretrain_lr = 1e-3;
    int pretrain_epochs = 50;
    double detect_lr = 1e-3;
    int detect_epochs = 100;
    double finetune_lr = 1e-4;
    int finetune_epochs = 30;
    MixupMode mixup = MixupMode::Linear;
    double mixup_fixed_ratio = 0.2;
    MixupConfig mixup_cfg;
    double grad_clip = 5.0;
    std::string supervision = "strong"; // strong | weak
};

struct CorpusSettings {
    CorpusParams params;
    int toy_categories = 10;
    int toy_clips_per_category = 20;
    DatasetSizes sizes{100, 30, 30};
};

/// The resolved experiment configuration: flat-section key/value text file
/// merged with CLI overrides, every key validated against the schema,
/// unknown keys rejected.
struct ExperimentConfig {
    DspConfig dsp;
    CorpusSettings corpus;
    ModelConfig model;
    TrainSettings training;
    EvalConfig eval;

    /// Canonical text form (sorted sections and keys); what gets echoed into
    /// experiment directories and hashed.
    std::string canonical() const;
    uint64_t config_hash() const;
    /// Hash of the [dsp] + [model] sections; checkpoints refuse to load when
    /// it differs unless overridden.
    uint64_t model_hash() const;
};

/// Parse an INI-style file ("" for defaults only) and apply overrides of the
/// form "section.key=value". Throws config errors on unknown keys, malformed
/// lines or out-of-range values.
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides = {});

} // namespace tsd
