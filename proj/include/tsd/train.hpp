// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsd/checkpoint.hpp"
#include "tsd/config.hpp"
#include "tsd/corpus.hpp"
#include "tsd/features.hpp"
#include "tsd/metrics.hpp"
#include "tsd/model.hpp"

namespace tsd {

/// Lazily extracts and caches per-clip features (in memory, plus the
/// optional versioned disk cache from the dsp config).
class FeatureStore {
public:
    FeatureStore(DspConfig dsp, std::string base_dir);

    const FeatureMatrix& mixture(const std::string& rel_path);
    const FeatureMatrix& reference(const std::string& rel_path);

    const DspConfig& dsp() const { return dsp_; }

private:
    const FeatureMatrix& get(const std::string& rel_path, bool is_mixture);

    DspConfig dsp_;
    std::string base_dir_;
    uint64_t dsp_hash_ = 0;
    std::map<std::string, FeatureMatrix> mixture_cache_;
    std::map<std::string, FeatureMatrix> reference_cache_;
};

struct StageResult {
    std::string best_checkpoint;
    std::string final_checkpoint;
    double best_val_metric = -1.0;
    int best_epoch = -1;
    double init_val_metric = -1.0; // metric of the init checkpoint (finetune)
    double final_val_metric = -1.0;
};

/// Train the conditional network's classification head (and trunk) on the
/// clip bank; validation accuracy picks the kept checkpoint.
StageResult pretrain_conditional(const ClipBank& bank, const std::string& bank_dir,
                                 const ExperimentConfig& cfg, const std::string& out_dir);

/// Train the detection network with the conditional network frozen;
/// per-epoch checkpoints, best selected by validation segment-F (strong)
/// or clip-F (weak).
StageResult train_detection(const std::string& train_manifest, const std::string& val_manifest,
                            const std::string& init_checkpoint, const ExperimentConfig& cfg,
                            const std::string& out_dir);

/// Multi-task fine-tuning: conditional network unfrozen, total loss is the
/// detection loss plus the reference-classification cross-entropy.
StageResult joint_finetune(const std::string& train_manifest, const std::string& val_manifest,
                           const std::string& init_checkpoint, const ExperimentConfig& cfg,
                           const std::string& out_dir);

/// Frame-probability adapter for a trained network (evaluation mode).
FrameProbFn model_prob_fn(TsdNet& net, FeatureStore& store);

/// Evaluate a checkpoint (or a test oracle name: "oracle", "constant:<p>",
/// "random:<seed>") against a manifest.
EvalReport evaluate_checkpoint(const std::string& checkpoint_or_oracle,
                               const std::string& manifest_path, const ExperimentConfig& cfg,
                               bool allow_config_mismatch = false);

/// Validation metric used for model selection on this manifest.
double validation_metric(TsdNet& net, FeatureStore& store, const std::string& manifest_path,
                         const std::vector<TsdSample>& samples, const ExperimentConfig& cfg);

/// Throws a divergence error naming the first parameter whose gradient is
/// not finite. Runs after every backward pass in the training loops.
void assert_gradients_finite(const std::vector<nn::Param*>& params);

} // namespace tsd
