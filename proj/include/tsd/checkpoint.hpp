// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "tsd/model.hpp"
#include "tsd/nn/tensor.hpp"

namespace tsd {

/// Adam with bias-corrected first/second moments, beta (0.9, 0.999),
/// eps 1e-8. Moments are keyed by parameter name so they survive the
/// checkpoint round trip.
class Adam {
public:
    Adam() = default;
    explicit Adam(double lr) : lr_(lr) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    int64_t step_count() const { return step_; }

    void step(const std::vector<nn::Param*>& params);

    std::map<std::string, std::pair<nn::Tensor, nn::Tensor>>& moments() { return moments_; }
    void set_step_count(int64_t s) { step_ = s; }

private:
    double lr_ = 1e-3;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    int64_t step_ = 0;
    std::map<std::string, std::pair<nn::Tensor, nn::Tensor>> moments_; // name -> (m, v)
};

/// Scale all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_grad_norm(const std::vector<nn::Param*>& params, double max_norm);

struct CheckpointMeta {
    std::string stage;     // pretrain-conditional | train-detection | joint-finetune
    uint64_t model_hash = 0;
    uint64_t seed = 0;
    std::vector<std::string> categories;
    std::string model_config;
    int epoch = 0;
    double val_metric = -1.0;
};

/// Versioned checkpoint container: JSON header (version, stage, config hash,
/// categories, serialized model config, array directory) followed by raw
/// 32-bit float data for every parameter, batch-norm statistic and optimizer
/// moment.
void save_checkpoint(const std::string& path, TsdNet& net, Adam* optimizer,
                     const CheckpointMeta& meta);

/// Rebuilds the network from the stored model config. Refuses to load when
/// expected_model_hash differs from the stored hash unless allow_mismatch.
CheckpointMeta load_checkpoint(const std::string& path, TsdNet& net, Adam* optimizer,
                               uint64_t expected_model_hash, bool allow_mismatch = false);

/// Stage-tag helpers for the CLI's stage-order checks.
CheckpointMeta peek_checkpoint(const std::string& path);

} // namespace tsd
