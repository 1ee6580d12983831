// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsd/features.hpp"
#include "tsd/nn/layers.hpp"
#include "tsd/nn/tensor.hpp"
#include "tsd/rng.hpp"

namespace tsd {

enum class FusionKind { Concat, Multiply };
enum class DetectionMode { Strong, Weak };

/// Network architecture. Defaults are the full-size model; tests and
/// desk-scale runs shrink channels/pools through the config file.
struct ModelConfig {
    std::array<int, 4> cond_channels = {64, 128, 256, 512};
    std::array<std::pair<int, int>, 4> cond_pools = {{{2, 2}, {2, 2}, {2, 2}, {2, 2}}};
    int embedding_dim = 128;

    std::array<int, 4> det_channels = {32, 64, 128, 128};
    std::array<std::pair<int, int>, 4> det_pools = {{{1, 2}, {2, 2}, {2, 2}, {1, 2}}};
    int det_gru_hidden = 128;
    int det_fc_hidden = 256;
    int det_proj_dim = 128;
    FusionKind fusion = FusionKind::Multiply;

    int mixture_bins = 64;   // frame width of the mixture branch
    int reference_bins = 84; // frame width of the reference branch
    std::vector<std::string> categories;

    uint64_t hash() const;       // architecture + feature widths (not categories)
    std::string serialize() const;
    static ModelConfig deserialize(const std::string& text);
};

struct ConditionalOutput {
    nn::Tensor embedding; // [embedding_dim]
    nn::Tensor logits;    // [n_categories]
};

struct DetectionOutput {
    std::vector<double> frame_probs;  // strictly inside (0, 1)
    std::optional<double> clip_prob;  // weak mode only
};

/// VGG-style conditional network: 4 blocks of two 3x3 convolutions with
/// batch norm + ReLU and average pooling, global max+avg pooling, then an
/// embedding head and a classification head side by side.
class ConditionalNet {
public:
    ConditionalNet() = default;
    explicit ConditionalNet(const ModelConfig& cfg);

    void init_params(Rng& rng);
    std::vector<nn::Param*> params();

    ConditionalOutput forward(const FeatureMatrix& ref, bool train);
    void backward(const nn::Tensor& d_embedding, const nn::Tensor& d_logits);

    /// Minimum input length imposed by the pooling stack.
    int64_t min_frames() const;
    int64_t min_bins() const;

    std::vector<nn::BatchNorm2d*> batch_norms();

private:
    ModelConfig cfg_;
    struct Block {
        nn::Conv2d conv1, conv2;
        nn::BatchNorm2d bn1, bn2;
        nn::Activation act1{nn::Act::Relu}, act2{nn::Act::Relu};
        nn::AvgPool2d pool;
    };
    std::array<Block, 4> blocks_;
    nn::GlobalMaxAvgPool global_pool_;
    nn::Linear embed_head_;
    nn::Linear cls_head_;
};

/// Detection network: conditional embedding fused with the mixture features
/// (concatenation at the input or multiplicative projection after the conv
/// stack), conv stack, bidirectional GRU, two fully-connected layers with a
/// sigmoid output per frame, and linear-softmax pooling for the weak head.
class DetectionNet {
public:
    DetectionNet() = default;
    explicit DetectionNet(const ModelConfig& cfg);

    void init_params(Rng& rng);
    std::vector<nn::Param*> params();

    DetectionOutput forward(const FeatureMatrix& mix, const nn::Tensor& embedding,
                            DetectionMode mode, bool train);
    /// Returns the gradient wrt the conditional embedding.
    nn::Tensor backward(const std::vector<double>& d_frame_probs, double d_clip_prob);

    int64_t min_frames() const;

    std::vector<nn::BatchNorm2d*> batch_norms();

private:
    ModelConfig cfg_;
    struct Layer {
        nn::Conv2d conv;
        nn::BatchNorm2d bn;
        nn::Activation act{nn::Act::LeakyRelu};
        nn::AvgPool2d pool;
    };
    std::array<Layer, 4> layers_;
    nn::ConcatFuse concat_fuse_;
    nn::MultiplyFuse multiply_fuse_;
    nn::BiGru gru_;
    nn::Linear fc1_;
    nn::Activation fc1_act_{nn::Act::LeakyRelu};
    nn::Linear fc2_;
    nn::Activation out_act_{nn::Act::Sigmoid};
    nn::UpsampleNearest upsample_;

    int time_pool_total_ = 1;
    int64_t t_in_ = 0;
    int64_t gru_t_ = 0;
    std::vector<double> frame_probs_; // post-upsample, cached for weak backward
    DetectionMode mode_ = DetectionMode::Strong;
};

/// The whole trainable state: conditional + detection networks plus config.
class TsdNet {
public:
    TsdNet() = default;
    explicit TsdNet(const ModelConfig& cfg) : cfg_(cfg), cond_(cfg), det_(cfg) {}

    void init_params(uint64_t seed);

    ModelConfig& config() { return cfg_; }
    const ModelConfig& config() const { return cfg_; }
    ConditionalNet& conditional() { return cond_; }
    DetectionNet& detection() { return det_; }

    std::vector<nn::Param*> all_params();
    void zero_grads();

private:
    ModelConfig cfg_;
    ConditionalNet cond_;
    DetectionNet det_;
};

/// Softmax of a logit vector; sums to 1.
std::vector<double> softmax(const std::vector<double>& logits);

/// Append the embedding to every frame: [t, d], [e] -> [t, d + e].
nn::Tensor fuse_concat(const nn::Tensor& embedding, const nn::Tensor& frames);

/// Project both inputs to proj_dim and multiply, broadcasting the embedding
/// over time. Projection parameters live in `fuse`.
nn::Tensor fuse_multiply(const nn::Tensor& embedding, const nn::Tensor& frames,
                         nn::MultiplyFuse& fuse);

using nn::linear_softmax_pool;

} // namespace tsd
