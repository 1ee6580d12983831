// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "tsd/nn/tensor.hpp"
#include "tsd/rng.hpp"

namespace tsd::nn {

/// Layers store their forward activations, so one layer instance supports one
/// in-flight forward/backward pair. Parameter gradients accumulate until
/// zero_grads() on the owning net.

/// 2-D convolution, stride 1, zero padding k/2, square kernel. Input and
/// output are channels x time x freq.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int in_channels, int out_channels, int ksize);

    void init_params(Rng& rng);
    void collect(std::vector<Param*>& out);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

    Param weight; // [C_out, C_in * k * k]
    Param bias;   // [C_out]

private:
    int in_ch_ = 0, out_ch_ = 0, k_ = 3;
    Tensor col_; // [C_in*k*k, T*F]
    int64_t t_ = 0, f_ = 0;
};

/// Per-channel batch normalization over the sample's time x freq extent,
/// running statistics (momentum 0.1) used at evaluation.
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(std::string name, int channels);

    void collect(std::vector<Param*>& out);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& dy);

    Param gamma;
    Param beta;
    Tensor running_mean; // buffers, not trained
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;

private:
    bool train_mode_ = false;
    Tensor xhat_;
    std::vector<double> inv_std_;
    int64_t spatial_ = 0;
};

enum class Act { Relu, LeakyRelu, Sigmoid };

/// Elementwise activation. LeakyReLU slope 0.1. Sigmoid output is clamped
/// into (0, 1) by 1e-12 so downstream logs stay finite.
class Activation {
public:
    Activation() = default;
    explicit Activation(Act kind) : kind_(kind) {}

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    Act kind_ = Act::Relu;
    Tensor x_;
    Tensor y_;
};

/// Average pooling with independent time/freq factors; trailing rows/cols
/// that do not fill a window are dropped.
class AvgPool2d {
public:
    AvgPool2d() = default;
    AvgPool2d(int pool_t, int pool_f) : pt_(pool_t), pf_(pool_f) {}

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

    int pool_t() const { return pt_; }
    int pool_f() const { return pf_; }

private:
    int pt_ = 2, pf_ = 2;
    int64_t c_ = 0, t_ = 0, f_ = 0;
};

/// Global max pooling plus global average pooling over time x freq, summed
/// per channel: [C, T, F] -> [C].
class GlobalMaxAvgPool {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    std::vector<int64_t> argmax_;
    int64_t c_ = 0, t_ = 0, f_ = 0, spatial_ = 0;
};

/// Fully connected layer over row vectors: [N, D] -> [N, M].
class Linear {
public:
    Linear() = default;
    Linear(std::string name, int in_dim, int out_dim);

    void init_params(Rng& rng);
    void collect(std::vector<Param*>& out);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

    Param weight; // [M, D]
    Param bias;   // [M]

private:
    int in_ = 0, out_ = 0;
    Tensor x_;
    int64_t rows_ = 0;
};

/// Single-direction gated recurrent layer (reset/update/new gates, the
/// recurrent candidate bias inside the reset product).
class GruDirection {
public:
    GruDirection() = default;
    GruDirection(std::string name, int in_dim, int hidden, bool reverse);

    void init_params(Rng& rng);
    void collect(std::vector<Param*>& out);

    Tensor forward(const Tensor& x); // [T, D] -> [T, H]
    Tensor backward(const Tensor& dy);

    Param w_ih; // [3H, D]
    Param w_hh; // [3H, H]
    Param b_ih; // [3H]
    Param b_hh; // [3H]

private:
    int in_ = 0, hidden_ = 0;
    bool reverse_ = false;
    Tensor x_;
    Tensor h_;              // [T, H], in iteration order
    Tensor r_, z_, n_, m_;  // gate activations per step, iteration order
    int64_t t_ = 0;
};

/// Bidirectional GRU: forward and reverse passes concatenated, [T, D] -> [T, 2H].
class BiGru {
public:
    BiGru() = default;
    BiGru(std::string name, int in_dim, int hidden);

    void init_params(Rng& rng);
    void collect(std::vector<Param*>& out);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

    int hidden() const { return hidden_; }

private:
    int hidden_ = 0;
    GruDirection fwd_;
    GruDirection bwd_;
};

/// Nearest-neighbour upsampling along time to a target length:
/// out[i] = in[min(i / factor, T - 1)].
class UpsampleNearest {
public:
    UpsampleNearest() = default;
    explicit UpsampleNearest(int factor) : factor_(factor) {}

    Tensor forward(const Tensor& x, int64_t target_len);
    Tensor backward(const Tensor& dy) const;

private:
    int factor_ = 1;
    int64_t in_len_ = 0, out_len_ = 0, width_ = 0;
};

/// Repeat-concatenate a vector onto every row: [T, D], [E] -> [T, D+E].
class ConcatFuse {
public:
    Tensor forward(const Tensor& frames, const Tensor& embedding);
    std::pair<Tensor, Tensor> backward(const Tensor& dy) const; // (dframes, dembedding)

private:
    int64_t t_ = 0, d_ = 0, e_ = 0;
};

/// Project frames and embedding to a common width with 1-D convolutions
/// (kernel size 1) and fuse by elementwise product broadcast over time.
class MultiplyFuse {
public:
    MultiplyFuse() = default;
    MultiplyFuse(std::string name, int frame_dim, int embed_dim, int proj_dim);

    void init_params(Rng& rng);
    void collect(std::vector<Param*>& out);

    Tensor forward(const Tensor& frames, const Tensor& embedding);
    std::pair<Tensor, Tensor> backward(const Tensor& dy); // (dframes, dembedding)

    Param proj_time_w;  // [d', D]
    Param proj_time_b;  // [d']
    Param proj_embed_w; // [d', E]
    Param proj_embed_b; // [d']

private:
    int frame_dim_ = 0, embed_dim_ = 0, proj_dim_ = 0;
    Tensor frames_, embedding_, u_, v_;
    int64_t t_ = 0;
};

/// Linear softmax pooling: sum(p^2) / sum(p), 0 on an all-zero vector.
double linear_softmax_pool(const std::vector<double>& p);

/// Gradient of linear_softmax_pool: d/dp_i = (2 p_i - P) / sum(p).
std::vector<double> linear_softmax_pool_grad(const std::vector<double>& p, double upstream);

/// Fill a [rows, cols] parameter with fan-in-scaled uniform values.
void fan_in_uniform(Tensor& t, int64_t fan_in, Rng& rng);

/// Orthogonalize square blocks of rows (Gram-Schmidt on seeded normals).
void orthogonal_init(Tensor& t, int64_t block_rows, int64_t cols, Rng& rng);

} // namespace tsd::nn
