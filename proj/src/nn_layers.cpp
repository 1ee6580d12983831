// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/nn/layers.hpp"

#include <cmath>
#include <utility>

#include "tsd/common.hpp"

namespace tsd::nn {

namespace {

double stable_sigmoid(double x) {
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        double e = std::exp(x);
        y = e / (1.0 + e);
    }
    return std::min(1.0 - 1e-12, std::max(1e-12, y));
}

} // namespace

void fan_in_uniform(Tensor& t, int64_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(1, fan_in)));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
}

void orthogonal_init(Tensor& t, int64_t block_rows, int64_t cols, Rng& rng) {
    const int64_t n_blocks = t.numel() / (block_rows * cols);
    for (int64_t b = 0; b < n_blocks; ++b) {
        double* base = t.data() + b * block_rows * cols;
        for (int64_t i = 0; i < block_rows * cols; ++i) base[i] = rng.normal();
        // modified Gram-Schmidt over rows (block_rows <= cols assumed square here)
        for (int64_t r = 0; r < block_rows; ++r) {
            double* row = base + r * cols;
            for (int64_t p = 0; p < r; ++p) {
                const double* prev = base + p * cols;
                double dot = 0.0;
                for (int64_t c = 0; c < cols; ++c) dot += row[c] * prev[c];
                for (int64_t c = 0; c < cols; ++c) row[c] -= dot * prev[c];
            }
            double norm = 0.0;
            for (int64_t c = 0; c < cols; ++c) norm += row[c] * row[c];
            norm = std::sqrt(norm);
            if (norm < 1e-12) norm = 1.0;
            for (int64_t c = 0; c < cols; ++c) row[c] /= norm;
        }
    }
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int ksize)
    : in_ch_(in_channels), out_ch_(out_channels), k_(ksize) {
    weight.init(name + ".weight", {out_ch_, static_cast<int64_t>(in_ch_) * k_ * k_});
    bias.init(name + ".bias", {out_ch_});
}

void Conv2d::init_params(Rng& rng) {
    const int64_t fan_in = static_cast<int64_t>(in_ch_) * k_ * k_;
    fan_in_uniform(weight.value, fan_in, rng);
    fan_in_uniform(bias.value, fan_in, rng);
}

void Conv2d::collect(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

Tensor Conv2d::forward(const Tensor& x) {
    t_ = x.dim(1);
    f_ = x.dim(2);
    const int64_t kk = static_cast<int64_t>(k_) * k_;
    const int64_t cols = t_ * f_;
    const int pad = k_ / 2;

    col_.resize({in_ch_ * kk, cols});
    for (int c = 0; c < in_ch_; ++c) {
        const double* xc = x.data() + static_cast<int64_t>(c) * t_ * f_;
        for (int dt = 0; dt < k_; ++dt) {
            for (int df = 0; df < k_; ++df) {
                double* dst = col_.data() + ((static_cast<int64_t>(c) * k_ + dt) * k_ + df) * cols;
                for (int64_t t = 0; t < t_; ++t) {
                    const int64_t src_t = t + dt - pad;
                    if (src_t < 0 || src_t >= t_) {
                        std::fill(dst + t * f_, dst + (t + 1) * f_, 0.0);
                        continue;
                    }
                    const double* src_row = xc + src_t * f_;
                    double* out_row = dst + t * f_;
                    for (int64_t f = 0; f < f_; ++f) {
                        const int64_t src_f = f + df - pad;
                        out_row[f] = (src_f < 0 || src_f >= f_) ? 0.0 : src_row[src_f];
                    }
                }
            }
        }
    }

    Tensor y({out_ch_, t_, f_});
    as_mat(y, out_ch_, cols).noalias() =
        as_mat(weight.value, out_ch_, in_ch_ * kk) * as_mat(col_, in_ch_ * kk, cols);
    for (int c = 0; c < out_ch_; ++c) {
        double* yc = y.data() + static_cast<int64_t>(c) * cols;
        const double b = bias.value.v[c];
        for (int64_t i = 0; i < cols; ++i) yc[i] += b;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const int64_t kk = static_cast<int64_t>(k_) * k_;
    const int64_t cols = t_ * f_;
    const int pad = k_ / 2;

    as_mat(weight.grad, out_ch_, in_ch_ * kk).noalias() +=
        as_mat(dy, out_ch_, cols) * as_mat(col_, in_ch_ * kk, cols).transpose();
    for (int c = 0; c < out_ch_; ++c) {
        const double* dyc = dy.data() + static_cast<int64_t>(c) * cols;
        double acc = 0.0;
        for (int64_t i = 0; i < cols; ++i) acc += dyc[i];
        bias.grad.v[c] += acc;
    }

    Tensor dcol({in_ch_ * kk, cols});
    as_mat(dcol, in_ch_ * kk, cols).noalias() =
        as_mat(weight.value, out_ch_, in_ch_ * kk).transpose() * as_mat(dy, out_ch_, cols);

    Tensor dx({in_ch_, t_, f_});
    for (int c = 0; c < in_ch_; ++c) {
        double* dxc = dx.data() + static_cast<int64_t>(c) * t_ * f_;
        for (int dt = 0; dt < k_; ++dt) {
            for (int df = 0; df < k_; ++df) {
                const double* src = dcol.data() + ((static_cast<int64_t>(c) * k_ + dt) * k_ + df) * cols;
                for (int64_t t = 0; t < t_; ++t) {
                    const int64_t dst_t = t + dt - pad;
                    if (dst_t < 0 || dst_t >= t_) continue;
                    double* dst_row = dxc + dst_t * f_;
                    const double* src_row = src + t * f_;
                    for (int64_t f = 0; f < f_; ++f) {
                        const int64_t dst_f = f + df - pad;
                        if (dst_f >= 0 && dst_f < f_) dst_row[dst_f] += src_row[f];
                    }
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels) {
    gamma.init(name + ".gamma", {channels});
    beta.init(name + ".beta", {channels});
    running_mean.resize({channels});
    running_var.resize({channels});
    for (int64_t c = 0; c < channels; ++c) {
        gamma.value.v[c] = 1.0;
        running_var.v[c] = 1.0;
    }
}

void BatchNorm2d::collect(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

// Samples pass through one at a time, so normalization statistics come from
// the sample's own time x freq extent in training AND evaluation: at batch
// size 1 the running averages match no individual sample and eval-time
// accuracy collapses if they are used to normalize. Running statistics are
// still tracked in training (momentum 0.1) and serialized for diagnostics.
Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
    const int64_t c = x.dim(0);
    spatial_ = x.dim(1) * x.dim(2);
    train_mode_ = train;
    Tensor y(x.shape);
    xhat_.resize(x.shape);
    inv_std_.assign(static_cast<size_t>(c), 0.0);

    for (int64_t ch = 0; ch < c; ++ch) {
        const double* xc = x.data() + ch * spatial_;
        double* yc = y.data() + ch * spatial_;
        double* hc = xhat_.data() + ch * spatial_;
        double s = 0.0;
        for (int64_t i = 0; i < spatial_; ++i) s += xc[i];
        const double mean = s / spatial_;
        double sq = 0.0;
        for (int64_t i = 0; i < spatial_; ++i) {
            const double d = xc[i] - mean;
            sq += d * d;
        }
        const double var = sq / spatial_;
        if (train) {
            running_mean.v[ch] = (1.0 - momentum) * running_mean.v[ch] + momentum * mean;
            running_var.v[ch] = (1.0 - momentum) * running_var.v[ch] + momentum * var;
        }
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std_[ch] = inv;
        const double g = gamma.value.v[ch], b = beta.value.v[ch];
        for (int64_t i = 0; i < spatial_; ++i) {
            hc[i] = (xc[i] - mean) * inv;
            yc[i] = g * hc[i] + b;
        }
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
    const int64_t c = dy.dim(0);
    Tensor dx(dy.shape);
    for (int64_t ch = 0; ch < c; ++ch) {
        const double* dyc = dy.data() + ch * spatial_;
        const double* hc = xhat_.data() + ch * spatial_;
        double* dxc = dx.data() + ch * spatial_;
        double sum_dy = 0.0, sum_dy_h = 0.0;
        for (int64_t i = 0; i < spatial_; ++i) {
            sum_dy += dyc[i];
            sum_dy_h += dyc[i] * hc[i];
        }
        gamma.grad.v[ch] += sum_dy_h;
        beta.grad.v[ch] += sum_dy;
        const double g_inv = gamma.value.v[ch] * inv_std_[ch];
        const double mean_dy = sum_dy / spatial_;
        const double mean_dy_h = sum_dy_h / spatial_;
        for (int64_t i = 0; i < spatial_; ++i) {
            dxc[i] = g_inv * (dyc[i] - mean_dy - hc[i] * mean_dy_h);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Activation

Tensor Activation::forward(const Tensor& x) {
    x_ = x;
    Tensor y(x.shape);
    switch (kind_) {
    case Act::Relu:
        for (int64_t i = 0; i < x.numel(); ++i) y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
        break;
    case Act::LeakyRelu:
        for (int64_t i = 0; i < x.numel(); ++i) y.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.1 * x.v[i];
        break;
    case Act::Sigmoid:
        for (int64_t i = 0; i < x.numel(); ++i) y.v[i] = stable_sigmoid(x.v[i]);
        break;
    }
    y_ = y;
    return y;
}

Tensor Activation::backward(const Tensor& dy) const {
    Tensor dx(dy.shape);
    switch (kind_) {
    case Act::Relu:
        for (int64_t i = 0; i < dy.numel(); ++i) dx.v[i] = x_.v[i] > 0.0 ? dy.v[i] : 0.0;
        break;
    case Act::LeakyRelu:
        for (int64_t i = 0; i < dy.numel(); ++i) dx.v[i] = x_.v[i] > 0.0 ? dy.v[i] : 0.1 * dy.v[i];
        break;
    case Act::Sigmoid:
        for (int64_t i = 0; i < dy.numel(); ++i) dx.v[i] = dy.v[i] * y_.v[i] * (1.0 - y_.v[i]);
        break;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// AvgPool2d

Tensor AvgPool2d::forward(const Tensor& x) {
    c_ = x.dim(0);
    t_ = x.dim(1);
    f_ = x.dim(2);
    const int64_t ot = t_ / pt_, of = f_ / pf_;
    Tensor y({c_, ot, of});
    const double scale = 1.0 / (pt_ * pf_);
    for (int64_t c = 0; c < c_; ++c) {
        const double* xc = x.data() + c * t_ * f_;
        double* yc = y.data() + c * ot * of;
        for (int64_t i = 0; i < ot; ++i) {
            for (int64_t j = 0; j < of; ++j) {
                double acc = 0.0;
                for (int a = 0; a < pt_; ++a) {
                    const double* row = xc + (i * pt_ + a) * f_ + j * pf_;
                    for (int b = 0; b < pf_; ++b) acc += row[b];
                }
                yc[i * of + j] = acc * scale;
            }
        }
    }
    return y;
}

Tensor AvgPool2d::backward(const Tensor& dy) const {
    const int64_t ot = t_ / pt_, of = f_ / pf_;
    Tensor dx({c_, t_, f_});
    const double scale = 1.0 / (pt_ * pf_);
    for (int64_t c = 0; c < c_; ++c) {
        const double* dyc = dy.data() + c * ot * of;
        double* dxc = dx.data() + c * t_ * f_;
        for (int64_t i = 0; i < ot; ++i) {
            for (int64_t j = 0; j < of; ++j) {
                const double g = dyc[i * of + j] * scale;
                for (int a = 0; a < pt_; ++a) {
                    double* row = dxc + (i * pt_ + a) * f_ + j * pf_;
                    for (int b = 0; b < pf_; ++b) row[b] += g;
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// GlobalMaxAvgPool

Tensor GlobalMaxAvgPool::forward(const Tensor& x) {
    c_ = x.dim(0);
    t_ = x.dim(1);
    f_ = x.dim(2);
    spatial_ = t_ * f_;
    argmax_.assign(static_cast<size_t>(c_), 0);
    Tensor y({c_});
    for (int64_t c = 0; c < c_; ++c) {
        const double* xc = x.data() + c * spatial_;
        double best = xc[0];
        int64_t best_i = 0;
        double sum = 0.0;
        for (int64_t i = 0; i < spatial_; ++i) {
            sum += xc[i];
            if (xc[i] > best) {
                best = xc[i];
                best_i = i;
            }
        }
        argmax_[c] = best_i;
        y.v[c] = best + sum / spatial_;
    }
    return y;
}

Tensor GlobalMaxAvgPool::backward(const Tensor& dy) const {
    Tensor dx({c_, t_, f_});
    for (int64_t c = 0; c < c_; ++c) {
        double* dxc = dx.data() + c * spatial_;
        const double g = dy.v[c];
        const double mean_g = g / spatial_;
        for (int64_t i = 0; i < spatial_; ++i) dxc[i] = mean_g;
        dxc[argmax_[c]] += g;
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, int in_dim, int out_dim) : in_(in_dim), out_(out_dim) {
    weight.init(name + ".weight", {out_, in_});
    bias.init(name + ".bias", {out_});
}

void Linear::init_params(Rng& rng) {
    fan_in_uniform(weight.value, in_, rng);
    fan_in_uniform(bias.value, in_, rng);
}

void Linear::collect(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

Tensor Linear::forward(const Tensor& x) {
    rows_ = x.numel() / in_;
    x_ = x;
    Tensor y({rows_, out_});
    as_mat(y, rows_, out_).noalias() =
        as_mat(x, rows_, in_) * as_mat(weight.value, out_, in_).transpose();
    for (int64_t r = 0; r < rows_; ++r) {
        double* yr = y.data() + r * out_;
        for (int m = 0; m < out_; ++m) yr[m] += bias.value.v[m];
    }
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    as_mat(weight.grad, out_, in_).noalias() +=
        as_mat(dy, rows_, out_).transpose() * as_mat(x_, rows_, in_);
    for (int64_t r = 0; r < rows_; ++r) {
        const double* dr = dy.data() + r * out_;
        for (int m = 0; m < out_; ++m) bias.grad.v[m] += dr[m];
    }
    Tensor dx({rows_, in_});
    as_mat(dx, rows_, in_).noalias() = as_mat(dy, rows_, out_) * as_mat(weight.value, out_, in_);
    return dx;
}

// ---------------------------------------------------------------------------
// GruDirection

GruDirection::GruDirection(std::string name, int in_dim, int hidden, bool reverse)
    : in_(in_dim), hidden_(hidden), reverse_(reverse) {
    w_ih.init(name + ".w_ih", {3 * hidden_, in_});
    w_hh.init(name + ".w_hh", {3 * hidden_, hidden_});
    b_ih.init(name + ".b_ih", {3 * hidden_});
    b_hh.init(name + ".b_hh", {3 * hidden_});
}

void GruDirection::init_params(Rng& rng) {
    fan_in_uniform(w_ih.value, in_, rng);
    orthogonal_init(w_hh.value, hidden_, hidden_, rng);
    fan_in_uniform(b_ih.value, hidden_, rng);
    fan_in_uniform(b_hh.value, hidden_, rng);
}

void GruDirection::collect(std::vector<Param*>& out) {
    out.push_back(&w_ih);
    out.push_back(&w_hh);
    out.push_back(&b_ih);
    out.push_back(&b_hh);
}

Tensor GruDirection::forward(const Tensor& x) {
    t_ = x.dim(0);
    x_ = x;
    const int H = hidden_;

    // input projections for all steps in one product
    Tensor a({t_, 3 * H});
    as_mat(a, t_, 3 * H).noalias() = as_mat(x, t_, in_) * as_mat(w_ih.value, 3 * H, in_).transpose();
    for (int64_t t = 0; t < t_; ++t) {
        double* at = a.data() + t * 3 * H;
        for (int i = 0; i < 3 * H; ++i) at[i] += b_ih.value.v[i];
    }

    h_.resize({t_, H});
    r_.resize({t_, H});
    z_.resize({t_, H});
    n_.resize({t_, H});
    m_.resize({t_, H});

    AlignedDoubles h_prev(static_cast<size_t>(H), 0.0);
    AlignedDoubles gh(static_cast<size_t>(3 * H));
    ConstMatMap whh = as_mat(std::as_const(w_hh.value), 3 * H, H);

    for (int64_t step = 0; step < t_; ++step) {
        const int64_t t = reverse_ ? t_ - 1 - step : step;
        ConstVecMap hp(h_prev.data(), H);
        VecMap(gh.data(), 3 * H).noalias() = whh * hp;
        const double* at = a.data() + t * 3 * H;
        double* rs = r_.data() + step * H;
        double* zs = z_.data() + step * H;
        double* ns = n_.data() + step * H;
        double* ms = m_.data() + step * H;
        double* hs = h_.data() + step * H;
        for (int i = 0; i < H; ++i) {
            rs[i] = stable_sigmoid(at[i] + gh[i] + b_hh.value.v[i]);
            zs[i] = stable_sigmoid(at[H + i] + gh[H + i] + b_hh.value.v[H + i]);
            ms[i] = gh[2 * H + i] + b_hh.value.v[2 * H + i];
            ns[i] = std::tanh(at[2 * H + i] + rs[i] * ms[i]);
            hs[i] = (1.0 - zs[i]) * ns[i] + zs[i] * h_prev[i];
        }
        std::copy(hs, hs + H, h_prev.begin());
    }

    Tensor y({t_, H});
    for (int64_t step = 0; step < t_; ++step) {
        const int64_t t = reverse_ ? t_ - 1 - step : step;
        std::copy(h_.data() + step * H, h_.data() + (step + 1) * H, y.data() + t * H);
    }
    return y;
}

Tensor GruDirection::backward(const Tensor& dy) {
    const int H = hidden_;
    Tensor da({t_, 3 * H}); // grads of the input projections, time order
    Tensor dx({t_, in_});

    AlignedDoubles dh_next(static_cast<size_t>(H), 0.0);
    AlignedDoubles dghh(static_cast<size_t>(3 * H));
    ConstMatMap whh = as_mat(std::as_const(w_hh.value), 3 * H, H);
    MatMap dwhh = as_mat(w_hh.grad, 3 * H, H);

    for (int64_t step = t_ - 1; step >= 0; --step) {
        const int64_t t = reverse_ ? t_ - 1 - step : step;
        const double* rs = r_.data() + step * H;
        const double* zs = z_.data() + step * H;
        const double* ns = n_.data() + step * H;
        const double* ms = m_.data() + step * H;
        const double* hprev = step > 0 ? h_.data() + (step - 1) * H : nullptr;

        double* dat = da.data() + t * 3 * H;
        for (int i = 0; i < H; ++i) {
            const double hp = hprev ? hprev[i] : 0.0;
            const double dh = dy.v[t * H + i] + dh_next[i];
            const double dn = dh * (1.0 - zs[i]);
            const double dz = dh * (hp - ns[i]);
            const double dan = dn * (1.0 - ns[i] * ns[i]);
            const double dr = dan * ms[i];
            const double dm = dan * rs[i];
            const double dar = dr * rs[i] * (1.0 - rs[i]);
            const double daz = dz * zs[i] * (1.0 - zs[i]);
            dat[i] = dar;
            dat[H + i] = daz;
            dat[2 * H + i] = dan;
            dghh[i] = dar;
            dghh[H + i] = daz;
            dghh[2 * H + i] = dm;
            dh_next[i] = dh * zs[i]; // direct path; recurrent-matrix path added below
            b_hh.grad.v[i] += dar;
            b_hh.grad.v[H + i] += daz;
            b_hh.grad.v[2 * H + i] += dm;
        }
        // dW_hh += dghh  (x) h_prev ; dh_prev += W_hh^T dghh
        if (hprev != nullptr) {
            ConstVecMap hp(hprev, H);
            ConstVecMap g(dghh.data(), 3 * H);
            dwhh.noalias() += g * hp.transpose();
            Eigen::VectorXd add = whh.transpose() * g;
            for (int i = 0; i < H; ++i) dh_next[i] += add[i];
        }
        // at step 0 h_prev = 0: no weight contribution, no propagation
    }

    as_mat(w_ih.grad, 3 * H, in_).noalias() +=
        as_mat(da, t_, 3 * H).transpose() * as_mat(x_, t_, in_);
    for (int64_t t = 0; t < t_; ++t) {
        const double* dat = da.data() + t * 3 * H;
        for (int i = 0; i < 3 * H; ++i) b_ih.grad.v[i] += dat[i];
    }
    as_mat(dx, t_, in_).noalias() = as_mat(da, t_, 3 * H) * as_mat(w_ih.value, 3 * H, in_);
    return dx;
}

// ---------------------------------------------------------------------------
// BiGru

BiGru::BiGru(std::string name, int in_dim, int hidden)
    : hidden_(hidden),
      fwd_(name + ".fwd", in_dim, hidden, false),
      bwd_(name + ".bwd", in_dim, hidden, true) {}

void BiGru::init_params(Rng& rng) {
    fwd_.init_params(rng);
    bwd_.init_params(rng);
}

void BiGru::collect(std::vector<Param*>& out) {
    fwd_.collect(out);
    bwd_.collect(out);
}

Tensor BiGru::forward(const Tensor& x) {
    const int64_t t = x.dim(0);
    Tensor yf = fwd_.forward(x);
    Tensor yb = bwd_.forward(x);
    Tensor y({t, 2 * hidden_});
    for (int64_t i = 0; i < t; ++i) {
        std::copy(yf.data() + i * hidden_, yf.data() + (i + 1) * hidden_, y.data() + i * 2 * hidden_);
        std::copy(yb.data() + i * hidden_, yb.data() + (i + 1) * hidden_,
                  y.data() + i * 2 * hidden_ + hidden_);
    }
    return y;
}

Tensor BiGru::backward(const Tensor& dy) {
    const int64_t t = dy.dim(0);
    Tensor df({t, hidden_}), db({t, hidden_});
    for (int64_t i = 0; i < t; ++i) {
        std::copy(dy.data() + i * 2 * hidden_, dy.data() + i * 2 * hidden_ + hidden_,
                  df.data() + i * hidden_);
        std::copy(dy.data() + i * 2 * hidden_ + hidden_, dy.data() + (i + 1) * 2 * hidden_,
                  db.data() + i * hidden_);
    }
    Tensor dxf = fwd_.backward(df);
    Tensor dxb = bwd_.backward(db);
    for (int64_t i = 0; i < dxf.numel(); ++i) dxf.v[i] += dxb.v[i];
    return dxf;
}

// ---------------------------------------------------------------------------
// UpsampleNearest

Tensor UpsampleNearest::forward(const Tensor& x, int64_t target_len) {
    in_len_ = x.dim(0);
    width_ = x.numel() / in_len_;
    out_len_ = target_len;
    Tensor y({out_len_, width_});
    for (int64_t i = 0; i < out_len_; ++i) {
        const int64_t src = std::min(i / factor_, in_len_ - 1);
        std::copy(x.data() + src * width_, x.data() + (src + 1) * width_, y.data() + i * width_);
    }
    return y;
}

Tensor UpsampleNearest::backward(const Tensor& dy) const {
    Tensor dx({in_len_, width_});
    for (int64_t i = 0; i < out_len_; ++i) {
        const int64_t src = std::min(i / factor_, in_len_ - 1);
        const double* d = dy.data() + i * width_;
        double* o = dx.data() + src * width_;
        for (int64_t j = 0; j < width_; ++j) o[j] += d[j];
    }
    return dx;
}

// ---------------------------------------------------------------------------
// ConcatFuse

Tensor ConcatFuse::forward(const Tensor& frames, const Tensor& embedding) {
    t_ = frames.dim(0);
    d_ = frames.dim(1);
    e_ = embedding.numel();
    Tensor y({t_, d_ + e_});
    for (int64_t i = 0; i < t_; ++i) {
        std::copy(frames.data() + i * d_, frames.data() + (i + 1) * d_, y.data() + i * (d_ + e_));
        std::copy(embedding.data(), embedding.data() + e_, y.data() + i * (d_ + e_) + d_);
    }
    return y;
}

std::pair<Tensor, Tensor> ConcatFuse::backward(const Tensor& dy) const {
    Tensor dframes({t_, d_});
    Tensor de({e_});
    for (int64_t i = 0; i < t_; ++i) {
        const double* row = dy.data() + i * (d_ + e_);
        std::copy(row, row + d_, dframes.data() + i * d_);
        for (int64_t j = 0; j < e_; ++j) de.v[j] += row[d_ + j];
    }
    return {std::move(dframes), std::move(de)};
}

// ---------------------------------------------------------------------------
// MultiplyFuse

MultiplyFuse::MultiplyFuse(std::string name, int frame_dim, int embed_dim, int proj_dim)
    : frame_dim_(frame_dim), embed_dim_(embed_dim), proj_dim_(proj_dim) {
    proj_time_w.init(name + ".proj_time.weight", {proj_dim_, frame_dim_});
    proj_time_b.init(name + ".proj_time.bias", {proj_dim_});
    proj_embed_w.init(name + ".proj_embed.weight", {proj_dim_, embed_dim_});
    proj_embed_b.init(name + ".proj_embed.bias", {proj_dim_});
}

void MultiplyFuse::init_params(Rng& rng) {
    fan_in_uniform(proj_time_w.value, frame_dim_, rng);
    fan_in_uniform(proj_time_b.value, frame_dim_, rng);
    fan_in_uniform(proj_embed_w.value, embed_dim_, rng);
    fan_in_uniform(proj_embed_b.value, embed_dim_, rng);
}

void MultiplyFuse::collect(std::vector<Param*>& out) {
    out.push_back(&proj_time_w);
    out.push_back(&proj_time_b);
    out.push_back(&proj_embed_w);
    out.push_back(&proj_embed_b);
}

Tensor MultiplyFuse::forward(const Tensor& frames, const Tensor& embedding) {
    t_ = frames.dim(0);
    frames_ = frames;
    embedding_ = embedding;

    u_.resize({t_, proj_dim_});
    as_mat(u_, t_, proj_dim_).noalias() =
        as_mat(frames, t_, frame_dim_) * as_mat(proj_time_w.value, proj_dim_, frame_dim_).transpose();
    for (int64_t i = 0; i < t_; ++i) {
        double* row = u_.data() + i * proj_dim_;
        for (int j = 0; j < proj_dim_; ++j) row[j] += proj_time_b.value.v[j];
    }

    v_.resize({proj_dim_});
    as_vec(v_).noalias() =
        as_mat(proj_embed_w.value, proj_dim_, embed_dim_) * as_vec(embedding);
    for (int j = 0; j < proj_dim_; ++j) v_.v[j] += proj_embed_b.value.v[j];

    Tensor y({t_, proj_dim_});
    for (int64_t i = 0; i < t_; ++i) {
        const double* ur = u_.data() + i * proj_dim_;
        double* yr = y.data() + i * proj_dim_;
        for (int j = 0; j < proj_dim_; ++j) yr[j] = ur[j] * v_.v[j];
    }
    return y;
}

std::pair<Tensor, Tensor> MultiplyFuse::backward(const Tensor& dy) {
    Tensor du({t_, proj_dim_});
    Tensor dv({proj_dim_});
    for (int64_t i = 0; i < t_; ++i) {
        const double* dyr = dy.data() + i * proj_dim_;
        const double* ur = u_.data() + i * proj_dim_;
        double* dur = du.data() + i * proj_dim_;
        for (int j = 0; j < proj_dim_; ++j) {
            dur[j] = dyr[j] * v_.v[j];
            dv.v[j] += dyr[j] * ur[j];
        }
    }

    as_mat(proj_time_w.grad, proj_dim_, frame_dim_).noalias() +=
        as_mat(du, t_, proj_dim_).transpose() * as_mat(frames_, t_, frame_dim_);
    for (int64_t i = 0; i < t_; ++i) {
        const double* dur = du.data() + i * proj_dim_;
        for (int j = 0; j < proj_dim_; ++j) proj_time_b.grad.v[j] += dur[j];
    }
    Tensor dframes({t_, frame_dim_});
    as_mat(dframes, t_, frame_dim_).noalias() =
        as_mat(du, t_, proj_dim_) * as_mat(proj_time_w.value, proj_dim_, frame_dim_);

    as_mat(proj_embed_w.grad, proj_dim_, embed_dim_).noalias() +=
        as_vec(dv) * as_vec(embedding_).transpose();
    for (int j = 0; j < proj_dim_; ++j) proj_embed_b.grad.v[j] += dv.v[j];
    Tensor de({embed_dim_});
    as_vec(de).noalias() =
        as_mat(proj_embed_w.value, proj_dim_, embed_dim_).transpose() * as_vec(dv);
    return {std::move(dframes), std::move(de)};
}

// ---------------------------------------------------------------------------
// linear softmax pooling

double linear_softmax_pool(const std::vector<double>& p) {
    double num = 0.0, den = 0.0;
    for (double x : p) {
        num += x * x;
        den += x;
    }
    return den > 0.0 ? num / den : 0.0;
}

std::vector<double> linear_softmax_pool_grad(const std::vector<double>& p, double upstream) {
    std::vector<double> g(p.size(), 0.0);
    double num = 0.0, den = 0.0;
    for (double x : p) {
        num += x * x;
        den += x;
    }
    if (den <= 0.0) return g;
    const double pooled = num / den;
    for (size_t i = 0; i < p.size(); ++i) {
        g[i] = upstream * (2.0 * p[i] - pooled) / den;
    }
    return g;
}

} // namespace tsd::nn
