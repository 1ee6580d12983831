// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/model.hpp"

#include <cassert>
#include <cmath>
#include <sstream>

#include "tsd/common.hpp"

namespace tsd {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

uint64_t ModelConfig::hash() const { return fnv1a(serialize()); }

std::string ModelConfig::serialize() const {
    std::ostringstream out;
    out << "cond_channels=" << cond_channels[0] << ',' << cond_channels[1] << ','
        << cond_channels[2] << ',' << cond_channels[3] << '\n';
    out << "cond_pools=";
    for (int i = 0; i < 4; ++i)
        out << cond_pools[i].first << 'x' << cond_pools[i].second << (i < 3 ? "," : "\n");
    out << "embedding_dim=" << embedding_dim << '\n';
    out << "det_channels=" << det_channels[0] << ',' << det_channels[1] << ',' << det_channels[2]
        << ',' << det_channels[3] << '\n';
    out << "det_pools=";
    for (int i = 0; i < 4; ++i)
        out << det_pools[i].first << 'x' << det_pools[i].second << (i < 3 ? "," : "\n");
    out << "det_gru_hidden=" << det_gru_hidden << '\n';
    out << "det_fc_hidden=" << det_fc_hidden << '\n';
    out << "det_proj_dim=" << det_proj_dim << '\n';
    out << "fusion=" << (fusion == FusionKind::Concat ? "concat" : "multiply") << '\n';
    out << "mixture_bins=" << mixture_bins << '\n';
    out << "reference_bins=" << reference_bins << '\n';
    return out.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string line;
    auto parse_ints = [](const std::string& s) {
        std::vector<int> out;
        std::istringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
        return out;
    };
    auto parse_pools = [](const std::string& s) {
        std::array<std::pair<int, int>, 4> out{};
        std::istringstream ss(s);
        std::string item;
        int i = 0;
        while (std::getline(ss, item, ',') && i < 4) {
            auto x = item.find('x');
            out[i++] = {std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1))};
        }
        return out;
    };
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "cond_channels") {
            auto v = parse_ints(val);
            for (int i = 0; i < 4; ++i) cfg.cond_channels[i] = v[i];
        } else if (key == "cond_pools") {
            cfg.cond_pools = parse_pools(val);
        } else if (key == "embedding_dim") {
            cfg.embedding_dim = std::stoi(val);
        } else if (key == "det_channels") {
            auto v = parse_ints(val);
            for (int i = 0; i < 4; ++i) cfg.det_channels[i] = v[i];
        } else if (key == "det_pools") {
            cfg.det_pools = parse_pools(val);
        } else if (key == "det_gru_hidden") {
            cfg.det_gru_hidden = std::stoi(val);
        } else if (key == "det_fc_hidden") {
            cfg.det_fc_hidden = std::stoi(val);
        } else if (key == "det_proj_dim") {
            cfg.det_proj_dim = std::stoi(val);
        } else if (key == "fusion") {
            cfg.fusion = val == "concat" ? FusionKind::Concat : FusionKind::Multiply;
        } else if (key == "mixture_bins") {
            cfg.mixture_bins = std::stoi(val);
        } else if (key == "reference_bins") {
            cfg.reference_bins = std::stoi(val);
        }
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// ConditionalNet

ConditionalNet::ConditionalNet(const ModelConfig& cfg) : cfg_(cfg) {
    int in_ch = 1;
    for (int b = 0; b < 4; ++b) {
        const int out_ch = cfg.cond_channels[b];
        const std::string prefix = "cond.block" + std::to_string(b + 1);
        blocks_[b].conv1 = nn::Conv2d(prefix + ".conv1", in_ch, out_ch, 3);
        blocks_[b].bn1 = nn::BatchNorm2d(prefix + ".bn1", out_ch);
        blocks_[b].conv2 = nn::Conv2d(prefix + ".conv2", out_ch, out_ch, 3);
        blocks_[b].bn2 = nn::BatchNorm2d(prefix + ".bn2", out_ch);
        blocks_[b].pool = nn::AvgPool2d(cfg.cond_pools[b].first, cfg.cond_pools[b].second);
        in_ch = out_ch;
    }
    embed_head_ = nn::Linear("cond.embed", in_ch, cfg.embedding_dim);
    cls_head_ = nn::Linear("cond.cls", in_ch, std::max<int>(1, cfg.categories.size()));
}

void ConditionalNet::init_params(Rng& rng) {
    for (auto& b : blocks_) {
        b.conv1.init_params(rng);
        b.conv2.init_params(rng);
    }
    embed_head_.init_params(rng);
    cls_head_.init_params(rng);
}

std::vector<nn::Param*> ConditionalNet::params() {
    std::vector<nn::Param*> out;
    for (auto& b : blocks_) {
        b.conv1.collect(out);
        b.bn1.collect(out);
        b.conv2.collect(out);
        b.bn2.collect(out);
    }
    embed_head_.collect(out);
    cls_head_.collect(out);
    return out;
}

std::vector<nn::BatchNorm2d*> ConditionalNet::batch_norms() {
    std::vector<nn::BatchNorm2d*> out;
    for (auto& b : blocks_) {
        out.push_back(&b.bn1);
        out.push_back(&b.bn2);
    }
    return out;
}

int64_t ConditionalNet::min_frames() const {
    int64_t m = 1;
    for (int b = 0; b < 4; ++b) m *= cfg_.cond_pools[b].first;
    return m;
}

int64_t ConditionalNet::min_bins() const {
    int64_t m = 1;
    for (int b = 0; b < 4; ++b) m *= cfg_.cond_pools[b].second;
    return m;
}

ConditionalOutput ConditionalNet::forward(const FeatureMatrix& ref, bool train) {
    if (ref.t < min_frames() || ref.f < min_bins()) {
        data_error("conditional network: input " + std::to_string(ref.t) + "x" +
                   std::to_string(ref.f) + " too short for the pooling stack (needs at least " +
                   std::to_string(min_frames()) + " frames and " + std::to_string(min_bins()) +
                   " bins)");
    }
    nn::Tensor x({1, ref.t, ref.f});
    std::copy(ref.values.begin(), ref.values.end(), x.v.begin());

    for (auto& b : blocks_) {
        x = b.conv1.forward(x);
        x = b.bn1.forward(x, train);
        x = b.act1.forward(x);
        x = b.conv2.forward(x);
        x = b.bn2.forward(x, train);
        x = b.act2.forward(x);
        x = b.pool.forward(x);
    }
    nn::Tensor pooled = global_pool_.forward(x);

    ConditionalOutput out;
    out.embedding = embed_head_.forward(pooled);
    out.embedding.shape = {cfg_.embedding_dim};
    out.logits = cls_head_.forward(pooled);
    out.logits.shape = {out.logits.numel()};
    return out;
}

void ConditionalNet::backward(const nn::Tensor& d_embedding, const nn::Tensor& d_logits) {
    nn::Tensor d_pooled = embed_head_.backward(d_embedding);
    if (!d_logits.v.empty()) {
        nn::Tensor d2 = cls_head_.backward(d_logits);
        for (int64_t i = 0; i < d_pooled.numel(); ++i) d_pooled.v[i] += d2.v[i];
    }
    nn::Tensor dx = global_pool_.backward(d_pooled);
    for (int b = 3; b >= 0; --b) {
        dx = blocks_[b].pool.backward(dx);
        dx = blocks_[b].act2.backward(dx);
        dx = blocks_[b].bn2.backward(dx);
        dx = blocks_[b].conv2.backward(dx);
        dx = blocks_[b].act1.backward(dx);
        dx = blocks_[b].bn1.backward(dx);
        dx = blocks_[b].conv1.backward(dx);
    }
}

// ---------------------------------------------------------------------------
// DetectionNet

DetectionNet::DetectionNet(const ModelConfig& cfg) : cfg_(cfg) {
    const bool concat = cfg.fusion == FusionKind::Concat;
    int in_ch = 1;
    int f = cfg.mixture_bins + (concat ? cfg.embedding_dim : 0);
    time_pool_total_ = 1;
    for (int l = 0; l < 4; ++l) {
        const int out_ch = cfg.det_channels[l];
        const std::string prefix = "det.layer" + std::to_string(l + 1);
        layers_[l].conv = nn::Conv2d(prefix + ".conv", in_ch, out_ch, 3);
        layers_[l].bn = nn::BatchNorm2d(prefix + ".bn", out_ch);
        layers_[l].pool = nn::AvgPool2d(cfg.det_pools[l].first, cfg.det_pools[l].second);
        time_pool_total_ *= cfg.det_pools[l].first;
        f /= cfg.det_pools[l].second;
        in_ch = out_ch;
    }
    const int flat_dim = in_ch * f;
    int gru_in = flat_dim;
    if (!concat) {
        multiply_fuse_ = nn::MultiplyFuse("det.fuse", flat_dim, cfg.embedding_dim, cfg.det_proj_dim);
        gru_in = cfg.det_proj_dim;
    }
    gru_ = nn::BiGru("det.gru", gru_in, cfg.det_gru_hidden);
    fc1_ = nn::Linear("det.fc1", 2 * cfg.det_gru_hidden, cfg.det_fc_hidden);
    fc2_ = nn::Linear("det.fc2", cfg.det_fc_hidden, 1);
    upsample_ = nn::UpsampleNearest(time_pool_total_);
}

void DetectionNet::init_params(Rng& rng) {
    for (auto& l : layers_) l.conv.init_params(rng);
    if (cfg_.fusion == FusionKind::Multiply) multiply_fuse_.init_params(rng);
    gru_.init_params(rng);
    fc1_.init_params(rng);
    fc2_.init_params(rng);
}

std::vector<nn::Param*> DetectionNet::params() {
    std::vector<nn::Param*> out;
    for (auto& l : layers_) {
        l.conv.collect(out);
        l.bn.collect(out);
    }
    if (cfg_.fusion == FusionKind::Multiply) multiply_fuse_.collect(out);
    gru_.collect(out);
    fc1_.collect(out);
    fc2_.collect(out);
    return out;
}

std::vector<nn::BatchNorm2d*> DetectionNet::batch_norms() {
    std::vector<nn::BatchNorm2d*> out;
    for (auto& l : layers_) out.push_back(&l.bn);
    return out;
}

int64_t DetectionNet::min_frames() const { return time_pool_total_; }

DetectionOutput DetectionNet::forward(const FeatureMatrix& mix, const nn::Tensor& embedding,
                                      DetectionMode mode, bool train) {
    if (mix.t < min_frames()) {
        data_error("detection network: input of " + std::to_string(mix.t) +
                   " frames too short for time pooling (needs at least " +
                   std::to_string(min_frames()) + ")");
    }
    mode_ = mode;
    t_in_ = mix.t;

    nn::Tensor frames({mix.t, mix.f});
    std::copy(mix.values.begin(), mix.values.end(), frames.v.begin());

    nn::Tensor x;
    if (cfg_.fusion == FusionKind::Concat) {
        nn::Tensor fused = concat_fuse_.forward(frames, embedding);
        x.resize({1, fused.dim(0), fused.dim(1)});
        std::copy(fused.v.begin(), fused.v.end(), x.v.begin());
    } else {
        x.resize({1, frames.dim(0), frames.dim(1)});
        std::copy(frames.v.begin(), frames.v.end(), x.v.begin());
    }

    for (auto& l : layers_) {
        x = l.conv.forward(x);
        x = l.bn.forward(x, train);
        x = l.act.forward(x);
        x = l.pool.forward(x);
    }

    // [C, T', F'] -> [T', C*F']
    const int64_t c = x.dim(0), tp = x.dim(1), fp = x.dim(2);
    gru_t_ = tp;
    nn::Tensor flat({tp, c * fp});
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t t = 0; t < tp; ++t) {
            const double* src = x.data() + (ch * tp + t) * fp;
            double* dst = flat.data() + t * c * fp + ch * fp;
            std::copy(src, src + fp, dst);
        }
    }

    nn::Tensor seq;
    if (cfg_.fusion == FusionKind::Multiply) {
        seq = multiply_fuse_.forward(flat, embedding);
    } else {
        seq = std::move(flat);
    }

    nn::Tensor h = gru_.forward(seq);
    nn::Tensor a = fc1_.forward(h);
    a = fc1_act_.forward(a);
    nn::Tensor logits = fc2_.forward(a);
    nn::Tensor probs = out_act_.forward(logits); // [T', 1]
    nn::Tensor up = upsample_.forward(probs, t_in_);

    DetectionOutput out;
    out.frame_probs.assign(up.v.begin(), up.v.end());
    frame_probs_ = out.frame_probs;
    if (mode == DetectionMode::Weak) {
        out.clip_prob = nn::linear_softmax_pool(out.frame_probs);
#ifndef NDEBUG
        double lo = out.frame_probs[0], hi = out.frame_probs[0];
        for (double p : out.frame_probs) {
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        assert(*out.clip_prob >= lo - 1e-12 && *out.clip_prob <= hi + 1e-12);
#endif
    }
    return out;
}

nn::Tensor DetectionNet::backward(const std::vector<double>& d_frame_probs, double d_clip_prob) {
    std::vector<double> d_up = d_frame_probs;
    if (d_up.empty()) d_up.assign(static_cast<size_t>(t_in_), 0.0);
    if (mode_ == DetectionMode::Weak && d_clip_prob != 0.0) {
        std::vector<double> g = nn::linear_softmax_pool_grad(frame_probs_, d_clip_prob);
        for (size_t i = 0; i < d_up.size(); ++i) d_up[i] += g[i];
    }

    nn::Tensor d_upsampled({t_in_, 1});
    std::copy(d_up.begin(), d_up.end(), d_upsampled.v.begin());
    nn::Tensor d_probs = upsample_.backward(d_upsampled);
    nn::Tensor d_logits = out_act_.backward(d_probs);
    nn::Tensor d_a = fc2_.backward(d_logits);
    d_a = fc1_act_.backward(d_a);
    nn::Tensor d_h = fc1_.backward(d_a);
    nn::Tensor d_seq = gru_.backward(d_h);

    nn::Tensor d_flat;
    nn::Tensor d_embedding({cfg_.embedding_dim});
    if (cfg_.fusion == FusionKind::Multiply) {
        auto [df, de] = multiply_fuse_.backward(d_seq);
        d_flat = std::move(df);
        d_embedding = std::move(de);
    } else {
        d_flat = std::move(d_seq);
    }

    // [T', C*F'] -> [C, T', F']
    const int64_t tp = gru_t_;
    const int64_t cf = d_flat.dim(1);
    const int64_t c = layers_[3].conv.weight.value.dim(0);
    const int64_t fp = cf / c;
    nn::Tensor dx({c, tp, fp});
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t t = 0; t < tp; ++t) {
            const double* src = d_flat.data() + t * cf + ch * fp;
            double* dst = dx.data() + (ch * tp + t) * fp;
            std::copy(src, src + fp, dst);
        }
    }

    for (int l = 3; l >= 0; --l) {
        dx = layers_[l].pool.backward(dx);
        dx = layers_[l].act.backward(dx);
        dx = layers_[l].bn.backward(dx);
        dx = layers_[l].conv.backward(dx);
    }

    if (cfg_.fusion == FusionKind::Concat) {
        nn::Tensor d_fused({dx.dim(1), dx.dim(2)});
        std::copy(dx.v.begin(), dx.v.end(), d_fused.v.begin());
        auto [dframes, de] = concat_fuse_.backward(d_fused);
        (void)dframes;
        d_embedding = std::move(de);
    }
    return d_embedding;
}

// ---------------------------------------------------------------------------
// TsdNet

void TsdNet::init_params(uint64_t seed) {
    Rng rng(seed);
    Rng cond_rng = rng.substream(1);
    Rng det_rng = rng.substream(2);
    cond_.init_params(cond_rng);
    det_.init_params(det_rng);
}

std::vector<nn::Param*> TsdNet::all_params() {
    std::vector<nn::Param*> out = cond_.params();
    std::vector<nn::Param*> det = det_.params();
    out.insert(out.end(), det.begin(), det.end());
    return out;
}

void TsdNet::zero_grads() {
    for (nn::Param* p : all_params()) p->grad.zero();
}

// ---------------------------------------------------------------------------
// free functions

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

nn::Tensor fuse_concat(const nn::Tensor& embedding, const nn::Tensor& frames) {
    nn::ConcatFuse fuse;
    return fuse.forward(frames, embedding);
}

nn::Tensor fuse_multiply(const nn::Tensor& embedding, const nn::Tensor& frames,
                         nn::MultiplyFuse& fuse) {
    return fuse.forward(frames, embedding);
}

} // namespace tsd
