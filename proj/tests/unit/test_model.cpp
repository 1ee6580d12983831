// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gradcheck.hpp"
#include "tiny_model.hpp"
#include "tsd/checkpoint.hpp"
#include "tsd/common.hpp"
#include "tsd/losses.hpp"
#include "tsd/model.hpp"

using namespace tsd;
using namespace tsd::testutil;
using gradcheck::Failure;

namespace {

struct FullModelCase {
    TsdNet net;
    FeatureMatrix ref;
    FeatureMatrix mix;
    std::vector<double> labels;
    int target = 1;
    bool weak = false;
    bool joint = false;

    explicit FullModelCase(FusionKind fusion, bool weak_mode, bool joint_mode, uint64_t seed)
        : net(tiny_model_config(fusion)), weak(weak_mode), joint(joint_mode) {
        net.init_params(seed);
        Rng rng(seed + 500);
        ref = random_features(6, 16, 100.0, FeatureKind::LogMelMfcc, rng);
        mix = random_features(8, 8, 50.0, FeatureKind::LogMel, rng);
        if (weak) {
            labels = {1.0};
        } else {
            labels.resize(8);
            for (double& l : labels) l = rng.uniform();
        }
    }

    double loss() {
        ConditionalOutput cond = net.conditional().forward(ref, true);
        DetectionOutput det = net.detection().forward(
            mix, cond.embedding, weak ? DetectionMode::Weak : DetectionMode::Strong, true);
        double l;
        if (weak) {
            l = clip_bce(*det.clip_prob, labels[0]);
        } else {
            l = frame_bce(det.frame_probs, labels);
        }
        if (joint) {
            std::vector<double> logits(cond.logits.v.begin(), cond.logits.v.end());
            std::vector<double> d_logits;
            l += softmax_cross_entropy(logits, target, d_logits);
        }
        return l;
    }

    void backward() {
        ConditionalOutput cond = net.conditional().forward(ref, true);
        DetectionOutput det = net.detection().forward(
            mix, cond.embedding, weak ? DetectionMode::Weak : DetectionMode::Strong, true);
        std::vector<double> d_frames;
        double d_clip = 0.0;
        if (weak) {
            d_clip = clip_bce_grad(*det.clip_prob, labels[0]);
        } else {
            d_frames = frame_bce_grad(det.frame_probs, labels);
        }
        nn::Tensor d_e = net.detection().backward(d_frames, d_clip);
        nn::Tensor d_logits_t;
        if (joint) {
            std::vector<double> logits(cond.logits.v.begin(), cond.logits.v.end());
            std::vector<double> d_logits;
            softmax_cross_entropy(logits, target, d_logits);
            d_logits_t.resize({static_cast<int64_t>(d_logits.size())});
            for (size_t i = 0; i < d_logits.size(); ++i) d_logits_t.v[i] = d_logits[i];
        }
        net.conditional().backward(d_e, d_logits_t);
    }
};

} // namespace

TEST_CASE("full tiny model: analytic gradients match central differences") {
    struct Mode {
        FusionKind fusion;
        bool weak;
        bool joint;
    };
    const Mode modes[] = {
        {FusionKind::Multiply, false, false},
        {FusionKind::Multiply, true, false},
        {FusionKind::Concat, false, false},
        {FusionKind::Multiply, false, true},
    };
    uint64_t seed = 900;
    for (const Mode& m : modes) {
        CAPTURE(static_cast<int>(m.fusion));
        CAPTURE(m.weak);
        CAPTURE(m.joint);
        FullModelCase c(m.fusion, m.weak, m.joint, seed++);
        c.net.zero_grads();
        c.backward();
        std::vector<Failure> failures;
        auto loss = [&c] { return c.loss(); };
        CHECK(gradcheck::check_params(c.net.all_params(), loss, failures));
        for (const Failure& f : failures) {
            MESSAGE(f.where << ": analytic " << f.analytic << " vs numeric " << f.numeric);
        }
    }
}

TEST_CASE("conditional network: embedding is fixed-size for any input length") {
    TsdNet net(tiny_model_config());
    net.init_params(3);
    Rng rng(77);
    FeatureMatrix short_ref = random_features(6, 16, 100.0, FeatureKind::LogMelMfcc, rng);
    FeatureMatrix long_ref = random_features(24, 16, 100.0, FeatureKind::LogMelMfcc, rng);

    ConditionalOutput a = net.conditional().forward(short_ref, false);
    ConditionalOutput b = net.conditional().forward(long_ref, false);
    CHECK(a.embedding.numel() == 6);
    CHECK(b.embedding.numel() == 6);

    // softmax over the class head sums to one
    std::vector<double> probs = softmax({a.logits.v.begin(), a.logits.v.end()});
    double sum = 0.0;
    for (double p : probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("conditional network: too-short input reports the minimum length") {
    TsdNet net(tiny_model_config());
    net.init_params(4);
    Rng rng(78);
    FeatureMatrix ref = random_features(1, 16, 100.0, FeatureKind::LogMelMfcc, rng);
    CHECK_THROWS_WITH_AS(net.conditional().forward(ref, false), doctest::Contains("at least"),
                         Error);
}

TEST_CASE("detection network: output length equals the input frame count") {
    for (FusionKind fusion : {FusionKind::Multiply, FusionKind::Concat}) {
        TsdNet net(tiny_model_config(fusion));
        net.init_params(5);
        Rng rng(79);
        nn::Tensor e({6});
        for (double& x : e.v) x = rng.normal();
        for (int64_t t : {8, 9, 11, 500}) {
            FeatureMatrix mix = random_features(t, 8, 50.0, FeatureKind::LogMel, rng);
            DetectionOutput out = net.detection().forward(mix, e, DetectionMode::Strong, false);
            CHECK(static_cast<int64_t>(out.frame_probs.size()) == t);
            for (double p : out.frame_probs) {
                CHECK(p > 0.0);
                CHECK(p < 1.0);
            }
        }
    }
}

TEST_CASE("detection network: weak clip probability is the linear softmax of the frames") {
    TsdNet net(tiny_model_config());
    net.init_params(6);
    Rng rng(80);
    nn::Tensor e({6});
    for (double& x : e.v) x = rng.normal();
    FeatureMatrix mix = random_features(12, 8, 50.0, FeatureKind::LogMel, rng);
    DetectionOutput out = net.detection().forward(mix, e, DetectionMode::Weak, false);
    REQUIRE(out.clip_prob.has_value());
    CHECK(*out.clip_prob == doctest::Approx(linear_softmax_pool(out.frame_probs)).epsilon(1e-12));
    double lo = 1.0, hi = 0.0;
    for (double p : out.frame_probs) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    CHECK(*out.clip_prob >= lo);
    CHECK(*out.clip_prob <= hi);
}

TEST_CASE("detection network: the conditioning path is live") {
    TsdNet net(tiny_model_config());
    net.init_params(7);
    Rng rng(81);
    FeatureMatrix mix = random_features(10, 8, 50.0, FeatureKind::LogMel, rng);
    nn::Tensor e1({6}), e2({6});
    for (double& x : e1.v) x = rng.normal();
    for (double& x : e2.v) x = rng.normal();
    DetectionOutput o1 = net.detection().forward(mix, e1, DetectionMode::Strong, false);
    DetectionOutput o2 = net.detection().forward(mix, e2, DetectionMode::Strong, false);
    CHECK(o1.frame_probs != o2.frame_probs);
}

TEST_CASE("frozen conditional network accumulates exactly zero gradients") {
    FullModelCase c(FusionKind::Multiply, false, false, 42);
    c.net.zero_grads();
    // detection-only backward: the conditional backward is never invoked
    ConditionalOutput cond = c.net.conditional().forward(c.ref, false);
    DetectionOutput det =
        c.net.detection().forward(c.mix, cond.embedding, DetectionMode::Strong, true);
    std::vector<double> d_frames = frame_bce_grad(det.frame_probs, c.labels);
    c.net.detection().backward(d_frames, 0.0);

    for (nn::Param* p : c.net.conditional().params()) {
        for (double g : p->grad.v) CHECK(g == 0.0);
    }
    double det_grad_norm = 0.0;
    for (nn::Param* p : c.net.detection().params()) {
        for (double g : p->grad.v) det_grad_norm += g * g;
    }
    CHECK(det_grad_norm > 0.0);
}

TEST_CASE("parameter initialization is deterministic in the seed") {
    TsdNet a(tiny_model_config()), b(tiny_model_config()), c(tiny_model_config());
    a.init_params(123);
    b.init_params(123);
    c.init_params(124);
    auto pa = a.all_params(), pb = b.all_params(), pc = c.all_params();
    REQUIRE(pa.size() == pb.size());
    bool any_diff = false;
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->value.v == pb[i]->value.v);
        if (pa[i]->value.v != pc[i]->value.v) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("forward evaluation is bitwise deterministic") {
    TsdNet net(tiny_model_config());
    net.init_params(55);
    Rng rng(56);
    FeatureMatrix ref = random_features(6, 16, 100.0, FeatureKind::LogMelMfcc, rng);
    FeatureMatrix mix = random_features(16, 8, 50.0, FeatureKind::LogMel, rng);
    ConditionalOutput c1 = net.conditional().forward(ref, false);
    DetectionOutput d1 = net.detection().forward(mix, c1.embedding, DetectionMode::Weak, false);
    ConditionalOutput c2 = net.conditional().forward(ref, false);
    DetectionOutput d2 = net.detection().forward(mix, c2.embedding, DetectionMode::Weak, false);
    CHECK(c1.embedding.v == c2.embedding.v);
    CHECK(d1.frame_probs == d2.frame_probs);
    CHECK(*d1.clip_prob == *d2.clip_prob);
}

TEST_CASE("checkpoint: save/load round-trips parameters at 32-bit precision") {
    const std::string path =
        (std::filesystem::temp_directory_path() / "tsdkit_test.ckpt").string();

    TsdNet net(tiny_model_config());
    net.init_params(98);
    Adam opt(1e-3);
    // one training-ish step so moments exist
    FullModelCase c(FusionKind::Multiply, false, false, 98);
    c.net = std::move(net);
    c.net.zero_grads();
    c.backward();
    opt.step(c.net.all_params());

    CheckpointMeta meta;
    meta.stage = "train-detection";
    meta.model_hash = 777;
    meta.seed = 98;
    meta.categories = {"a", "b", "c"};
    meta.model_config = c.net.config().serialize();
    meta.epoch = 3;
    meta.val_metric = 0.5;
    save_checkpoint(path, c.net, &opt, meta);

    TsdNet loaded;
    Adam opt2;
    CheckpointMeta got = load_checkpoint(path, loaded, &opt2, 777, false);
    CHECK(got.stage == "train-detection");
    CHECK(got.epoch == 3);
    CHECK(got.categories == std::vector<std::string>{"a", "b", "c"});
    CHECK(opt2.step_count() == opt.step_count());

    auto pa = c.net.all_params(), pb = loaded.all_params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->name == pb[i]->name);
        for (size_t j = 0; j < pa[i]->value.v.size(); ++j) {
            CHECK(pb[i]->value.v[j] == static_cast<double>(static_cast<float>(pa[i]->value.v[j])));
        }
    }

    // config-hash mismatch refuses to load without the override
    TsdNet reject;
    CHECK_THROWS_WITH_AS(load_checkpoint(path, reject, nullptr, 778, false),
                         doctest::Contains("hash mismatch"), Error);
    CHECK_NOTHROW(load_checkpoint(path, reject, nullptr, 778, true));
}

TEST_CASE("fuse_concat free function matches the layer contract") {
    Rng rng(60);
    nn::Tensor frames({1, 4});
    for (double& x : frames.v) x = rng.normal();
    nn::Tensor e({3});
    for (double& x : e.v) x = rng.normal();
    nn::Tensor y = fuse_concat(e, frames);
    CHECK(y.dim(1) == 7);
    for (int64_t j = 0; j < 4; ++j) CHECK(y.v[j] == frames.v[j]);
    for (int64_t j = 0; j < 3; ++j) CHECK(y.v[4 + j] == e.v[j]);

    // zero embedding pads rows with zeros
    nn::Tensor z({3});
    nn::Tensor y0 = fuse_concat(z, frames);
    for (int64_t j = 0; j < 3; ++j) CHECK(y0.v[4 + j] == 0.0);
}

TEST_CASE("adam: gradient clipping bounds the global norm") {
    TsdNet net(tiny_model_config());
    net.init_params(61);
    auto params = net.all_params();
    for (nn::Param* p : params) {
        for (double& g : p->grad.v) g = 10.0;
    }
    const double pre = clip_grad_norm(params, 5.0);
    CHECK(pre > 5.0);
    double total = 0.0;
    for (nn::Param* p : params) {
        for (double g : p->grad.v) total += g * g;
    }
    CHECK(std::sqrt(total) == doctest::Approx(5.0).epsilon(1e-9));
}
