// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include <cmath>

#include "tsd/common.hpp"
#include "tsd/config.hpp"
#include "tsd/mixup.hpp"

using namespace tsd;

TEST_CASE("defaults reproduce the published hyperparameters") {
    ExperimentConfig cfg = parse_config_text("");
    CHECK(cfg.training.pretrain_lr == 1e-3);
    CHECK(cfg.training.pretrain_epochs == 50);
    CHECK(cfg.training.detect_lr == 1e-3);
    CHECK(cfg.training.detect_epochs == 100);
    CHECK(cfg.training.finetune_lr == 1e-4);
    CHECK(cfg.training.finetune_epochs == 30);
    CHECK(cfg.training.mixup_cfg.alpha_start == 0.3);
    CHECK(cfg.training.mixup_cfg.alpha_end == 0.0);
    CHECK(cfg.training.batch_size == 32);
    CHECK(cfg.training.grad_clip == 5.0);

    CHECK(cfg.dsp.mixture_sample_rate == 22050);
    CHECK(cfg.dsp.mixture_window == 2048);
    CHECK(cfg.dsp.mixture_hop == 441);
    CHECK(cfg.dsp.mixture_mels == 64);
    CHECK(cfg.dsp.reference_sample_rate == 44100);
    CHECK(cfg.dsp.reference_window == 400);

    CHECK(cfg.model.embedding_dim == 128);
    CHECK(cfg.model.cond_channels == std::array<int, 4>{64, 128, 256, 512});
    CHECK(cfg.model.det_proj_dim == 128);
    CHECK(cfg.model.mixture_bins == 64);
    CHECK(cfg.model.reference_bins == 84);

    CHECK(cfg.corpus.params.min_events == 1);
    CHECK(cfg.corpus.params.max_events == 9);
    CHECK(cfg.corpus.params.snr_min_db == -5.0);
    CHECK(cfg.corpus.params.snr_max_db == 20.0);
    CHECK(cfg.corpus.params.duration == 10.0);

    CHECK(cfg.eval.segment_length == 1.0);
    CHECK(cfg.eval.threshold == 0.5);
    CHECK(cfg.eval.median_window == 5);
}

TEST_CASE("unknown keys and sections are rejected") {
    CHECK_THROWS_WITH_AS(parse_config_text("[dsp]\nmixture_fft = 1024\n"),
                         doctest::Contains("unknown key"), Error);
    CHECK_THROWS_WITH_AS(parse_config_text("[dps]\nmixture_window = 1024\n"),
                         doctest::Contains("unknown section"), Error);
    CHECK_THROWS_AS(parse_config_text("[dsp]\nmixture_window\n"), Error);
    CHECK_THROWS_AS(parse_config_text("orphan = 1\n"), Error);
}

TEST_CASE("file values parse and CLI overrides win") {
    const std::string text = "[training]\nseed = 7\nmixup = fixed:0.4\n[model]\nfusion = concat\n";
    ExperimentConfig cfg = parse_config_text(text);
    CHECK(cfg.training.seed == 7);
    CHECK(cfg.training.mixup == MixupMode::Fixed);
    CHECK(cfg.training.mixup_fixed_ratio == 0.4);
    CHECK(cfg.model.fusion == FusionKind::Concat);

    ExperimentConfig over = parse_config_text(text, {"training.seed=9", "model.fusion=multiply"});
    CHECK(over.training.seed == 9);
    CHECK(over.model.fusion == FusionKind::Multiply);
}

TEST_CASE("fusion choice changes the config hashes") {
    ExperimentConfig concat = parse_config_text("[model]\nfusion = concat\n");
    ExperimentConfig multiply = parse_config_text("[model]\nfusion = multiply\n");
    CHECK(concat.config_hash() != multiply.config_hash());
    CHECK(concat.model_hash() != multiply.model_hash());
}

TEST_CASE("canonical form round-trips") {
    ExperimentConfig cfg = parse_config_text("[training]\nseed = 3\n[evaluation]\nthreshold = 0.4\n");
    const std::string canon = cfg.canonical();
    ExperimentConfig reparsed = parse_config_text(canon);
    CHECK(reparsed.canonical() == canon);
    CHECK(reparsed.config_hash() == cfg.config_hash());
}

TEST_CASE("validation rejects out-of-range values") {
    CHECK_THROWS_AS(parse_config_text("[evaluation]\nmedian_window = 4\n"), Error);
    CHECK_THROWS_AS(parse_config_text("[evaluation]\nthreshold = 0\n"), Error);
    CHECK_THROWS_AS(parse_config_text("[training]\nsupervision = semi\n"), Error);
    CHECK_THROWS_AS(
        parse_config_text("[training]\nmixup_alpha_start = 0.1\nmixup_alpha_end = 0.2\n"), Error);
}

TEST_CASE("mixup_ratio: exact endpoints, affine, monotone") {
    MixupConfig cfg;
    CHECK(mixup_ratio(0, 100, cfg) == 0.3);
    CHECK(mixup_ratio(100, 100, cfg) == 0.0);
    CHECK(mixup_ratio(50, 100, cfg) == 0.15);

    double prev = 1.0;
    for (int s = 0; s <= 20; ++s) {
        const double a = mixup_ratio(s, 20, cfg);
        CHECK(a <= prev);
        prev = a;
        // affine: equals the two-point interpolation
        CHECK(a == doctest::Approx(0.3 * (1.0 - s / 20.0)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(mixup_ratio(5, 0, cfg), Error);
    CHECK_THROWS_AS(mixup_ratio(-1, 10, cfg), Error);
    CHECK_THROWS_AS(mixup_ratio(11, 10, cfg), Error);
}

namespace {

SampleFeatures make_sample(Rng& rng, int64_t t_mix, int64_t t_ref, std::vector<double> labels) {
    SampleFeatures s;
    s.mixture.t = t_mix;
    s.mixture.f = 4;
    s.mixture.frames_per_second = 50.0;
    s.mixture.kind = FeatureKind::LogMel;
    s.mixture.values.resize(static_cast<size_t>(t_mix * 4));
    for (double& v : s.mixture.values) v = rng.normal();
    s.reference.t = t_ref;
    s.reference.f = 6;
    s.reference.frames_per_second = 100.0;
    s.reference.kind = FeatureKind::LogMelMfcc;
    s.reference.values.resize(static_cast<size_t>(t_ref * 6));
    for (double& v : s.reference.values) v = rng.normal();
    s.labels = std::move(labels);
    return s;
}

} // namespace

TEST_CASE("mixup_pair: endpoints are bitwise, swap symmetry holds for dyadic lambda") {
    Rng rng(4410);
    SampleFeatures s1 = make_sample(rng, 8, 10, {1, 0, 1, 0, 1, 0, 1, 0});
    SampleFeatures s2 = make_sample(rng, 8, 10, {0, 1, 0, 1, 0, 1, 0, 1});

    SampleFeatures at_one = mixup_pair(s1, s2, 1.0);
    CHECK(at_one.mixture.values == s1.mixture.values);
    CHECK(at_one.reference.values == s1.reference.values);
    CHECK(at_one.labels == s1.labels);

    SampleFeatures at_zero = mixup_pair(s1, s2, 0.0);
    CHECK(at_zero.mixture.values == s2.mixture.values);
    CHECK(at_zero.labels == s2.labels);

    // lambda = 0.5: labels become the exact convex combination
    SampleFeatures mid = mixup_pair(s1, s2, 0.5);
    for (double l : mid.labels) CHECK(l == 0.5);

    // swap symmetry, exact for dyadic lambda where 1 - (1 - l) == l
    for (double lambda : {0.25, 0.5, 0.75, 0.125}) {
        SampleFeatures a = mixup_pair(s1, s2, lambda);
        SampleFeatures b = mixup_pair(s2, s1, 1.0 - lambda);
        CHECK(a.mixture.values == b.mixture.values);
        CHECK(a.reference.values == b.reference.values);
        CHECK(a.labels == b.labels);
    }

    // labels stay inside [0, 1] for any lambda (convexity)
    for (int i = 0; i < 50; ++i) {
        const double lambda = rng.uniform();
        for (double l : mixup_pair(s1, s2, lambda).labels) {
            CHECK(l >= 0.0);
            CHECK(l <= 1.0);
        }
    }
}

TEST_CASE("mixup_pair: features align by cropping to the shorter length") {
    Rng rng(4411);
    SampleFeatures s1 = make_sample(rng, 10, 12, std::vector<double>(10, 1.0));
    SampleFeatures s2 = make_sample(rng, 8, 20, std::vector<double>(8, 0.0));
    SampleFeatures mixed = mixup_pair(s1, s2, 0.5);
    CHECK(mixed.mixture.t == 8);
    CHECK(mixed.reference.t == 12);
    CHECK(mixed.labels.size() == 8);

    SampleFeatures bad = s2;
    bad.mixture.f = 5;
    bad.mixture.values.resize(8 * 5);
    CHECK_THROWS_AS(mixup_pair(s1, bad, 0.5), Error);
}
