// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include "tsd/model.hpp"
#include "tsd/rng.hpp"

namespace tsd::testutil {

/// A model small enough for exhaustive finite-difference checks.
inline ModelConfig tiny_model_config(FusionKind fusion = FusionKind::Multiply) {
    ModelConfig cfg;
    cfg.cond_channels = {2, 3, 3, 4};
    cfg.cond_pools = {{{1, 2}, {2, 2}, {1, 1}, {1, 1}}};
    cfg.embedding_dim = 6;
    cfg.det_channels = {3, 3, 4, 4};
    cfg.det_pools = {{{1, 2}, {2, 2}, {1, 1}, {1, 1}}};
    cfg.det_gru_hidden = 3;
    cfg.det_fc_hidden = 5;
    cfg.det_proj_dim = 6;
    cfg.fusion = fusion;
    cfg.mixture_bins = 8;
    cfg.reference_bins = 16;
    cfg.categories = {"a", "b", "c"};
    return cfg;
}

inline FeatureMatrix random_features(int64_t t, int64_t f, double fps, FeatureKind kind,
                                     Rng& rng) {
    FeatureMatrix m;
    m.t = t;
    m.f = f;
    m.frames_per_second = fps;
    m.kind = kind;
    m.values.resize(static_cast<size_t>(t * f));
    for (double& v : m.values) v = rng.normal();
    return m;
}

} // namespace tsd::testutil
