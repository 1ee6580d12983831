// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <vector>

#include "tsd/features.hpp"

namespace tsd {

struct MixupConfig {
    double alpha_start = 0.3;
    double alpha_end = 0.0;
    // lambda law: Beta(a, b)
    double beta_a = 0.5;
    double beta_b = 0.5;
};

/// Linearly decayed mixing probability: alpha_start at step 0, alpha_end at
/// step == total_steps. Endpoints are exact.
double mixup_ratio(int64_t step, int64_t total_steps, const MixupConfig& cfg = {});

/// One training sample's extracted features and supervision, the unit mixup
/// operates on. Strong samples carry one label per mixture frame; weak
/// samples carry a single clip bit.
struct SampleFeatures {
    FeatureMatrix mixture;
    FeatureMatrix reference;
    std::vector<double> labels;
};

/// Spectrogram-level convex combination of two samples:
/// X = lambda*X1 + (1-lambda)*X2, same for references and labels. Inputs are
/// cropped to the shorter length on each axis pairing; lambda 0 and 1 return
/// the (cropped) endpoint bitwise.
SampleFeatures mixup_pair(const SampleFeatures& s1, const SampleFeatures& s2, double lambda);

} // namespace tsd
