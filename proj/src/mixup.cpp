// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/mixup.hpp"

#include <algorithm>

#include "tsd/common.hpp"

namespace tsd {

double mixup_ratio(int64_t step, int64_t total_steps, const MixupConfig& cfg) {
    if (total_steps < 1) data_error("mixup_ratio: total_steps must be >= 1");
    if (step < 0 || step > total_steps) data_error("mixup_ratio: step out of range");
    const double r = static_cast<double>(step) / static_cast<double>(total_steps);
    return cfg.alpha_start + (cfg.alpha_end - cfg.alpha_start) * r;
}

namespace {

FeatureMatrix crop_t(const FeatureMatrix& m, int64_t t) {
    if (m.t == t) return m;
    FeatureMatrix out = m;
    out.t = t;
    out.values.resize(static_cast<size_t>(t * m.f));
    return out;
}

FeatureMatrix mix_matrix(const FeatureMatrix& a, const FeatureMatrix& b, double lambda) {
    if (a.f != b.f) data_error("mixup_pair: feature width mismatch after alignment");
    FeatureMatrix out = a;
    for (size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = lambda * a.values[i] + (1.0 - lambda) * b.values[i];
    }
    return out;
}

} // namespace

SampleFeatures mixup_pair(const SampleFeatures& s1, const SampleFeatures& s2, double lambda) {
    const int64_t t_mix = std::min(s1.mixture.t, s2.mixture.t);
    const int64_t t_ref = std::min(s1.reference.t, s2.reference.t);

    SampleFeatures a{crop_t(s1.mixture, t_mix), crop_t(s1.reference, t_ref), s1.labels};
    SampleFeatures b{crop_t(s2.mixture, t_mix), crop_t(s2.reference, t_ref), s2.labels};
    if (a.labels.size() > 1 || b.labels.size() > 1) {
        // frame labels follow the mixture crop
        const size_t t_labels =
            std::min({a.labels.size(), b.labels.size(), static_cast<size_t>(t_mix)});
        a.labels.resize(t_labels);
        b.labels.resize(t_labels);
    }
    if (a.labels.size() != b.labels.size()) data_error("mixup_pair: label length mismatch");

    // exact endpoints, bit for bit
    if (lambda == 1.0) return a;
    if (lambda == 0.0) return b;

    SampleFeatures out;
    out.mixture = mix_matrix(a.mixture, b.mixture, lambda);
    out.reference = mix_matrix(a.reference, b.reference, lambda);
    out.labels.resize(a.labels.size());
    for (size_t i = 0; i < out.labels.size(); ++i) {
        out.labels[i] = lambda * a.labels[i] + (1.0 - lambda) * b.labels[i];
    }
    return out;
}

} // namespace tsd
