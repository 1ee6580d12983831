// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "tsd/common.hpp"

namespace tsd {

double frame_bce(const std::vector<double>& p_hat, const std::vector<double>& p) {
    if (p_hat.size() != p.size()) data_error("frame_bce: length mismatch");
    double loss = 0.0;
    for (size_t i = 0; i < p_hat.size(); ++i) {
        loss += -p[i] * std::log(p_hat[i]) - (1.0 - p[i]) * std::log(1.0 - p_hat[i]);
    }
    return loss;
}

std::vector<double> frame_bce_grad(const std::vector<double>& p_hat, const std::vector<double>& p) {
    std::vector<double> g(p_hat.size());
    for (size_t i = 0; i < p_hat.size(); ++i) {
        g[i] = (p_hat[i] - p[i]) / (p_hat[i] * (1.0 - p_hat[i]));
    }
    return g;
}

double clip_bce(double p_hat, double p) {
    return -p * std::log(p_hat) - (1.0 - p) * std::log(1.0 - p_hat);
}

double clip_bce_grad(double p_hat, double p) {
    return (p_hat - p) / (p_hat * (1.0 - p_hat));
}

double softmax_cross_entropy(const std::vector<double>& logits, const std::vector<double>& target,
                             std::vector<double>& d_logits) {
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : logits) sum += std::exp(x - mx);
    const double log_sum = std::log(sum) + mx;

    double loss = 0.0;
    d_logits.resize(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        const double log_p = logits[i] - log_sum;
        loss -= target[i] * log_p;
        d_logits[i] = std::exp(log_p) - target[i];
    }
    return loss;
}

double softmax_cross_entropy(const std::vector<double>& logits, int target_index,
                             std::vector<double>& d_logits) {
    std::vector<double> target(logits.size(), 0.0);
    target[static_cast<size_t>(target_index)] = 1.0;
    return softmax_cross_entropy(logits, target, d_logits);
}

} // namespace tsd
