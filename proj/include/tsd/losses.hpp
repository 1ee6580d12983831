// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <vector>

namespace tsd {

/// Binary cross-entropy summed over frames. Predictions must be strictly
/// inside (0, 1) (sigmoid contract); targets may be soft in [0, 1].
double frame_bce(const std::vector<double>& p_hat, const std::vector<double>& p);

/// d frame_bce / d p_hat.
std::vector<double> frame_bce_grad(const std::vector<double>& p_hat, const std::vector<double>& p);

/// Single-term BCE for the clip-level head.
double clip_bce(double p_hat, double p);
double clip_bce_grad(double p_hat, double p);

/// Cross-entropy of a softmax head against a soft target distribution.
/// Returns the loss; d_logits receives softmax(logits) - target.
double softmax_cross_entropy(const std::vector<double>& logits, const std::vector<double>& target,
                             std::vector<double>& d_logits);

/// Hard-label convenience overload.
double softmax_cross_entropy(const std::vector<double>& logits, int target_index,
                             std::vector<double>& d_logits);

} // namespace tsd
