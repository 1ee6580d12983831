// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tsd/nn/tensor.hpp"

namespace tsd::gradcheck {

struct Failure {
    std::string where;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel = 0.0;
};

inline double rel_err(double a, double b) {
    const double scale = std::max({1e-6, std::abs(a), std::abs(b)});
    return std::abs(a - b) / scale;
}

/// Central-difference check of every scalar in `tensor` against the analytic
/// gradient in `grad`. `loss` must re-run the forward pass. A probe fails
/// only when the difference quotient is self-consistent across two step
/// sizes (so the loss is smooth there) yet disagrees with the analytic
/// value; probes straddling an activation kink are skipped, since central
/// differences do not estimate a derivative there.
inline bool check_tensor(tsd::nn::Tensor& tensor, const tsd::nn::Tensor& grad,
                         const std::function<double()>& loss, const std::string& name,
                         std::vector<Failure>& failures, double tol = 1e-4,
                         double abs_tol = 1e-7) {
    bool ok = true;
    auto central = [&](size_t i, double h) {
        const double saved = tensor.v[i];
        tensor.v[i] = saved + h;
        const double up = loss();
        tensor.v[i] = saved - h;
        const double down = loss();
        tensor.v[i] = saved;
        return (up - down) / (2.0 * h);
    };
    for (size_t i = 0; i < tensor.v.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(tensor.v[i]));
        const double numeric = central(i, h);
        const double analytic = grad.v[i];
        double rel = rel_err(analytic, numeric);
        if (rel <= tol || std::abs(analytic - numeric) <= abs_tol) continue;
        const double fine = central(i, h / 4.0);
        if (rel_err(numeric, fine) > tol) continue; // non-smooth point, quotient unstable
        rel = rel_err(analytic, fine);
        if (rel > tol && std::abs(analytic - fine) > abs_tol) {
            failures.push_back({name + "[" + std::to_string(i) + "]", analytic, fine, rel});
            ok = false;
        }
    }
    return ok;
}

/// Check every parameter of a net-like object. Analytic gradients must have
/// been accumulated (zeroed, then one backward pass) before the call.
inline bool check_params(const std::vector<tsd::nn::Param*>& params,
                         const std::function<double()>& loss, std::vector<Failure>& failures,
                         double tol = 1e-4) {
    bool ok = true;
    for (tsd::nn::Param* p : params) {
        ok = check_tensor(p->value, p->grad, loss, p->name, failures, tol) && ok;
    }
    return ok;
}

} // namespace tsd::gradcheck
