// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace tsd {

/// Complex FFT of a fixed size. Power-of-two sizes run radix-2 in place;
/// any other size goes through Bluestein's chirp-z on an internal
/// power-of-two transform. Plans (twiddles, chirp) are precomputed once.
class Fft {
public:
    explicit Fft(size_t n);

    size_t size() const { return n_; }

    void forward(std::vector<std::complex<double>>& a) const;
    void inverse(std::vector<std::complex<double>>& a) const;

    /// One-sided magnitude spectrum of a real frame (length n): n/2 + 1 bins.
    std::vector<double> real_magnitude(const std::vector<double>& frame) const;

private:
    void pow2_transform(std::vector<std::complex<double>>& a, bool inv) const;
    void bluestein(std::vector<std::complex<double>>& a, bool inv) const;

    size_t n_ = 0;
    bool is_pow2_ = false;
    size_t m_ = 0;                                // pow2 work size for bluestein
    std::vector<std::complex<double>> chirp_;     // exp(-i pi k^2 / n)
    std::vector<std::complex<double>> chirp_fft_; // FFT of the padded conjugate chirp
};

} // namespace tsd
