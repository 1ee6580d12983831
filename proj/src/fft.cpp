// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace tsd {

namespace {

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Iterative radix-2 Cooley-Tukey, n must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a, bool inv) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * M_PI / static_cast<double>(len) * (inv ? 1.0 : -1.0);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inv) {
        for (auto& x : a) x /= static_cast<double>(n);
    }
}

} // namespace

Fft::Fft(size_t n) : n_(n), is_pow2_(is_pow2(n)) {
    if (n_ == 0) throw std::invalid_argument("Fft: size must be positive");
    if (is_pow2_) return;
    m_ = next_pow2(2 * n_ - 1);
    chirp_.resize(n_);
    for (size_t k = 0; k < n_; ++k) {
        // k^2 mod 2n keeps the phase argument small for large k
        double phase = M_PI * static_cast<double>((k * k) % (2 * n_)) / static_cast<double>(n_);
        chirp_[k] = std::complex<double>(std::cos(phase), -std::sin(phase));
    }
    std::vector<std::complex<double>> b(m_, {0.0, 0.0});
    b[0] = std::conj(chirp_[0]);
    for (size_t k = 1; k < n_; ++k) {
        b[k] = std::conj(chirp_[k]);
        b[m_ - k] = std::conj(chirp_[k]);
    }
    fft_pow2(b, false);
    chirp_fft_ = std::move(b);
}

void Fft::pow2_transform(std::vector<std::complex<double>>& a, bool inv) const {
    fft_pow2(a, inv);
}

void Fft::bluestein(std::vector<std::complex<double>>& a, bool inv) const {
    std::vector<std::complex<double>> x(m_, {0.0, 0.0});
    for (size_t k = 0; k < n_; ++k) {
        std::complex<double> c = inv ? std::conj(chirp_[k]) : chirp_[k];
        x[k] = a[k] * c;
    }
    fft_pow2(x, false);
    for (size_t k = 0; k < m_; ++k) {
        x[k] *= inv ? std::conj(chirp_fft_[k]) : chirp_fft_[k];
    }
    fft_pow2(x, true);
    for (size_t k = 0; k < n_; ++k) {
        std::complex<double> c = inv ? std::conj(chirp_[k]) : chirp_[k];
        a[k] = x[k] * c;
        if (inv) a[k] /= static_cast<double>(n_);
    }
}

void Fft::forward(std::vector<std::complex<double>>& a) const {
    if (a.size() != n_) throw std::invalid_argument("Fft::forward: wrong input size");
    if (is_pow2_) {
        pow2_transform(a, false);
    } else {
        bluestein(a, false);
    }
}

void Fft::inverse(std::vector<std::complex<double>>& a) const {
    if (a.size() != n_) throw std::invalid_argument("Fft::inverse: wrong input size");
    if (is_pow2_) {
        pow2_transform(a, true);
    } else {
        bluestein(a, true);
    }
}

std::vector<double> Fft::real_magnitude(const std::vector<double>& frame) const {
    if (frame.size() != n_) throw std::invalid_argument("Fft::real_magnitude: wrong frame size");
    std::vector<std::complex<double>> a(n_);
    for (size_t i = 0; i < n_; ++i) a[i] = {frame[i], 0.0};
    forward(a);
    std::vector<double> mag(n_ / 2 + 1);
    for (size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(a[i]);
    return mag;
}

} // namespace tsd
