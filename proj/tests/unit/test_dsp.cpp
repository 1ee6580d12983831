// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tsd/audio.hpp"
#include "tsd/common.hpp"
#include "tsd/features.hpp"
#include "tsd/fft.hpp"
#include "tsd/rng.hpp"

using namespace tsd;

namespace {

std::string temp_dir() {
    static std::string dir = [] {
        std::string d = (std::filesystem::temp_directory_path() / "tsdkit_dsp_tests").string();
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

AudioClip sine_clip(double freq, double seconds, int rate, double amplitude = 0.5) {
    AudioClip clip;
    clip.sample_rate = rate;
    clip.source_id = "sine";
    const int64_t n = static_cast<int64_t>(std::llround(seconds * rate));
    clip.samples.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        clip.samples[static_cast<size_t>(i)] = amplitude * std::sin(2.0 * M_PI * freq * i / rate);
    }
    return clip;
}

// naive DFT oracle
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
    const size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    for (size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (size_t j = 0; j < n; ++j) {
            const double phase = -2.0 * M_PI * static_cast<double>(k * j % n) / static_cast<double>(n);
            acc += x[j] * std::complex<double>(std::cos(phase), std::sin(phase));
        }
        out[k] = acc;
    }
    return out;
}

void write_wav_raw(const std::string& path, uint16_t format, uint16_t channels, uint32_t rate,
                   uint16_t bits, const std::vector<uint8_t>& payload) {
    std::ofstream out(path, std::ios::binary);
    auto u32 = [&out](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&out](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    out.write("RIFF", 4);
    u32(36 + static_cast<uint32_t>(payload.size()));
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    u32(16);
    u16(format);
    u16(channels);
    u32(rate);
    u32(rate * channels * bits / 8);
    u16(static_cast<uint16_t>(channels * bits / 8));
    u16(bits);
    out.write("data", 4);
    u32(static_cast<uint32_t>(payload.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
}

} // namespace

TEST_CASE("fft matches a naive dft for power-of-two and odd sizes") {
    for (size_t n : {8u, 16u, 400u, 27u}) {
        Fft fft(n);
        std::vector<std::complex<double>> x(n);
        for (size_t i = 0; i < n; ++i) {
            x[i] = {std::sin(0.37 * static_cast<double>(i)) + 0.2,
                    std::cos(1.13 * static_cast<double>(i))};
        }
        std::vector<std::complex<double>> expected = naive_dft(x);
        std::vector<std::complex<double>> got = x;
        fft.forward(got);
        for (size_t k = 0; k < n; ++k) {
            CHECK(std::abs(got[k] - expected[k]) < 1e-8 * (1.0 + std::abs(expected[k])));
        }
        fft.inverse(got);
        for (size_t k = 0; k < n; ++k) {
            CHECK(std::abs(got[k] - x[k]) < 1e-10);
        }
    }
}

TEST_CASE("load_wav: digital silence gives exact zeros") {
    const std::string path = temp_dir() + "/silence.wav";
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.assign(44100, 0.0);
    save_wav(path, clip);

    AudioClip loaded = load_wav(path);
    CHECK(loaded.sample_rate == 44100);
    CHECK(loaded.samples.size() == 44100);
    for (double s : loaded.samples) CHECK(s == 0.0);
}

TEST_CASE("load_wav: full-scale square wave stays inside [-1, 1]") {
    const std::string path = temp_dir() + "/square.wav";
    std::vector<uint8_t> payload;
    for (int i = 0; i < 1000; ++i) {
        const int16_t v = i % 2 == 0 ? 32767 : -32768;
        payload.push_back(static_cast<uint8_t>(v & 0xFF));
        payload.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
    }
    write_wav_raw(path, 1, 1, 44100, 16, payload);

    AudioClip clip = load_wav(path);
    double max_abs = 0.0;
    for (double s : clip.samples) max_abs = std::max(max_abs, std::abs(s));
    CHECK(max_abs <= 1.0);
    CHECK(max_abs > 0.99);
}

TEST_CASE("load_wav: stereo channels (a, -a) cancel to zero") {
    const std::string path = temp_dir() + "/stereo.wav";
    std::vector<uint8_t> payload;
    for (int i = 0; i < 500; ++i) {
        const int16_t a = static_cast<int16_t>(1000 * std::sin(0.05 * i));
        const int16_t b = static_cast<int16_t>(-a);
        for (int16_t v : {a, b}) {
            payload.push_back(static_cast<uint8_t>(v & 0xFF));
            payload.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
        }
    }
    write_wav_raw(path, 1, 2, 22050, 16, payload);

    AudioClip clip = load_wav(path);
    CHECK(clip.samples.size() == 500);
    for (double s : clip.samples) CHECK(s == 0.0); // channel mean of (a, -a)
}

TEST_CASE("load_wav: 24-bit and float formats round-trip close to the source") {
    // 24-bit
    {
        std::vector<uint8_t> payload;
        const int32_t v = 4194304; // 0.5 in q23
        payload.push_back(static_cast<uint8_t>(v & 0xFF));
        payload.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
        payload.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
        const std::string path = temp_dir() + "/pcm24.wav";
        write_wav_raw(path, 1, 1, 8000, 24, payload);
        AudioClip clip = load_wav(path);
        CHECK(clip.samples.size() == 1);
        CHECK(clip.samples[0] == doctest::Approx(0.5).epsilon(1e-9));
    }
    // float32, with an out-of-range sample that must clamp
    {
        std::vector<uint8_t> payload(8);
        const float a = 0.25f, b = 1.5f;
        std::memcpy(payload.data(), &a, 4);
        std::memcpy(payload.data() + 4, &b, 4);
        const std::string path = temp_dir() + "/f32.wav";
        write_wav_raw(path, 3, 1, 8000, 32, payload);
        AudioClip clip = load_wav(path);
        CHECK(clip.samples.size() == 2);
        CHECK(clip.samples[0] == doctest::Approx(0.25));
        CHECK(clip.samples[1] == 1.0);
    }
}

TEST_CASE("load_wav: unsupported codec raises an error naming the chunk") {
    const std::string path = temp_dir() + "/adpcm.wav";
    write_wav_raw(path, 2, 1, 8000, 16, std::vector<uint8_t>(16, 0));
    CHECK_THROWS_WITH_AS(load_wav(path), doctest::Contains("fmt chunk"), Error);
}

TEST_CASE("load_wav: missing data chunk errors") {
    const std::string path = temp_dir() + "/nodata.wav";
    std::ofstream out(path, std::ios::binary);
    out.write("RIFF", 4);
    uint32_t size = 4;
    out.write(reinterpret_cast<const char*>(&size), 4);
    out.write("WAVE", 4);
    out.close();
    CHECK_THROWS_WITH_AS(load_wav(path), doctest::Contains("fmt chunk"), Error);
}

TEST_CASE("resample: identity when rates match") {
    AudioClip clip = sine_clip(1000.0, 0.5, 44100);
    AudioClip out = resample(clip, 44100);
    CHECK(out.samples == clip.samples);
}

TEST_CASE("resample: length follows round(len * target / source)") {
    AudioClip clip = sine_clip(1000.0, 1.0, 44100);
    REQUIRE(clip.samples.size() == 44100);
    AudioClip out = resample(clip, 22050);
    CHECK(std::llabs(static_cast<long long>(out.samples.size()) - 22050) <= 1);

    AudioClip up = resample(clip, 48000);
    CHECK(std::llabs(static_cast<long long>(up.samples.size()) - 48000) <= 1);
}

TEST_CASE("resample: a 1 kHz sine keeps its FFT peak and energy within 1%") {
    AudioClip clip = sine_clip(1000.0, 1.0, 44100);
    AudioClip down = resample(clip, 22050);

    // FFT-peak oracle on a 16384-point window from the middle
    auto dominant_bin_hz = [](const AudioClip& c) {
        const size_t n = 16384;
        Fft fft(n);
        std::vector<double> frame(n);
        const size_t start = c.samples.size() / 4;
        for (size_t i = 0; i < n; ++i) frame[i] = c.samples[start + i];
        std::vector<double> mag = fft.real_magnitude(frame);
        size_t best = 1;
        for (size_t k = 1; k + 1 < mag.size(); ++k) {
            if (mag[k] > mag[best]) best = k;
        }
        return static_cast<double>(best) * c.sample_rate / static_cast<double>(n);
    };
    const double peak_before = dominant_bin_hz(clip);
    const double peak_after = dominant_bin_hz(down);
    CHECK(peak_before == doctest::Approx(1000.0).epsilon(0.01));
    CHECK(peak_after == doctest::Approx(peak_before).epsilon(0.01));

    // energy (mean square) preserved within 1%, edges excluded
    auto mean_square = [](const AudioClip& c) {
        double acc = 0.0;
        const size_t lo = c.samples.size() / 10, hi = c.samples.size() * 9 / 10;
        for (size_t i = lo; i < hi; ++i) acc += c.samples[i] * c.samples[i];
        return acc / static_cast<double>(hi - lo);
    };
    CHECK(mean_square(down) == doctest::Approx(mean_square(clip)).epsilon(0.01));
}

TEST_CASE("stft_magnitude: zero clip gives an all-zero matrix") {
    AudioClip clip;
    clip.sample_rate = 22050;
    clip.samples.assign(22050, 0.0);
    FeatureMatrix spec = stft_magnitude(clip, 2048, 441);
    CHECK(spec.f == 1025);
    for (double v : spec.values) CHECK(v == 0.0);
}

TEST_CASE("stft_magnitude: 10 s at 22.05 kHz with hop 441 gives 500 frames") {
    AudioClip clip = sine_clip(440.0, 10.0, 22050);
    FeatureMatrix spec = stft_magnitude(clip, 2048, 441);
    CHECK(spec.t == 500);
    CHECK(spec.f == 2048 / 2 + 1);
    CHECK(spec.frames_per_second == 50.0);
}

TEST_CASE("stft_magnitude: bin-centered sine concentrates in one column") {
    const int rate = 22050, window = 2048;
    const int bin = 200;
    const double freq = static_cast<double>(bin) * rate / window;
    AudioClip clip = sine_clip(freq, 2.0, rate);
    FeatureMatrix spec = stft_magnitude(clip, window, 441);

    // column means, interior frames only
    std::vector<double> col(static_cast<size_t>(spec.f), 0.0);
    for (int64_t i = 2; i < spec.t - 2; ++i) {
        for (int64_t j = 0; j < spec.f; ++j) col[static_cast<size_t>(j)] += spec.at(i, j);
    }
    double off_peak = 0.0;
    for (int64_t j = 0; j < spec.f; ++j) {
        if (std::llabs(j - bin) > 2) off_peak = std::max(off_peak, col[static_cast<size_t>(j)]);
    }
    CHECK(col[bin] > 10.0 * off_peak);
}

TEST_CASE("stft_magnitude: clip shorter than one hop errors") {
    AudioClip clip = sine_clip(440.0, 0.01, 22050); // 220 samples < hop 441
    CHECK_THROWS_AS(stft_magnitude(clip, 2048, 441), Error);
}

TEST_CASE("mel filterbank rows are nonnegative with positive mass on both branch configs") {
    struct Case {
        int mels, bins, rate, window;
    };
    for (const Case& c : {Case{64, 1025, 22050, 2048}, Case{64, 201, 44100, 400}}) {
        std::vector<double> fb = mel_filterbank(c.mels, c.bins, c.rate, c.window);
        for (int m = 0; m < c.mels; ++m) {
            double row_sum = 0.0;
            for (int b = 0; b < c.bins; ++b) {
                const double w = fb[static_cast<size_t>(m) * c.bins + b];
                CHECK(w >= 0.0);
                row_sum += w;
            }
            CHECK(row_sum > 0.0);
        }
        // flat spectrum maps to a strictly positive vector
        for (int m = 0; m < c.mels; ++m) {
            double acc = 0.0;
            for (int b = 0; b < c.bins; ++b) acc += fb[static_cast<size_t>(m) * c.bins + b];
            CHECK(acc > 0.0);
        }
    }
}

TEST_CASE("mixture_features: 10 s clip maps to 500 x 64 at 50 fps") {
    AudioClip clip = sine_clip(880.0, 10.0, 22050);
    FeatureMatrix feat = mixture_features(clip);
    CHECK(feat.t == 500);
    CHECK(feat.f == 64);
    CHECK(feat.frames_per_second == 50.0);
    CHECK(feat.kind == FeatureKind::LogMel);
}

TEST_CASE("mixture_features: silence gives the constant log(eps)") {
    AudioClip clip;
    clip.sample_rate = 22050;
    clip.samples.assign(22050 * 2, 0.0);
    FeatureMatrix feat = mixture_features(clip);
    const double expected = std::log(1e-10);
    for (double v : feat.values) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mixture_features: white noise has more energy than silence in every frame") {
    Rng rng(7);
    AudioClip noise;
    noise.sample_rate = 22050;
    noise.samples.resize(22050);
    for (double& s : noise.samples) s = rng.uniform(-0.5, 0.5);
    AudioClip silence;
    silence.sample_rate = 22050;
    silence.samples.assign(22050, 0.0);

    FeatureMatrix fn = mixture_features(noise);
    FeatureMatrix fs = mixture_features(silence);
    REQUIRE(fn.t == fs.t);
    for (int64_t i = 0; i < fn.t; ++i) {
        double mean_noise = 0.0, mean_silence = 0.0;
        for (int64_t j = 0; j < fn.f; ++j) {
            mean_noise += fn.at(i, j);
            mean_silence += fs.at(i, j);
        }
        CHECK(mean_noise > mean_silence);
    }
}

TEST_CASE("reference_features: width is 84 and frame count follows floor(len/hop)") {
    AudioClip clip = sine_clip(2000.0, 4.0, 44100);
    REQUIRE(clip.samples.size() == 176400);
    FeatureMatrix feat = reference_features(clip);
    // frame convention: one frame per full hop, centers strictly inside the clip
    CHECK(feat.t == 176400 / 200);
    CHECK(feat.f == 84);
    CHECK(feat.kind == FeatureKind::LogMelMfcc);
    CHECK(feat.frames_per_second == doctest::Approx(220.5));
}

TEST_CASE("reference_features: silence halves are constant") {
    AudioClip clip;
    clip.sample_rate = 44100;
    clip.samples.assign(44100, 0.0);
    FeatureMatrix feat = reference_features(clip);
    const double logmel_expected = std::log(1e-10);
    for (int64_t i = 0; i < feat.t; ++i) {
        for (int64_t j = 0; j < 64; ++j) {
            CHECK(feat.at(i, j) == doctest::Approx(logmel_expected).epsilon(1e-12));
        }
        // mfcc of a constant log-mel vector: only coefficient 0 is nonzero
        CHECK(std::abs(feat.at(i, 64)) > 1.0);
        for (int64_t j = 65; j < 84; ++j) {
            CHECK(std::abs(feat.at(i, j)) < 1e-9);
        }
    }
}

TEST_CASE("reference_features: columns are the standalone log-mel and mfcc outputs") {
    AudioClip clip = sine_clip(1234.0, 1.5, 44100, 0.4);
    DspConfig cfg;
    FeatureMatrix combined = reference_features(clip, cfg);

    AudioClip at_rate = resample(clip, cfg.reference_sample_rate);
    FeatureMatrix lm = log_mel(at_rate, cfg.reference_window, cfg.reference_hop,
                               cfg.reference_mels, cfg.log_eps);
    FeatureMatrix mf = mfcc_from_log_mel(lm, cfg.reference_mfcc);

    REQUIRE(combined.t == lm.t);
    for (int64_t i = 0; i < combined.t; ++i) {
        for (int64_t j = 0; j < 64; ++j) CHECK(combined.at(i, j) == lm.at(i, j));
        for (int64_t j = 0; j < 20; ++j) CHECK(combined.at(i, 64 + j) == mf.at(i, j));
    }
}

TEST_CASE("features are deterministic and time-shift covariant") {
    AudioClip clip = sine_clip(700.0, 3.0, 22050, 0.3);
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] *= 1.0 + 0.3 * std::sin(2.0 * M_PI * 2.0 * i / 22050.0);
    }

    FeatureMatrix a = mixture_features(clip);
    FeatureMatrix b = mixture_features(clip);
    CHECK(a.values == b.values); // bit-identical across runs

    // shift by exactly 2 hops: interior frames move by 2
    const int k = 2, hop = 441;
    AudioClip shifted;
    shifted.sample_rate = clip.sample_rate;
    shifted.samples.assign(clip.samples.begin() + k * hop, clip.samples.end());
    FeatureMatrix s = mixture_features(shifted);
    for (int64_t i = 8; i < s.t - 8; ++i) {
        for (int64_t j = 0; j < s.f; ++j) {
            CHECK(s.at(i, j) == doctest::Approx(a.at(i + k, j)).epsilon(1e-6));
        }
    }
}

TEST_CASE("feature disk cache round-trips bit-exactly") {
    const std::string cache = temp_dir() + "/cache";
    AudioClip clip = sine_clip(500.0, 1.0, 22050);
    FeatureMatrix feat = mixture_features(clip);
    feature_cache_store(cache, "clip-1", 42, feat);

    FeatureMatrix loaded;
    REQUIRE(feature_cache_load(cache, "clip-1", 42, loaded));
    CHECK(loaded.t == feat.t);
    CHECK(loaded.f == feat.f);
    CHECK(loaded.values == feat.values);
    CHECK(loaded.frames_per_second == feat.frames_per_second);

    FeatureMatrix miss;
    CHECK_FALSE(feature_cache_load(cache, "clip-1", 43, miss)); // different config hash
}
