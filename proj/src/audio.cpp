// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "tsd/common.hpp"

namespace tsd {

namespace {

uint32_t read_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0]) | static_cast<uint16_t>(p[1] << 8);
}

void write_u32(std::ofstream& out, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ofstream& out, uint16_t v) {
    uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

double zeroth_bessel(double x) {
    // I0 via its power series; converges quickly for the beta range used here.
    double sum = 1.0, term = 1.0;
    for (int k = 1; k < 64; ++k) {
        term *= (x / (2.0 * k)) * (x / (2.0 * k));
        sum += term;
        if (term < 1e-16 * sum) break;
    }
    return sum;
}

} // namespace

AudioClip load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) data_error("load_wav: cannot open file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0)
        data_error("load_wav: RIFF header: missing or truncated in " + path);
    if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        data_error("load_wav: RIFF header: not a WAVE file: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    const uint8_t* data = nullptr;
    uint32_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        char id[5] = {0};
        std::memcpy(id, bytes.data() + pos, 4);
        uint32_t chunk_len = read_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + chunk_len > bytes.size())
            data_error(std::string("load_wav: ") + id + " chunk: truncated in " + path);
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_len < 16) data_error("load_wav: fmt chunk: too short in " + path);
            const uint8_t* f = bytes.data() + pos;
            format = read_u16(f);
            channels = read_u16(f + 2);
            rate = read_u32(f + 4);
            bits = read_u16(f + 14);
            if (format == 0xFFFE) {
                // WAVE_FORMAT_EXTENSIBLE: first two bytes of the subformat GUID
                if (chunk_len < 26) data_error("load_wav: fmt chunk: extensible header too short in " + path);
                format = read_u16(f + 24);
            }
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + pos;
            data_len = chunk_len;
        }
        pos += chunk_len + (chunk_len & 1); // chunks are word-aligned
    }

    if (!have_fmt) data_error("load_wav: fmt chunk: missing in " + path);
    if (data == nullptr) data_error("load_wav: data chunk: missing in " + path);
    if (channels < 1 || channels > 2)
        data_error("load_wav: fmt chunk: unsupported channel count " + std::to_string(channels) + " in " + path);
    if (rate == 0) data_error("load_wav: fmt chunk: zero sample rate in " + path);

    bool pcm = format == 1;
    bool ieee = format == 3;
    if (!((pcm && (bits == 16 || bits == 24)) || (ieee && bits == 32)))
        data_error("load_wav: fmt chunk: unsupported codec (format " + std::to_string(format) + ", " +
                   std::to_string(bits) + "-bit) in " + path);

    uint32_t bytes_per_sample = bits / 8;
    uint32_t frame_size = bytes_per_sample * channels;
    uint32_t n_frames = data_len / frame_size;

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.source_id = path;
    clip.samples.resize(n_frames);

    for (uint32_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (uint16_t c = 0; c < channels; ++c) {
            const uint8_t* p = data + static_cast<size_t>(i) * frame_size + c * bytes_per_sample;
            double s;
            if (pcm && bits == 16) {
                int16_t v;
                std::memcpy(&v, p, 2);
                s = static_cast<double>(v) / 32768.0;
            } else if (pcm && bits == 24) {
                int32_t v = static_cast<int32_t>(p[0]) | (static_cast<int32_t>(p[1]) << 8) |
                            (static_cast<int32_t>(static_cast<int8_t>(p[2])) << 16);
                s = static_cast<double>(v) / 8388608.0;
            } else {
                float v;
                std::memcpy(&v, p, 4);
                s = std::clamp(static_cast<double>(v), -1.0, 1.0);
            }
            acc += s;
        }
        clip.samples[i] = acc / channels;
    }
    return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
    std::ofstream out(path, std::ios::binary);
    if (!out) data_error("save_wav: cannot open file for writing: " + path);
    uint32_t n = static_cast<uint32_t>(clip.samples.size());
    uint32_t data_len = n * 2;
    out.write("RIFF", 4);
    write_u32(out, 36 + data_len);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1); // PCM
    write_u16(out, 1); // mono
    write_u32(out, static_cast<uint32_t>(clip.sample_rate));
    write_u32(out, static_cast<uint32_t>(clip.sample_rate) * 2);
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, data_len);
    for (uint32_t i = 0; i < n; ++i) {
        double s = std::clamp(clip.samples[i], -1.0, 1.0);
        int16_t v = static_cast<int16_t>(std::lround(s * 32767.0));
        uint8_t b[2] = {static_cast<uint8_t>(v & 0xFF), static_cast<uint8_t>((v >> 8) & 0xFF)};
        out.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!out) data_error("save_wav: write failed: " + path);
}

AudioClip resample(const AudioClip& clip, int target_rate) {
    if (target_rate <= 0) data_error("resample: target rate must be positive");
    if (target_rate == clip.sample_rate) return clip;

    const int64_t in_len = static_cast<int64_t>(clip.samples.size());
    const int64_t out_len =
        std::llround(static_cast<double>(in_len) * target_rate / clip.sample_rate);

    AudioClip out;
    out.sample_rate = target_rate;
    out.source_id = clip.source_id;
    out.samples.resize(static_cast<size_t>(out_len), 0.0);
    if (in_len == 0 || out_len == 0) return out;

    const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
    const double cutoff = 0.475 * std::min(1.0, ratio); // cycles per input sample
    const double half_width = 32.0 / std::min(1.0, ratio);
    const int hw = static_cast<int>(std::ceil(half_width));
    const double beta = 8.6;
    const double i0_beta = zeroth_bessel(beta);

    // Taps depend only on the fractional part of the input position; rational
    // rate pairs cycle through a small set of phases, so memoize per phase.
    std::map<double, std::vector<double>> taps_by_phase;
    auto taps_for = [&](double frac) -> const std::vector<double>& {
        auto it = taps_by_phase.find(frac);
        if (it != taps_by_phase.end()) return it->second;
        std::vector<double> taps(2 * hw + 1, 0.0);
        double norm = 0.0;
        for (int j = -hw; j <= hw; ++j) {
            const double t = static_cast<double>(j) - frac;
            const double x = t / half_width;
            if (x <= -1.0 || x >= 1.0) continue;
            const double window = zeroth_bessel(beta * std::sqrt(1.0 - x * x)) / i0_beta;
            const double arg = 2.0 * cutoff * t;
            const double sinc = arg == 0.0 ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
            taps[j + hw] = 2.0 * cutoff * sinc * window;
            norm += taps[j + hw];
        }
        if (norm > 0.0) {
            for (double& h : taps) h /= norm;
        }
        if (taps_by_phase.size() > 256) taps_by_phase.clear();
        return taps_by_phase.emplace(frac, std::move(taps)).first->second;
    };

    for (int64_t n = 0; n < out_len; ++n) {
        const double pos = static_cast<double>(n) / ratio;
        const int64_t base = static_cast<int64_t>(std::floor(pos));
        const std::vector<double>& taps = taps_for(pos - static_cast<double>(base));
        const int64_t k0 = std::max<int64_t>(0, base - hw);
        const int64_t k1 = std::min<int64_t>(in_len - 1, base + hw);
        double acc = 0.0;
        for (int64_t k = k0; k <= k1; ++k) {
            acc += clip.samples[k] * taps[k - base + hw];
        }
        out.samples[n] = acc;
    }
    return out;
}

} // namespace tsd
