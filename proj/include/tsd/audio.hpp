// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <string>
#include <vector>

namespace tsd {

/// Mono waveform with amplitudes in [-1, 1]. Multi-channel sources are
/// downmixed by channel mean before this type exists.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;
    std::string source_id;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

/// Read a RIFF/WAVE file: PCM 16/24-bit or 32-bit float, 1-2 channels.
/// Stereo is downmixed by channel mean; samples are scaled to [-1, 1].
/// Throws a data error naming the chunk that failed on malformed input.
AudioClip load_wav(const std::string& path);

/// Write a mono 16-bit PCM WAVE file. Samples are clamped to [-1, 1].
void save_wav(const std::string& path, const AudioClip& clip);

/// Band-limited rate conversion (Kaiser-windowed sinc). Output length is
/// round(len * target / source). target == source returns the clip unchanged.
AudioClip resample(const AudioClip& clip, int target_rate);

} // namespace tsd
