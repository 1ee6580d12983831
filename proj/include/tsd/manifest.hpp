// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <string>
#include <vector>

#include "tsd/corpus.hpp"

namespace tsd {

/// Run-length text form of a binary frame-label vector: "start:end,start:end"
/// in frame indices, end exclusive; empty string when no frame is active.
std::string frame_labels_to_rle(const std::vector<uint8_t>& labels);
std::vector<uint8_t> frame_labels_from_rle(const std::string& rle, int64_t t);

/// Dataset manifests: one flat JSON object per line.
void write_manifest(const std::string& path, const std::vector<TsdSample>& samples);
std::vector<TsdSample> read_manifest(const std::string& path);

/// Clip-bank manifests ({clip_id, clip_path, category, split, duration}).
void write_bank_manifest(const std::string& path, const ClipBank& bank);
ClipBank read_bank_manifest(const std::string& path);

/// Resolve a manifest-relative path against the manifest's directory.
std::string resolve_relative(const std::string& manifest_path, const std::string& rel);

/// Frame labels live next to the manifest under labels/<sample_id>.txt.
std::vector<uint8_t> load_frame_labels(const std::string& manifest_path, const TsdSample& sample);

/// FNV-1a hash of a file's bytes, for experiment metadata.
uint64_t file_hash(const std::string& path);

} // namespace tsd
