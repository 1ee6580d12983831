// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tsd/common.hpp"

namespace tsd {

using nlohmann::json;

std::string frame_labels_to_rle(const std::vector<uint8_t>& labels) {
    std::ostringstream out;
    bool first = true;
    int64_t start = -1;
    for (int64_t i = 0; i <= static_cast<int64_t>(labels.size()); ++i) {
        const bool on = i < static_cast<int64_t>(labels.size()) && labels[i] != 0;
        if (on && start < 0) start = i;
        if (!on && start >= 0) {
            if (!first) out << ',';
            out << start << ':' << i;
            first = false;
            start = -1;
        }
    }
    return out.str();
}

std::vector<uint8_t> frame_labels_from_rle(const std::string& rle, int64_t t) {
    std::vector<uint8_t> labels(static_cast<size_t>(t), 0);
    if (rle.empty()) return labels;
    std::istringstream in(rle);
    std::string run;
    while (std::getline(in, run, ',')) {
        auto colon = run.find(':');
        if (colon == std::string::npos) data_error("frame labels: malformed run '" + run + "'");
        const int64_t start = std::stoll(run.substr(0, colon));
        const int64_t end = std::stoll(run.substr(colon + 1));
        if (start < 0 || end > t || start >= end)
            data_error("frame labels: run out of range '" + run + "'");
        for (int64_t i = start; i < end; ++i) labels[static_cast<size_t>(i)] = 1;
    }
    return labels;
}

void write_manifest(const std::string& path, const std::vector<TsdSample>& samples) {
    std::ofstream out(path);
    if (!out) data_error("write_manifest: cannot open " + path);
    for (const TsdSample& s : samples) {
        json rec;
        rec["sample_id"] = s.sample_id;
        rec["mixture_path"] = s.mixture_path;
        rec["reference_path"] = s.reference_path;
        rec["target_category"] = s.target_category;
        rec["polarity"] = s.polarity;
        rec["mode"] = dataset_mode_name(s.mode);
        rec["fps"] = s.fps;
        rec["duration"] = s.duration;
        if (s.has_frame_labels) {
            rec["frame_labels_path"] =
                s.frame_labels_path.empty() ? "labels/" + s.sample_id + ".txt" : s.frame_labels_path;
        }
        if (s.clip_label.has_value()) rec["clip_label"] = *s.clip_label;
        out << rec.dump() << '\n';
    }
}

std::vector<TsdSample> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) data_error("read_manifest: cannot open " + path);
    std::vector<TsdSample> samples;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const std::exception& e) {
            data_error("read_manifest: " + path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        TsdSample s;
        s.sample_id = rec.at("sample_id").get<std::string>();
        s.mixture_path = rec.at("mixture_path").get<std::string>();
        s.reference_path = rec.at("reference_path").get<std::string>();
        s.target_category = rec.at("target_category").get<std::string>();
        s.polarity = rec.at("polarity").get<std::string>();
        s.mode = dataset_mode_from_name(rec.at("mode").get<std::string>());
        s.fps = rec.at("fps").get<double>();
        s.duration = rec.at("duration").get<double>();
        if (rec.contains("clip_label")) s.clip_label = rec.at("clip_label").get<int>();
        s.has_frame_labels = rec.contains("frame_labels_path");
        if (s.has_frame_labels) s.frame_labels_path = rec.at("frame_labels_path").get<std::string>();
        samples.push_back(std::move(s));
    }
    return samples;
}

void write_bank_manifest(const std::string& path, const ClipBank& bank) {
    std::ofstream out(path);
    if (!out) data_error("write_bank_manifest: cannot open " + path);
    for (const BankEntry& e : bank.entries) {
        json rec;
        rec["clip_id"] = e.clip_id;
        rec["clip_path"] = e.path;
        rec["category"] = e.category;
        rec["split"] = e.split;
        rec["duration"] = e.duration;
        out << rec.dump() << '\n';
    }
}

ClipBank read_bank_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) data_error("read_bank_manifest: cannot open " + path);
    ClipBank bank;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        BankEntry e;
        e.clip_id = rec.at("clip_id").get<std::string>();
        e.path = rec.at("clip_path").get<std::string>();
        e.category = rec.at("category").get<std::string>();
        e.split = rec.at("split").get<std::string>();
        e.duration = rec.value("duration", 0.0);
        bank.entries.push_back(std::move(e));
    }
    return bank;
}

std::string resolve_relative(const std::string& manifest_path, const std::string& rel) {
    if (!rel.empty() && rel[0] == '/') return rel;
    return (std::filesystem::path(manifest_path).parent_path() / rel).string();
}

std::vector<uint8_t> load_frame_labels(const std::string& manifest_path, const TsdSample& sample) {
    const std::string rel = sample.frame_labels_path.empty()
                                ? "labels/" + sample.sample_id + ".txt"
                                : sample.frame_labels_path;
    const std::string path = resolve_relative(manifest_path, rel);
    std::ifstream in(path);
    if (!in) data_error("load_frame_labels: cannot open " + path);
    std::string rle;
    std::getline(in, rle);
    const int64_t t = static_cast<int64_t>(sample.duration * sample.fps);
    return frame_labels_from_rle(rle, t);
}

uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) data_error("file_hash: cannot open " + path);
    uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<uint8_t>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (n < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

} // namespace tsd
