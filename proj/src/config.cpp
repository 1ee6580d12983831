// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "tsd/common.hpp"

namespace tsd {

namespace {

using KvMap = std::map<std::string, std::map<std::string, std::string>>;

KvMap parse_ini(const std::string& text) {
    KvMap out;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // strip comments and whitespace
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto strip = [](std::string s) {
            const char* ws = " \t\r\n";
            auto b = s.find_first_not_of(ws);
            if (b == std::string::npos) return std::string();
            auto e = s.find_last_not_of(ws);
            return s.substr(b, e - b + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                config_error("config line " + std::to_string(line_no) + ": malformed section header");
            section = line.substr(1, line.size() - 2);
            out[section];
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            config_error("config line " + std::to_string(line_no) + ": expected key=value");
        if (section.empty())
            config_error("config line " + std::to_string(line_no) + ": key outside any section");
        out[section][strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    return out;
}

class Extractor {
public:
    explicit Extractor(KvMap kv) : kv_(std::move(kv)) {}

    bool has(const std::string& section, const std::string& key) {
        auto s = kv_.find(section);
        return s != kv_.end() && s->second.count(key) > 0;
    }

    std::string take(const std::string& section, const std::string& key) {
        consumed_[section].insert(key);
        return kv_.at(section).at(key);
    }

    void take_int(const std::string& section, const std::string& key, int& out) {
        if (!has(section, key)) return;
        try {
            out = std::stoi(take(section, key));
        } catch (const std::exception&) {
            config_error("config [" + section + "] " + key + ": not an integer");
        }
    }

    void take_u64(const std::string& section, const std::string& key, uint64_t& out) {
        if (!has(section, key)) return;
        try {
            out = std::stoull(take(section, key));
        } catch (const std::exception&) {
            config_error("config [" + section + "] " + key + ": not an integer");
        }
    }

    void take_i64(const std::string& section, const std::string& key, int64_t& out) {
        if (!has(section, key)) return;
        try {
            out = std::stoll(take(section, key));
        } catch (const std::exception&) {
            config_error("config [" + section + "] " + key + ": not an integer");
        }
    }

    void take_double(const std::string& section, const std::string& key, double& out) {
        if (!has(section, key)) return;
        try {
            out = std::stod(take(section, key));
        } catch (const std::exception&) {
            config_error("config [" + section + "] " + key + ": not a number");
        }
    }

    void take_string(const std::string& section, const std::string& key, std::string& out) {
        if (!has(section, key)) return;
        out = take(section, key);
    }

    void take_int4(const std::string& section, const std::string& key, std::array<int, 4>& out) {
        if (!has(section, key)) return;
        std::istringstream ss(take(section, key));
        std::string item;
        int i = 0;
        while (std::getline(ss, item, ',') && i < 4) out[i++] = std::stoi(item);
        if (i != 4) config_error("config [" + section + "] " + key + ": expected 4 integers");
    }

    void take_pools(const std::string& section, const std::string& key,
                    std::array<std::pair<int, int>, 4>& out) {
        if (!has(section, key)) return;
        std::istringstream ss(take(section, key));
        std::string item;
        int i = 0;
        while (std::getline(ss, item, ',') && i < 4) {
            auto x = item.find('x');
            if (x == std::string::npos)
                config_error("config [" + section + "] " + key + ": expected TxF pairs");
            out[i++] = {std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1))};
        }
        if (i != 4) config_error("config [" + section + "] " + key + ": expected 4 TxF pairs");
    }

    void reject_unknown() const {
        static const std::map<std::string, bool> known_sections = {
            {"dsp", true}, {"corpus", true}, {"model", true}, {"training", true},
            {"evaluation", true}};
        for (const auto& [section, keys] : kv_) {
            if (known_sections.find(section) == known_sections.end())
                config_error("config: unknown section [" + section + "]");
            auto c = consumed_.find(section);
            for (const auto& [key, value] : keys) {
                (void)value;
                if (c == consumed_.end() || c->second.find(key) == c->second.end())
                    config_error("config: unknown key '" + key + "' in section [" + section + "]");
            }
        }
    }

private:
    KvMap kv_;
    std::map<std::string, std::set<std::string>> consumed_;
};

} // namespace

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
    KvMap kv = parse_ini(text);
    for (const std::string& ov : overrides) {
        auto eq = ov.find('=');
        auto dot = ov.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            config_error("config override '" + ov + "': expected section.key=value");
        kv[ov.substr(0, dot)][ov.substr(dot + 1, eq - dot - 1)] = ov.substr(eq + 1);
    }

    ExperimentConfig cfg;
    Extractor ex(std::move(kv));

    ex.take_int("dsp", "mixture_sample_rate", cfg.dsp.mixture_sample_rate);
    ex.take_int("dsp", "mixture_window", cfg.dsp.mixture_window);
    ex.take_int("dsp", "mixture_hop", cfg.dsp.mixture_hop);
    ex.take_int("dsp", "mixture_mels", cfg.dsp.mixture_mels);
    ex.take_int("dsp", "reference_sample_rate", cfg.dsp.reference_sample_rate);
    ex.take_int("dsp", "reference_window", cfg.dsp.reference_window);
    ex.take_int("dsp", "reference_hop", cfg.dsp.reference_hop);
    ex.take_int("dsp", "reference_mels", cfg.dsp.reference_mels);
    ex.take_int("dsp", "reference_mfcc", cfg.dsp.reference_mfcc);
    ex.take_double("dsp", "log_eps", cfg.dsp.log_eps);
    ex.take_string("dsp", "cache_dir", cfg.dsp.cache_dir);

    ex.take_double("corpus", "duration", cfg.corpus.params.duration);
    ex.take_int("corpus", "min_events", cfg.corpus.params.min_events);
    ex.take_int("corpus", "max_events", cfg.corpus.params.max_events);
    ex.take_double("corpus", "snr_min_db", cfg.corpus.params.snr_min_db);
    ex.take_double("corpus", "snr_max_db", cfg.corpus.params.snr_max_db);
    ex.take_double("corpus", "background_rms", cfg.corpus.params.background_rms);
    ex.take_int("corpus", "sample_rate", cfg.corpus.params.sample_rate);
    ex.take_int("corpus", "toy_categories", cfg.corpus.toy_categories);
    ex.take_int("corpus", "toy_clips_per_category", cfg.corpus.toy_clips_per_category);
    ex.take_i64("corpus", "train_soundscapes", cfg.corpus.sizes.train_soundscapes);
    ex.take_i64("corpus", "validation_soundscapes", cfg.corpus.sizes.validation_soundscapes);
    ex.take_i64("corpus", "test_soundscapes", cfg.corpus.sizes.test_soundscapes);

    ex.take_int4("model", "cond_channels", cfg.model.cond_channels);
    ex.take_pools("model", "cond_pools", cfg.model.cond_pools);
    ex.take_int("model", "embedding_dim", cfg.model.embedding_dim);
    ex.take_int4("model", "det_channels", cfg.model.det_channels);
    ex.take_pools("model", "det_pools", cfg.model.det_pools);
    ex.take_int("model", "det_gru_hidden", cfg.model.det_gru_hidden);
    ex.take_int("model", "det_fc_hidden", cfg.model.det_fc_hidden);
    ex.take_int("model", "det_proj_dim", cfg.model.det_proj_dim);
    if (ex.has("model", "fusion")) {
        const std::string fusion = ex.take("model", "fusion");
        if (fusion == "concat") cfg.model.fusion = FusionKind::Concat;
        else if (fusion == "multiply") cfg.model.fusion = FusionKind::Multiply;
        else config_error("config [model] fusion: expected concat or multiply");
    }
    if (ex.has("model", "categories")) {
        std::istringstream ss(ex.take("model", "categories"));
        std::string item;
        cfg.model.categories.clear();
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) cfg.model.categories.push_back(item);
        }
    }

    ex.take_int("training", "batch_size", cfg.training.batch_size);
    ex.take_u64("training", "seed", cfg.training.seed);
    ex.take_double("training", "pretrain_lr", cfg.training.pretrain_lr);
    ex.take_int("training", "pretrain_epochs", cfg.training.pretrain_epochs);
    ex.take_double("training", "detect_lr", cfg.training.detect_lr);
    ex.take_int("training", "detect_epochs", cfg.training.detect_epochs);
    ex.take_double("training", "finetune_lr", cfg.training.finetune_lr);
    ex.take_int("training", "finetune_epochs", cfg.training.finetune_epochs);
    if (ex.has("training", "mixup")) {
        const std::string mix = ex.take("training", "mixup");
        if (mix == "off") {
            cfg.training.mixup = MixupMode::Off;
        } else if (mix == "linear") {
            cfg.training.mixup = MixupMode::Linear;
        } else if (mix.rfind("fixed:", 0) == 0) {
            cfg.training.mixup = MixupMode::Fixed;
            cfg.training.mixup_fixed_ratio = std::stod(mix.substr(6));
        } else {
            config_error("config [training] mixup: expected off, fixed:<r> or linear");
        }
    }
    ex.take_double("training", "mixup_alpha_start", cfg.training.mixup_cfg.alpha_start);
    ex.take_double("training", "mixup_alpha_end", cfg.training.mixup_cfg.alpha_end);
    ex.take_double("training", "grad_clip", cfg.training.grad_clip);
    ex.take_string("training", "supervision", cfg.training.supervision);

    ex.take_double("evaluation", "segment_length", cfg.eval.segment_length);
    ex.take_double("evaluation", "threshold", cfg.eval.threshold);
    ex.take_int("evaluation", "median_window", cfg.eval.median_window);

    ex.reject_unknown();

    // range checks for values the pipelines assume
    if (cfg.dsp.mixture_hop < 1 || cfg.dsp.mixture_window < 2)
        config_error("config [dsp]: mixture window/hop out of range");
    if (cfg.training.supervision != "strong" && cfg.training.supervision != "weak")
        config_error("config [training] supervision: expected strong or weak");
    const auto& mc = cfg.training.mixup_cfg;
    if (!(0.0 <= mc.alpha_end && mc.alpha_end <= mc.alpha_start && mc.alpha_start <= 1.0))
        config_error("config [training]: need 0 <= mixup_alpha_end <= mixup_alpha_start <= 1");
    if (cfg.eval.median_window < 1 || cfg.eval.median_window % 2 == 0)
        config_error("config [evaluation] median_window: must be odd");
    if (cfg.eval.threshold <= 0.0 || cfg.eval.threshold >= 1.0)
        config_error("config [evaluation] threshold: must be in (0,1)");

    cfg.model.mixture_bins = cfg.dsp.mixture_mels;
    cfg.model.reference_bins = cfg.dsp.reference_mels + cfg.dsp.reference_mfcc;
    return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::string text;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) config_error("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    return parse_config_text(text, overrides);
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string ExperimentConfig::canonical() const {
    std::ostringstream out;
    out << "[corpus]\n";
    out << "background_rms = " << fmt_double(corpus.params.background_rms) << '\n';
    out << "duration = " << fmt_double(corpus.params.duration) << '\n';
    out << "max_events = " << corpus.params.max_events << '\n';
    out << "min_events = " << corpus.params.min_events << '\n';
    out << "sample_rate = " << corpus.params.sample_rate << '\n';
    out << "snr_max_db = " << fmt_double(corpus.params.snr_max_db) << '\n';
    out << "snr_min_db = " << fmt_double(corpus.params.snr_min_db) << '\n';
    out << "test_soundscapes = " << corpus.sizes.test_soundscapes << '\n';
    out << "toy_categories = " << corpus.toy_categories << '\n';
    out << "toy_clips_per_category = " << corpus.toy_clips_per_category << '\n';
    out << "train_soundscapes = " << corpus.sizes.train_soundscapes << '\n';
    out << "validation_soundscapes = " << corpus.sizes.validation_soundscapes << '\n';
    out << "[dsp]\n";
    out << "cache_dir = " << dsp.cache_dir << '\n';
    out << "log_eps = " << fmt_double(dsp.log_eps) << '\n';
    out << "mixture_hop = " << dsp.mixture_hop << '\n';
    out << "mixture_mels = " << dsp.mixture_mels << '\n';
    out << "mixture_sample_rate = " << dsp.mixture_sample_rate << '\n';
    out << "mixture_window = " << dsp.mixture_window << '\n';
    out << "reference_hop = " << dsp.reference_hop << '\n';
    out << "reference_mels = " << dsp.reference_mels << '\n';
    out << "reference_mfcc = " << dsp.reference_mfcc << '\n';
    out << "reference_sample_rate = " << dsp.reference_sample_rate << '\n';
    out << "reference_window = " << dsp.reference_window << '\n';
    out << "[evaluation]\n";
    out << "median_window = " << eval.median_window << '\n';
    out << "segment_length = " << fmt_double(eval.segment_length) << '\n';
    out << "threshold = " << fmt_double(eval.threshold) << '\n';
    out << "[model]\n";
    std::istringstream model_text(model.serialize());
    std::string line;
    std::vector<std::string> model_lines;
    while (std::getline(model_text, line)) {
        // bin widths derive from [dsp], they are not config keys
        if (line.rfind("mixture_bins=", 0) == 0 || line.rfind("reference_bins=", 0) == 0) continue;
        model_lines.push_back(line);
    }
    std::sort(model_lines.begin(), model_lines.end());
    for (const std::string& l : model_lines) {
        auto eq = l.find('=');
        out << l.substr(0, eq) << " = " << l.substr(eq + 1) << '\n';
    }
    out << "[training]\n";
    out << "batch_size = " << training.batch_size << '\n';
    out << "detect_epochs = " << training.detect_epochs << '\n';
    out << "detect_lr = " << fmt_double(training.detect_lr) << '\n';
    out << "finetune_epochs = " << training.finetune_epochs << '\n';
    out << "finetune_lr = " << fmt_double(training.finetune_lr) << '\n';
    out << "grad_clip = " << fmt_double(training.grad_clip) << '\n';
    switch (training.mixup) {
    case MixupMode::Off: out << "mixup = off\n"; break;
    case MixupMode::Linear: out << "mixup = linear\n"; break;
    case MixupMode::Fixed:
        out << "mixup = fixed:" << fmt_double(training.mixup_fixed_ratio) << '\n';
        break;
    }
    out << "mixup_alpha_end = " << fmt_double(training.mixup_cfg.alpha_end) << '\n';
    out << "mixup_alpha_start = " << fmt_double(training.mixup_cfg.alpha_start) << '\n';
    out << "pretrain_epochs = " << training.pretrain_epochs << '\n';
    out << "pretrain_lr = " << fmt_double(training.pretrain_lr) << '\n';
    out << "seed = " << training.seed << '\n';
    out << "supervision = " << training.supervision << '\n';
    return out.str();
}

namespace {

uint64_t fnv1a_str(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

uint64_t ExperimentConfig::config_hash() const { return fnv1a_str(canonical()); }

uint64_t ExperimentConfig::model_hash() const {
    return fnv1a_str(model.serialize()) ^ dsp_config_hash(dsp);
}

} // namespace tsd
