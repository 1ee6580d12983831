// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "tsd/common.hpp"

namespace tsd {

using nlohmann::json;

void Adam::step(const std::vector<nn::Param*>& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (nn::Param* p : params) {
        auto& [m, v] = moments_[p->name];
        if (m.v.size() != p->value.v.size()) {
            m.resize(p->value.shape);
            v.resize(p->value.shape);
        }
        for (size_t i = 0; i < p->value.v.size(); ++i) {
            const double g = p->grad.v[i];
            m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * g;
            v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * g * g;
            const double m_hat = m.v[i] / bc1;
            const double v_hat = v.v[i] / bc2;
            p->value.v[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

double clip_grad_norm(const std::vector<nn::Param*>& params, double max_norm) {
    double total = 0.0;
    for (const nn::Param* p : params) {
        for (double g : p->grad.v) total += g * g;
    }
    const double norm = std::sqrt(total);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (nn::Param* p : params) {
            for (double& g : p->grad.v) g *= scale;
        }
    }
    return norm;
}

namespace {

constexpr uint32_t kCheckpointVersion = 1;
constexpr char kMagic[8] = {'T', 'S', 'D', 'C', 'K', 'P', 'T', '\x01'};

struct ArrayRef {
    std::string name;
    const nn::Tensor* tensor;
};

std::vector<ArrayRef> gather_arrays(TsdNet& net, Adam* optimizer) {
    std::vector<ArrayRef> arrays;
    for (nn::Param* p : net.all_params()) {
        arrays.push_back({p->name, &p->value});
    }
    auto add_bn = [&arrays](std::vector<nn::BatchNorm2d*> bns) {
        for (nn::BatchNorm2d* bn : bns) {
            arrays.push_back({bn->gamma.name + ".running_mean", &bn->running_mean});
            arrays.push_back({bn->gamma.name + ".running_var", &bn->running_var});
        }
    };
    add_bn(net.conditional().batch_norms());
    add_bn(net.detection().batch_norms());
    if (optimizer != nullptr) {
        for (auto& [name, mv] : optimizer->moments()) {
            arrays.push_back({"adam.m." + name, &mv.first});
            arrays.push_back({"adam.v." + name, &mv.second});
        }
    }
    return arrays;
}

} // namespace

void save_checkpoint(const std::string& path, TsdNet& net, Adam* optimizer,
                     const CheckpointMeta& meta) {
    std::vector<ArrayRef> arrays = gather_arrays(net, optimizer);

    json header;
    header["version"] = kCheckpointVersion;
    header["stage"] = meta.stage;
    header["model_hash"] = meta.model_hash;
    header["seed"] = meta.seed;
    header["categories"] = meta.categories;
    header["model_config"] = meta.model_config;
    header["epoch"] = meta.epoch;
    header["val_metric"] = meta.val_metric;
    header["adam_step"] = optimizer != nullptr ? optimizer->step_count() : 0;
    header["adam_lr"] = optimizer != nullptr ? optimizer->lr() : 0.0;
    json dir = json::array();
    for (const ArrayRef& a : arrays) {
        json entry;
        entry["name"] = a.name;
        entry["shape"] = a.tensor->shape;
        entry["dtype"] = "f32";
        dir.push_back(entry);
    }
    header["arrays"] = dir;

    const std::string header_text = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) data_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, 8);
    const uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), 8);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    std::vector<float> buf;
    for (const ArrayRef& a : arrays) {
        buf.resize(a.tensor->v.size());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(a.tensor->v[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!out) data_error("save_checkpoint: write failed: " + path);
}

namespace {

json read_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        data_error("load_checkpoint: not a checkpoint file: " + path);
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), 8);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) data_error("load_checkpoint: truncated header: " + path);
    json header = json::parse(header_text);
    if (header.at("version").get<uint32_t>() != kCheckpointVersion)
        data_error("load_checkpoint: unsupported checkpoint version in " + path);
    return header;
}

CheckpointMeta meta_from_header(const json& header) {
    CheckpointMeta meta;
    meta.stage = header.at("stage").get<std::string>();
    meta.model_hash = header.at("model_hash").get<uint64_t>();
    meta.seed = header.at("seed").get<uint64_t>();
    meta.categories = header.at("categories").get<std::vector<std::string>>();
    meta.model_config = header.at("model_config").get<std::string>();
    meta.epoch = header.at("epoch").get<int>();
    meta.val_metric = header.at("val_metric").get<double>();
    return meta;
}

} // namespace

CheckpointMeta peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) data_error("load_checkpoint: cannot open " + path);
    return meta_from_header(read_header(in, path));
}

CheckpointMeta load_checkpoint(const std::string& path, TsdNet& net, Adam* optimizer,
                               uint64_t expected_model_hash, bool allow_mismatch) {
    std::ifstream in(path, std::ios::binary);
    if (!in) data_error("load_checkpoint: cannot open " + path);
    json header = read_header(in, path);
    CheckpointMeta meta = meta_from_header(header);

    if (meta.model_hash != expected_model_hash && !allow_mismatch) {
        data_error("load_checkpoint: config hash mismatch for " + path +
                   " (checkpoint " + std::to_string(meta.model_hash) + ", current " +
                   std::to_string(expected_model_hash) +
                   "); pass the explicit override to load anyway");
    }

    ModelConfig cfg = ModelConfig::deserialize(meta.model_config);
    cfg.categories = meta.categories;
    net = TsdNet(cfg);

    std::map<std::string, nn::Tensor*> targets;
    for (nn::Param* p : net.all_params()) targets[p->name] = &p->value;
    auto add_bn = [&targets](std::vector<nn::BatchNorm2d*> bns) {
        for (nn::BatchNorm2d* bn : bns) {
            targets[bn->gamma.name + ".running_mean"] = &bn->running_mean;
            targets[bn->gamma.name + ".running_var"] = &bn->running_var;
        }
    };
    add_bn(net.conditional().batch_norms());
    add_bn(net.detection().batch_norms());

    if (optimizer != nullptr) {
        optimizer->moments().clear();
        optimizer->set_step_count(header.value("adam_step", int64_t{0}));
    }

    std::vector<float> buf;
    for (const json& entry : header.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
        int64_t numel = 1;
        for (int64_t d : shape) numel *= d;
        buf.resize(static_cast<size_t>(numel));
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(numel * 4));
        if (!in) data_error("load_checkpoint: truncated data for array " + name + " in " + path);

        nn::Tensor* dst = nullptr;
        if (name.rfind("adam.m.", 0) == 0) {
            if (optimizer == nullptr) continue;
            dst = &optimizer->moments()[name.substr(7)].first;
        } else if (name.rfind("adam.v.", 0) == 0) {
            if (optimizer == nullptr) continue;
            dst = &optimizer->moments()[name.substr(7)].second;
        } else {
            auto it = targets.find(name);
            if (it == targets.end())
                data_error("load_checkpoint: unknown array '" + name + "' in " + path);
            dst = it->second;
        }
        dst->resize(shape);
        for (int64_t i = 0; i < numel; ++i) dst->v[static_cast<size_t>(i)] = buf[static_cast<size_t>(i)];
    }
    return meta;
}

} // namespace tsd
