// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <set>

#include "tsd/common.hpp"
#include "tsd/losses.hpp"
#include "tsd/manifest.hpp"
#include "tsd/mixup.hpp"
#include "tsd/rng.hpp"

namespace tsd {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// FeatureStore

FeatureStore::FeatureStore(DspConfig dsp, std::string base_dir)
    : dsp_(std::move(dsp)), base_dir_(std::move(base_dir)), dsp_hash_(dsp_config_hash(dsp_)) {}

const FeatureMatrix& FeatureStore::get(const std::string& rel_path, bool is_mixture) {
    auto& cache = is_mixture ? mixture_cache_ : reference_cache_;
    auto it = cache.find(rel_path);
    if (it != cache.end()) return it->second;

    const std::string cache_key = (is_mixture ? "mix:" : "ref:") + rel_path;
    FeatureMatrix feat;
    if (!feature_cache_load(dsp_.cache_dir, cache_key, dsp_hash_, feat)) {
        const std::string full =
            !rel_path.empty() && rel_path[0] == '/' ? rel_path : base_dir_ + "/" + rel_path;
        AudioClip clip = load_wav(full);
        feat = is_mixture ? mixture_features(clip, dsp_) : reference_features(clip, dsp_);
        feature_cache_store(dsp_.cache_dir, cache_key, dsp_hash_, feat);
    }
    return cache.emplace(rel_path, std::move(feat)).first->second;
}

const FeatureMatrix& FeatureStore::mixture(const std::string& rel_path) {
    return get(rel_path, true);
}

const FeatureMatrix& FeatureStore::reference(const std::string& rel_path) {
    return get(rel_path, false);
}

void assert_gradients_finite(const std::vector<nn::Param*>& params) {
    for (const nn::Param* p : params) {
        for (double g : p->grad.v) {
            if (!std::isfinite(g)) {
                divergence_error("non-finite gradient in parameter " + p->name);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// logging

namespace {

class StageLogger {
public:
    StageLogger(const std::string& out_dir)
        : step_log_(out_dir + "/train_log.jsonl"), epoch_log_(out_dir + "/val_log.jsonl") {}

    void step(const json& rec) { step_log_ << rec.dump() << '\n'; }
    void epoch(const json& rec) {
        epoch_log_ << rec.dump() << '\n';
        epoch_log_.flush();
    }

private:
    std::ofstream step_log_;
    std::ofstream epoch_log_;
};

void check_loss_finite(double loss) {
    if (!std::isfinite(loss)) divergence_error("training diverged: non-finite loss");
}

std::vector<double> labels_as_double(const std::vector<uint8_t>& labels) {
    std::vector<double> out(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) out[i] = labels[i];
    return out;
}

int category_index(const std::vector<std::string>& categories, const std::string& name) {
    auto it = std::find(categories.begin(), categories.end(), name);
    if (it == categories.end()) {
        data_error("category '" + name + "' is absent from the classification head (head covers " +
                   std::to_string(categories.size()) + " categories)");
    }
    return static_cast<int>(it - categories.begin());
}

double mixup_alpha(const TrainSettings& ts, int64_t step, int64_t total_steps) {
    switch (ts.mixup) {
    case MixupMode::Off: return 0.0;
    case MixupMode::Fixed: return ts.mixup_fixed_ratio;
    case MixupMode::Linear: return mixup_ratio(std::min(step, total_steps), total_steps, ts.mixup_cfg);
    }
    return 0.0;
}

std::string checkpoint_dir(const std::string& out_dir) {
    const std::string dir = out_dir + "/checkpoints";
    fs::create_directories(dir);
    return dir;
}

std::string epoch_checkpoint_path(const std::string& out_dir, int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "/epoch_%03d.ckpt", epoch);
    return checkpoint_dir(out_dir) + buf;
}

} // namespace

// ---------------------------------------------------------------------------
// evaluation adapters

FrameProbFn model_prob_fn(TsdNet& net, FeatureStore& store) {
    return [&net, &store](const TsdSample& sample,
                          const std::vector<uint8_t>& ref_labels) -> std::vector<double> {
        (void)ref_labels;
        const FeatureMatrix& mix = store.mixture(sample.mixture_path);
        const FeatureMatrix& ref = store.reference(sample.reference_path);
        ConditionalOutput cond = net.conditional().forward(ref, /*train=*/false);
        DetectionOutput det = net.detection().forward(mix, cond.embedding,
                                                      DetectionMode::Strong, /*train=*/false);
        return det.frame_probs;
    };
}

namespace {

// evaluation adapter with embeddings precomputed per reference clip; valid
// while the conditional network stays frozen
FrameProbFn cached_prob_fn(TsdNet& net, FeatureStore& store,
                           std::map<std::string, nn::Tensor>& cache) {
    return [&net, &store, &cache](const TsdSample& sample,
                                  const std::vector<uint8_t>&) -> std::vector<double> {
        auto it = cache.find(sample.reference_path);
        if (it == cache.end()) {
            ConditionalOutput cond =
                net.conditional().forward(store.reference(sample.reference_path), false);
            it = cache.emplace(sample.reference_path, std::move(cond.embedding)).first;
        }
        const FeatureMatrix& mix = store.mixture(sample.mixture_path);
        DetectionOutput det =
            net.detection().forward(mix, it->second, DetectionMode::Strong, false);
        return det.frame_probs;
    };
}

} // namespace

namespace {

double validation_metric_impl(TsdNet& net, FeatureStore& store, const std::string& manifest_path,
                              const std::vector<TsdSample>& samples, const ExperimentConfig& cfg,
                              std::map<std::string, nn::Tensor>* embed_cache) {
    std::map<std::string, nn::Tensor> local_cache;
    std::map<std::string, nn::Tensor>& cache = embed_cache != nullptr ? *embed_cache : local_cache;
    auto embedding_for = [&](const std::string& ref_path) -> const nn::Tensor& {
        auto it = cache.find(ref_path);
        if (it == cache.end()) {
            ConditionalOutput cond = net.conditional().forward(store.reference(ref_path), false);
            it = cache.emplace(ref_path, std::move(cond.embedding)).first;
        }
        return it->second;
    };

    if (cfg.training.supervision == "weak") {
        // clip-level macro F from pooled frame probabilities
        std::map<std::string, CategoryCounts> counts;
        for (const TsdSample& s : samples) {
            if (!s.clip_label.has_value()) {
                data_error("weak validation needs clip labels in " + manifest_path);
            }
            const FeatureMatrix& mix = store.mixture(s.mixture_path);
            DetectionOutput det = net.detection().forward(mix, embedding_for(s.reference_path),
                                                          DetectionMode::Weak, false);
            const int predicted = *det.clip_prob >= cfg.eval.threshold ? 1 : 0;
            CategoryCounts& cc = counts[s.target_category];
            if (predicted == 1 && *s.clip_label == 1) ++cc.tp;
            else if (predicted == 1 && *s.clip_label == 0) ++cc.fp;
            else if (predicted == 0 && *s.clip_label == 1) ++cc.fn;
        }
        double sum = 0.0;
        int64_t present = 0;
        for (const auto& [cat, c] : counts) {
            if (c.tp + c.fn > 0) {
                sum += f_score(c);
                ++present;
            }
        }
        return present > 0 ? sum / static_cast<double>(present) : 0.0;
    }
    EvalReport report =
        evaluate_manifest(manifest_path, samples, cached_prob_fn(net, store, cache), cfg.eval);
    return report.f.macro_f;
}

} // namespace

double validation_metric(TsdNet& net, FeatureStore& store, const std::string& manifest_path,
                         const std::vector<TsdSample>& samples, const ExperimentConfig& cfg) {
    return validation_metric_impl(net, store, manifest_path, samples, cfg, nullptr);
}

// ---------------------------------------------------------------------------
// pretrain

StageResult pretrain_conditional(const ClipBank& bank, const std::string& bank_dir,
                                 const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    StageLogger logger(out_dir);

    std::vector<std::string> categories = cfg.model.categories;
    if (categories.empty()) {
        categories = bank.categories();
    } else {
        for (const std::string& cat : bank.categories()) {
            category_index(categories, cat); // throws when the head lacks a manifest category
        }
    }

    ModelConfig model_cfg = cfg.model;
    model_cfg.categories = categories;
    TsdNet net(model_cfg);
    net.init_params(cfg.training.seed);

    FeatureStore store(cfg.dsp, bank_dir);

    std::vector<const BankEntry*> train_clips = bank.split_entries("train");
    std::vector<const BankEntry*> val_clips = bank.split_entries("validation");
    if (train_clips.empty()) data_error("pretrain: bank has no train split");

    Adam optimizer(cfg.training.pretrain_lr);
    std::vector<nn::Param*> cond_params = net.conditional().params();
    Rng rng = Rng(cfg.training.seed).substream(100);

    const int64_t n = static_cast<int64_t>(train_clips.size());
    const int batch = std::max(1, cfg.training.batch_size);
    int64_t global_step = 0;

    StageResult result;
    CheckpointMeta meta;
    meta.stage = "pretrain-conditional";
    meta.model_hash = cfg.model_hash();
    meta.seed = cfg.training.seed;
    meta.categories = categories;
    meta.model_config = model_cfg.serialize();

    for (int epoch = 0; epoch < cfg.training.pretrain_epochs; ++epoch) {
        std::vector<int64_t> order(n);
        for (int64_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);

        int64_t train_correct = 0;
        for (int64_t start = 0; start < n; start += batch) {
            const int64_t end = std::min(n, start + static_cast<int64_t>(batch));
            const double inv_b = 1.0 / static_cast<double>(end - start);
            net.zero_grads();
            double batch_loss = 0.0;
            for (int64_t i = start; i < end; ++i) {
                const BankEntry* clip = train_clips[static_cast<size_t>(order[i])];
                const FeatureMatrix& feat = store.reference(clip->path);
                ConditionalOutput out = net.conditional().forward(feat, /*train=*/true);

                std::vector<double> logits(out.logits.v.begin(), out.logits.v.end());
                std::vector<double> d_logits;
                const int target = category_index(categories, clip->category);
                const double loss = softmax_cross_entropy(logits, target, d_logits);
                batch_loss += loss * inv_b;

                const auto best =
                    std::max_element(logits.begin(), logits.end()) - logits.begin();
                if (static_cast<int>(best) == target) ++train_correct;

                nn::Tensor d_logits_t({static_cast<int64_t>(d_logits.size())});
                for (size_t j = 0; j < d_logits.size(); ++j) d_logits_t.v[j] = d_logits[j] * inv_b;
                nn::Tensor d_embed({model_cfg.embedding_dim});
                net.conditional().backward(d_embed, d_logits_t);
            }
            check_loss_finite(batch_loss);
            assert_gradients_finite(cond_params);
            clip_grad_norm(cond_params, cfg.training.grad_clip);
            optimizer.step(cond_params);

            logger.step({{"step", global_step},
                         {"epoch", epoch},
                         {"stage", "pretrain-conditional"},
                         {"alpha", 0.0},
                         {"l_sed", 0.0},
                         {"l_cls", batch_loss},
                         {"l_total", batch_loss},
                         {"lr", optimizer.lr()}});
            ++global_step;
        }

        // validation accuracy
        int64_t val_correct = 0;
        for (const BankEntry* clip : val_clips) {
            const FeatureMatrix& feat = store.reference(clip->path);
            ConditionalOutput out = net.conditional().forward(feat, /*train=*/false);
            const auto best =
                std::max_element(out.logits.v.begin(), out.logits.v.end()) - out.logits.v.begin();
            if (categories[static_cast<size_t>(best)] == clip->category) ++val_correct;
        }
        const double train_acc = static_cast<double>(train_correct) / static_cast<double>(n);
        const double val_acc = val_clips.empty()
                                   ? train_acc
                                   : static_cast<double>(val_correct) /
                                         static_cast<double>(val_clips.size());

        meta.epoch = epoch;
        meta.val_metric = val_acc;
        const std::string epoch_path = epoch_checkpoint_path(out_dir, epoch);
        save_checkpoint(epoch_path, net, &optimizer, meta);
        if (val_acc > result.best_val_metric) {
            result.best_val_metric = val_acc;
            result.best_epoch = epoch;
            result.best_checkpoint = checkpoint_dir(out_dir) + "/best.ckpt";
            fs::copy_file(epoch_path, result.best_checkpoint, fs::copy_options::overwrite_existing);
        }
        result.final_val_metric = val_acc;
        logger.epoch({{"epoch", epoch},
                      {"stage", "pretrain-conditional"},
                      {"train_accuracy", train_acc},
                      {"val_accuracy", val_acc},
                      {"best_epoch", result.best_epoch}});
        std::printf("pretrain epoch %d: train acc %.3f, val acc %.3f\n", epoch, train_acc, val_acc);
        std::fflush(stdout);
    }

    result.final_checkpoint = checkpoint_dir(out_dir) + "/final.ckpt";
    save_checkpoint(result.final_checkpoint, net, &optimizer, meta);
    return result;
}

// ---------------------------------------------------------------------------
// shared detection-stage loop

namespace {

struct SampleData {
    const TsdSample* sample = nullptr;
    std::vector<double> labels; // frame labels (strong) or one clip bit (weak)
    int category = -1;
};

SampleFeatures sample_features(FeatureStore& store, const SampleData& data) {
    SampleFeatures f;
    f.mixture = store.mixture(data.sample->mixture_path);
    f.reference = store.reference(data.sample->reference_path);
    f.labels = data.labels;
    return f;
}

void check_supervision(const std::vector<TsdSample>& samples, const std::string& supervision,
                       const std::string& manifest_path) {
    for (const TsdSample& s : samples) {
        const bool manifest_weak = s.mode == DatasetMode::Weak;
        if (manifest_weak != (supervision == "weak")) {
            config_error("manifest " + manifest_path + " is " + dataset_mode_name(s.mode) +
                         "-labelled but training.supervision is " + supervision);
        }
    }
}

struct DetectionStageSetup {
    std::vector<TsdSample> train_samples;
    std::vector<TsdSample> val_samples;
    std::vector<SampleData> train_data;
};

DetectionStageSetup load_detection_stage(const std::string& train_manifest,
                                         const std::string& val_manifest,
                                         const ExperimentConfig& cfg,
                                         const std::vector<std::string>& categories) {
    DetectionStageSetup setup;
    setup.train_samples = read_manifest(train_manifest);
    setup.val_samples = read_manifest(val_manifest);
    if (setup.train_samples.empty()) data_error("empty training manifest: " + train_manifest);
    check_supervision(setup.train_samples, cfg.training.supervision, train_manifest);

    const bool weak = cfg.training.supervision == "weak";
    for (TsdSample& s : setup.train_samples) {
        SampleData data;
        data.sample = &s;
        if (weak) {
            if (!s.clip_label.has_value())
                data_error("weak training sample " + s.sample_id + " lacks a clip label");
            data.labels = {static_cast<double>(*s.clip_label)};
        } else {
            if (!s.has_frame_labels)
                data_error("strong training sample " + s.sample_id + " lacks frame labels");
            data.labels = labels_as_double(load_frame_labels(train_manifest, s));
        }
        data.category = category_index(categories, s.target_category);
        setup.train_data.push_back(std::move(data));
    }
    return setup;
}

struct ItemLoss {
    double l_sed = 0.0;
    double l_cls = 0.0;
};

// forward + backward for one (possibly mixed) sample; gradients scaled by w
ItemLoss detection_item_pass(TsdNet& net, const SampleFeatures& feats,
                             const std::vector<double>& cls_target, bool weak, bool joint,
                             double w, const nn::Tensor* cached_embedding) {
    ItemLoss out;

    ConditionalOutput cond;
    if (cached_embedding != nullptr) {
        cond.embedding = *cached_embedding;
    } else {
        cond = net.conditional().forward(feats.reference, /*train=*/joint);
    }

    const DetectionMode mode = weak ? DetectionMode::Weak : DetectionMode::Strong;
    DetectionOutput det = net.detection().forward(feats.mixture, cond.embedding, mode,
                                                  /*train=*/true);

    std::vector<double> d_frames;
    double d_clip = 0.0;
    if (weak) {
        out.l_sed = clip_bce(*det.clip_prob, feats.labels[0]);
        d_clip = clip_bce_grad(*det.clip_prob, feats.labels[0]) * w;
    } else {
        // labels may be one frame shorter/longer than the probe due to
        // rounding at clip edges; align on the shorter length
        std::vector<double> labels = feats.labels;
        std::vector<double> probs = det.frame_probs;
        const size_t t = std::min(labels.size(), probs.size());
        labels.resize(t);
        probs.resize(t);
        out.l_sed = frame_bce(probs, labels);
        std::vector<double> g = frame_bce_grad(probs, labels);
        d_frames.assign(det.frame_probs.size(), 0.0);
        for (size_t i = 0; i < t; ++i) d_frames[i] = g[i] * w;
    }

    nn::Tensor d_embedding = net.detection().backward(d_frames, d_clip);

    if (joint) {
        std::vector<double> logits(cond.logits.v.begin(), cond.logits.v.end());
        std::vector<double> d_logits;
        out.l_cls = softmax_cross_entropy(logits, cls_target, d_logits);
        nn::Tensor d_logits_t({static_cast<int64_t>(d_logits.size())});
        for (size_t j = 0; j < d_logits.size(); ++j) d_logits_t.v[j] = d_logits[j] * w;
        net.conditional().backward(d_embedding, d_logits_t);
    }
    return out;
}

StageResult run_detection_stage(const std::string& train_manifest, const std::string& val_manifest,
                                const std::string& init_checkpoint, const ExperimentConfig& cfg,
                                const std::string& out_dir, bool joint) {
    fs::create_directories(out_dir);
    StageLogger logger(out_dir);

    const std::string stage_name = joint ? "joint-finetune" : "train-detection";
    const double lr = joint ? cfg.training.finetune_lr : cfg.training.detect_lr;
    const int epochs = joint ? cfg.training.finetune_epochs : cfg.training.detect_epochs;

    TsdNet net;
    CheckpointMeta init_meta =
        load_checkpoint(init_checkpoint, net, nullptr, cfg.model_hash(), false);
    const std::vector<std::string>& categories = net.config().categories;

    DetectionStageSetup setup =
        load_detection_stage(train_manifest, val_manifest, cfg, categories);

    const std::string base_dir = fs::path(train_manifest).parent_path().string();
    FeatureStore store(cfg.dsp, base_dir);
    const bool weak = cfg.training.supervision == "weak";

    // frozen stage: embeddings are constant per clip, compute them once
    std::map<std::string, nn::Tensor> embedding_cache;
    std::map<std::string, nn::Tensor> val_embedding_cache;
    if (!joint) {
        std::set<std::string> ref_paths;
        for (const TsdSample& s : setup.train_samples) ref_paths.insert(s.reference_path);
        for (const std::string& path : ref_paths) {
            ConditionalOutput out = net.conditional().forward(store.reference(path), false);
            embedding_cache.emplace(path, std::move(out.embedding));
        }
    }

    Adam optimizer(lr);
    std::vector<nn::Param*> trained_params =
        joint ? net.all_params() : net.detection().params();
    Rng rng = Rng(cfg.training.seed).substream(joint ? 300 : 200);

    const int64_t n = static_cast<int64_t>(setup.train_data.size());
    const int batch = std::max(1, cfg.training.batch_size);
    const int64_t steps_per_epoch = (n + batch - 1) / batch;
    const int64_t total_steps = std::max<int64_t>(1, steps_per_epoch * epochs);
    int64_t global_step = 0;

    StageResult result;
    CheckpointMeta meta = init_meta;
    meta.stage = stage_name;
    meta.model_hash = cfg.model_hash();
    meta.seed = cfg.training.seed;

    if (joint) {
        result.init_val_metric =
            validation_metric(net, store, val_manifest, setup.val_samples, cfg);
        logger.epoch({{"epoch", -1}, {"stage", stage_name},
                      {"val_metric", result.init_val_metric}, {"note", "init"}});
        std::printf("%s init: val metric %.4f\n", stage_name.c_str(), result.init_val_metric);
        std::fflush(stdout);
    }

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<int64_t> order(n);
        for (int64_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);

        for (int64_t start = 0; start < n; start += batch) {
            const int64_t end = std::min(n, start + static_cast<int64_t>(batch));
            const int64_t b = end - start;
            const double inv_b = 1.0 / static_cast<double>(b);

            const double alpha = mixup_alpha(cfg.training, global_step, total_steps);
            const bool mixed = alpha > 0.0 && rng.uniform() < alpha;
            double lambda = 1.0;
            std::vector<int64_t> partner(static_cast<size_t>(b));
            if (mixed) {
                lambda = rng.beta(cfg.training.mixup_cfg.beta_a, cfg.training.mixup_cfg.beta_b);
                for (int64_t i = 0; i < b; ++i) partner[static_cast<size_t>(i)] = i;
                rng.shuffle(partner);
            }

            net.zero_grads();
            double batch_sed = 0.0, batch_cls = 0.0;
            for (int64_t i = 0; i < b; ++i) {
                const SampleData& a_data = setup.train_data[static_cast<size_t>(order[start + i])];
                ItemLoss item;
                if (mixed) {
                    const SampleData& b_data =
                        setup.train_data[static_cast<size_t>(order[start + partner[static_cast<size_t>(i)]])];
                    SampleFeatures fused = mixup_pair(sample_features(store, a_data),
                                                      sample_features(store, b_data), lambda);
                    std::vector<double> cls_target(categories.size(), 0.0);
                    cls_target[static_cast<size_t>(a_data.category)] += lambda;
                    cls_target[static_cast<size_t>(b_data.category)] += 1.0 - lambda;
                    item = detection_item_pass(net, fused, cls_target, weak, joint, inv_b, nullptr);
                } else {
                    SampleFeatures feats = sample_features(store, a_data);
                    std::vector<double> cls_target(categories.size(), 0.0);
                    cls_target[static_cast<size_t>(a_data.category)] = 1.0;
                    const nn::Tensor* cached = nullptr;
                    if (!joint) cached = &embedding_cache.at(a_data.sample->reference_path);
                    item = detection_item_pass(net, feats, cls_target, weak, joint, inv_b, cached);
                }
                batch_sed += item.l_sed * inv_b;
                batch_cls += item.l_cls * inv_b;
            }
            const double batch_total = joint ? batch_sed + batch_cls : batch_sed;
            check_loss_finite(batch_total);
            assert_gradients_finite(trained_params);
            clip_grad_norm(trained_params, cfg.training.grad_clip);
            optimizer.step(trained_params);

            json rec = {{"step", global_step}, {"epoch", epoch},   {"stage", stage_name},
                        {"alpha", alpha},      {"l_sed", batch_sed}, {"l_total", batch_total},
                        {"lr", optimizer.lr()}};
            if (joint) rec["l_cls"] = batch_cls;
            if (mixed) rec["lambda"] = lambda;
            logger.step(rec);
            ++global_step;
        }

        if (joint) val_embedding_cache.clear(); // conditional weights moved this epoch
        const double val_metric = validation_metric_impl(net, store, val_manifest,
                                                         setup.val_samples, cfg,
                                                         &val_embedding_cache);
        meta.epoch = epoch;
        meta.val_metric = val_metric;
        const std::string epoch_path = epoch_checkpoint_path(out_dir, epoch);
        save_checkpoint(epoch_path, net, &optimizer, meta);
        if (val_metric > result.best_val_metric) {
            result.best_val_metric = val_metric;
            result.best_epoch = epoch;
            result.best_checkpoint = checkpoint_dir(out_dir) + "/best.ckpt";
            fs::copy_file(epoch_path, result.best_checkpoint, fs::copy_options::overwrite_existing);
        }
        result.final_val_metric = val_metric;
        logger.epoch({{"epoch", epoch},
                      {"stage", stage_name},
                      {"val_metric", val_metric},
                      {"best_epoch", result.best_epoch}});
        std::printf("%s epoch %d: val metric %.4f (best %.4f @ %d)\n", stage_name.c_str(), epoch,
                    val_metric, result.best_val_metric, result.best_epoch);
        std::fflush(stdout);
    }

    result.final_checkpoint = checkpoint_dir(out_dir) + "/final.ckpt";
    save_checkpoint(result.final_checkpoint, net, &optimizer, meta);
    return result;
}

} // namespace

StageResult train_detection(const std::string& train_manifest, const std::string& val_manifest,
                            const std::string& init_checkpoint, const ExperimentConfig& cfg,
                            const std::string& out_dir) {
    const CheckpointMeta meta = peek_checkpoint(init_checkpoint);
    if (meta.stage != "pretrain-conditional" && meta.stage != "train-detection") {
        config_error("train: init checkpoint has stage '" + meta.stage +
                     "'; run pretrain first and pass its checkpoint");
    }
    return run_detection_stage(train_manifest, val_manifest, init_checkpoint, cfg, out_dir, false);
}

StageResult joint_finetune(const std::string& train_manifest, const std::string& val_manifest,
                           const std::string& init_checkpoint, const ExperimentConfig& cfg,
                           const std::string& out_dir) {
    const CheckpointMeta meta = peek_checkpoint(init_checkpoint);
    if (meta.stage != "train-detection") {
        config_error("finetune: init checkpoint has stage '" + meta.stage +
                     "'; run the detection stage first and pass its checkpoint");
    }
    return run_detection_stage(train_manifest, val_manifest, init_checkpoint, cfg, out_dir, true);
}

// ---------------------------------------------------------------------------
// evaluation entry point

EvalReport evaluate_checkpoint(const std::string& checkpoint_or_oracle,
                               const std::string& manifest_path, const ExperimentConfig& cfg,
                               bool allow_config_mismatch) {
    std::vector<TsdSample> samples = read_manifest(manifest_path);
    const std::string base_dir = fs::path(manifest_path).parent_path().string();

    EvalReport report;
    if (checkpoint_or_oracle == "oracle") {
        FrameProbFn oracle = [](const TsdSample&, const std::vector<uint8_t>& labels) {
            std::vector<double> p(labels.size());
            for (size_t i = 0; i < labels.size(); ++i) p[i] = labels[i] ? 1.0 - 1e-9 : 1e-9;
            return p;
        };
        report = evaluate_manifest(manifest_path, samples, oracle, cfg.eval);
        report.checkpoint_hash = "oracle";
    } else if (checkpoint_or_oracle.rfind("constant:", 0) == 0) {
        const double value = std::stod(checkpoint_or_oracle.substr(9));
        FrameProbFn constant = [value](const TsdSample& s, const std::vector<uint8_t>&) {
            const int64_t t = static_cast<int64_t>(s.duration * s.fps);
            return std::vector<double>(static_cast<size_t>(t),
                                       std::clamp(value, 1e-9, 1.0 - 1e-9));
        };
        report = evaluate_manifest(manifest_path, samples, constant, cfg.eval);
        report.checkpoint_hash = checkpoint_or_oracle;
    } else if (checkpoint_or_oracle.rfind("random:", 0) == 0) {
        auto rng = std::make_shared<Rng>(std::stoull(checkpoint_or_oracle.substr(7)));
        FrameProbFn random_probs = [rng](const TsdSample& s, const std::vector<uint8_t>&) {
            const int64_t t = static_cast<int64_t>(s.duration * s.fps);
            std::vector<double> p(static_cast<size_t>(t));
            for (double& x : p) x = rng->uniform();
            return p;
        };
        report = evaluate_manifest(manifest_path, samples, random_probs, cfg.eval);
        report.checkpoint_hash = checkpoint_or_oracle;
    } else {
        TsdNet net;
        load_checkpoint(checkpoint_or_oracle, net, nullptr, cfg.model_hash(),
                        allow_config_mismatch);
        FeatureStore store(cfg.dsp, base_dir);
        report = evaluate_manifest(manifest_path, samples, model_prob_fn(net, store), cfg.eval);
        report.checkpoint_hash = std::to_string(file_hash(checkpoint_or_oracle));
    }
    return report;
}

} // namespace tsd
