// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0
//
// Target sound detection workbench: dataset synthesis, the three training
// stages, evaluation and the open-domain protocol, driven by one config file.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>

#include "tsd/common.hpp"
#include "tsd/config.hpp"
#include "tsd/corpus.hpp"
#include "tsd/manifest.hpp"
#include "tsd/metrics.hpp"
#include "tsd/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tsd;

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string run_dir; // exact experiment directory; empty: derive under the root
    uint64_t seed = 0;
    bool seed_set = false;
    std::string mode;
    std::string fusion;
    std::string mixup;
    double segment_length = 0.0;
    bool segment_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool with_mode = true) {
    cmd->add_option("--config", flags.config_path, "Config file (INI sections)");
    cmd->add_option("--set", flags.overrides, "Override a config key: section.key=value");
    cmd->add_option("--run-dir", flags.run_dir, "Exact experiment directory (no timestamp)");
    cmd->add_option("--seed", flags.seed, "Random seed")->each([&flags](const std::string&) {
        flags.seed_set = true;
    });
    if (with_mode) {
        cmd->add_option("--mode", flags.mode, "Supervision mode: strong, strong+ or weak")
            ->check(CLI::IsMember({"strong", "strong+", "weak"}));
    }
    cmd->add_option("--fusion", flags.fusion, "Fusion strategy: concat or multiply")
        ->check(CLI::IsMember({"concat", "multiply"}));
    cmd->add_option("--mixup", flags.mixup, "Mixup setting: off, fixed:<r> or linear");
    cmd->add_option("--segment-length", flags.segment_length, "Segment length in seconds")
        ->each([&flags](const std::string&) { flags.segment_set = true; });
}

ExperimentConfig resolve_config(const CommonFlags& flags, bool mode_sets_supervision) {
    std::vector<std::string> overrides;
    if (flags.seed_set) overrides.push_back("training.seed=" + std::to_string(flags.seed));
    if (!flags.fusion.empty()) overrides.push_back("model.fusion=" + flags.fusion);
    if (!flags.mixup.empty()) overrides.push_back("training.mixup=" + flags.mixup);
    if (mode_sets_supervision && !flags.mode.empty()) {
        overrides.push_back("training.supervision=" +
                            std::string(flags.mode == "weak" ? "weak" : "strong"));
    }
    if (flags.segment_set) {
        overrides.push_back("evaluation.segment_length=" + std::to_string(flags.segment_length));
    }
    overrides.insert(overrides.end(), flags.overrides.begin(), flags.overrides.end());
    return load_config(flags.config_path, overrides);
}

std::string experiment_root() {
    const char* env = std::getenv("TSD_EXPERIMENT_ROOT");
    return env != nullptr && *env != '\0' ? env : "experiments";
}

std::string make_run_dir(const CommonFlags& flags, const ExperimentConfig& cfg,
                         const std::string& stage) {
    if (!flags.run_dir.empty()) {
        fs::create_directories(flags.run_dir);
        return flags.run_dir;
    }
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    const auto stamp = std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
    char name[160];
    std::snprintf(name, sizeof(name), "%s/%s-seed%llu-%08llx-%lld", experiment_root().c_str(),
                  stage.c_str(), static_cast<unsigned long long>(cfg.training.seed),
                  static_cast<unsigned long long>(cfg.config_hash() & 0xFFFFFFFFULL),
                  static_cast<long long>(stamp));
    fs::create_directories(name);
    return name;
}

// every experiment directory gets the resolved config, the input hashes and
// the seed, enough to re-run the stage bit for bit
void write_run_metadata(const std::string& run_dir, const ExperimentConfig& cfg,
                        const std::string& command,
                        const std::vector<std::string>& input_files) {
    {
        std::ofstream out(run_dir + "/config.ini");
        out << cfg.canonical();
    }
    json meta;
    meta["version"] = kVersionString;
    meta["command"] = command;
    meta["seed"] = cfg.training.seed;
    meta["config_hash"] = cfg.config_hash();
    meta["model_hash"] = cfg.model_hash();
    json hashes = json::object();
    for (const std::string& path : input_files) {
        if (fs::exists(path)) hashes[path] = file_hash(path);
    }
    meta["manifest_hashes"] = hashes;
    std::ofstream out(run_dir + "/meta.json");
    out << meta.dump(2) << '\n';
}

int cmd_build_dataset(const CommonFlags& flags, const std::string& bank_manifest,
                      const std::string& out_dir) {
    ExperimentConfig cfg = resolve_config(flags, false);
    const DatasetMode mode = dataset_mode_from_name(flags.mode.empty() ? "strong" : flags.mode);

    fs::create_directories(out_dir);
    ClipBank bank;
    double separability = -1.0;
    if (bank_manifest.empty()) {
        bank = synth_toy_bank(cfg.training.seed, cfg.corpus.toy_categories,
                              cfg.corpus.toy_clips_per_category, out_dir,
                              cfg.corpus.params.sample_rate);
        separability = toy_bank_separability(bank, file_clip_loader(out_dir));
    } else {
        bank = read_bank_manifest(bank_manifest);
        // ingested clip paths resolve against the ingestion manifest's directory
        const std::string base = fs::path(bank_manifest).parent_path().string();
        for (BankEntry& e : bank.entries) {
            if (!e.path.empty() && e.path[0] != '/') e.path = base + "/" + e.path;
        }
        write_bank_manifest(out_dir + "/bank.jsonl", bank);
    }

    const double fps = static_cast<double>(cfg.dsp.mixture_sample_rate) / cfg.dsp.mixture_hop;
    BuildReport report = build_dataset(bank, mode, cfg.corpus.sizes, cfg.training.seed,
                                       cfg.corpus.params, fps, out_dir);
    report.toy_separability = separability;

    std::printf("dataset: %s (mode %s, seed %llu)\n", out_dir.c_str(),
                dataset_mode_name(mode).c_str(),
                static_cast<unsigned long long>(cfg.training.seed));
    for (const auto& [split, counts] : report.splits) {
        std::printf("  %-11s %4lld soundscapes  %5lld positives  %5lld negatives\n", split.c_str(),
                    static_cast<long long>(counts.soundscapes),
                    static_cast<long long>(counts.positives),
                    static_cast<long long>(counts.negatives));
    }
    if (separability >= 0.0) std::printf("  toy bank band-energy separability: %.3f\n", separability);
    return 0;
}

int cmd_pretrain(const CommonFlags& flags, const std::string& bank_path) {
    ExperimentConfig cfg = resolve_config(flags, true);
    ClipBank bank = read_bank_manifest(bank_path);
    const std::string bank_dir = fs::path(bank_path).parent_path().string();
    const std::string run_dir = make_run_dir(flags, cfg, "pretrain");
    write_run_metadata(run_dir, cfg, "pretrain", {bank_path});
    StageResult result = pretrain_conditional(bank, bank_dir, cfg, run_dir);
    std::printf("pretrain done: best val accuracy %.4f (epoch %d)\ncheckpoint: %s\n",
                result.best_val_metric, result.best_epoch, result.best_checkpoint.c_str());
    return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& data_dir, const std::string& init,
              bool finetune) {
    ExperimentConfig cfg = resolve_config(flags, true);
    const std::string train_manifest = data_dir + "/train.jsonl";
    const std::string val_manifest = data_dir + "/validation.jsonl";
    const std::string run_dir = make_run_dir(flags, cfg, finetune ? "finetune" : "train");
    write_run_metadata(run_dir, cfg, finetune ? "finetune" : "train",
                       {train_manifest, val_manifest, init});
    StageResult result =
        finetune ? joint_finetune(train_manifest, val_manifest, init, cfg, run_dir)
                 : train_detection(train_manifest, val_manifest, init, cfg, run_dir);
    std::printf("%s done: best val metric %.4f (epoch %d)\ncheckpoint: %s\n",
                finetune ? "finetune" : "train", result.best_val_metric, result.best_epoch,
                result.best_checkpoint.c_str());
    return 0;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& checkpoint,
                 const std::string& manifest, const std::string& out_path, bool allow_mismatch) {
    ExperimentConfig cfg = resolve_config(flags, false);
    EvalReport report = evaluate_checkpoint(checkpoint, manifest, cfg, allow_mismatch);
    const std::string text = report_to_json(report, cfg.eval);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << text << '\n';
    }
    std::fputs(report_to_table(report).c_str(), stdout);
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path) {
    std::ostringstream table;
    for (const std::string& path : inputs) {
        std::ifstream in(path);
        if (!in) data_error("report: cannot open " + path);
        json rec = json::parse(in);
        table << "== " << rec.value("dataset", path) << " ==\n";
        table << "checkpoint: " << rec.value("checkpoint_hash", "?") << "\n";
        char line[160];
        for (const auto& [cat, c] : rec.at("per_category").items()) {
            std::snprintf(line, sizeof(line), "%-15s tp %5lld  fp %5lld  fn %5lld  F %.4f\n",
                          cat.c_str(), c.at("tp").get<long long>(), c.at("fp").get<long long>(),
                          c.at("fn").get<long long>(), c.at("f").get<double>());
            table << line;
        }
        std::snprintf(line, sizeof(line), "macro F: %.4f\n", rec.at("macro_f").get<double>());
        table << line;
        if (rec.contains("clip_level")) {
            std::snprintf(line, sizeof(line), "clip accuracy: %.4f  clip macro F: %.4f\n",
                          rec["clip_level"].at("accuracy").get<double>(),
                          rec["clip_level"].at("macro_f").get<double>());
            table << line;
        }
        table << "\n";
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << table.str();
    }
    std::fputs(table.str().c_str(), stdout);
    return 0;
}

// open-domain protocol: exclude every training item that contains or targets
// a held-out category, train on the rest, evaluate on held-out targets only
int cmd_open_domain(const CommonFlags& flags, const std::string& data_dir,
                    const std::vector<std::string>& held_out_in) {
    ExperimentConfig cfg = resolve_config(flags, true);
    if (held_out_in.empty()) config_error("open-domain: --held-out must name categories");
    std::set<std::string> held_out(held_out_in.begin(), held_out_in.end());

    ClipBank bank = read_bank_manifest(data_dir + "/bank.jsonl");
    {
        std::set<std::string> known;
        for (const BankEntry& e : bank.entries) known.insert(e.category);
        for (const std::string& cat : held_out) {
            if (known.find(cat) == known.end())
                config_error("open-domain: held-out category '" + cat + "' not in the bank");
        }
    }

    const std::string run_dir = make_run_dir(flags, cfg, "open-domain");
    write_run_metadata(run_dir, cfg, "open-domain",
                       {data_dir + "/train.jsonl", data_dir + "/validation.jsonl",
                        data_dir + "/test.jsonl", data_dir + "/bank.jsonl"});
    const std::string split_dir = run_dir + "/split";
    fs::create_directories(split_dir);

    // per-soundscape category sets from the annotations
    std::map<std::string, std::set<std::string>> scape_cats;
    {
        std::ifstream in(data_dir + "/annotations.jsonl");
        if (!in) data_error("open-domain: missing annotations.jsonl in " + data_dir);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            scape_cats[rec.at("scape_id").get<std::string>()].insert(
                rec.at("category").get<std::string>());
        }
    }
    auto scape_clean = [&](const TsdSample& s) {
        const std::string scape_id = fs::path(s.mixture_path).stem().string();
        for (const std::string& cat : scape_cats[scape_id]) {
            if (held_out.count(cat) > 0) return false;
        }
        return held_out.count(s.target_category) == 0;
    };
    auto absolutize = [&](TsdSample s) {
        s.mixture_path = resolve_relative(data_dir + "/x", s.mixture_path);
        s.reference_path = resolve_relative(data_dir + "/x", s.reference_path);
        if (s.has_frame_labels && s.frame_labels_path.empty()) {
            s.frame_labels_path =
                resolve_relative(data_dir + "/x", "labels/" + s.sample_id + ".txt");
        } else if (s.has_frame_labels) {
            s.frame_labels_path = resolve_relative(data_dir + "/x", s.frame_labels_path);
        }
        return s;
    };

    int64_t kept = 0, dropped = 0;
    for (const char* split : {"train", "validation"}) {
        std::vector<TsdSample> filtered;
        for (const TsdSample& s : read_manifest(data_dir + "/" + split + ".jsonl")) {
            if (scape_clean(s)) {
                filtered.push_back(absolutize(s));
                ++kept;
            } else {
                ++dropped;
            }
        }
        if (filtered.empty())
            data_error("open-domain: no " + std::string(split) + " samples left after filtering");
        write_manifest(split_dir + "/" + std::string(split) + ".jsonl", filtered);
    }
    std::vector<TsdSample> held_out_test;
    for (const TsdSample& s : read_manifest(data_dir + "/test.jsonl")) {
        if (held_out.count(s.target_category) > 0) held_out_test.push_back(absolutize(s));
    }
    if (held_out_test.empty()) data_error("open-domain: no held-out test samples");
    write_manifest(split_dir + "/test_held_out.jsonl", held_out_test);

    // verification pass over the filtered training manifest
    for (const TsdSample& s : read_manifest(split_dir + "/train.jsonl")) {
        const std::string scape_id = fs::path(s.mixture_path).stem().string();
        for (const std::string& cat : scape_cats[scape_id]) {
            if (held_out.count(cat) > 0)
                data_error("open-domain: held-out category leaked into the training split");
        }
        if (held_out.count(s.target_category) > 0)
            data_error("open-domain: held-out target leaked into the training split");
    }
    std::printf("open-domain split: %lld samples kept, %lld excluded\n",
                static_cast<long long>(kept), static_cast<long long>(dropped));

    // bank for conditional pretraining drops the held-out categories as well
    ClipBank filtered_bank;
    for (BankEntry e : bank.entries) {
        if (held_out.count(e.category) > 0) continue;
        if (!e.path.empty() && e.path[0] != '/') e.path = data_dir + "/" + e.path;
        filtered_bank.entries.push_back(std::move(e));
    }
    write_bank_manifest(split_dir + "/bank.jsonl", filtered_bank);

    StageResult pre = pretrain_conditional(filtered_bank, data_dir, cfg, run_dir + "/pretrain");
    StageResult det = train_detection(split_dir + "/train.jsonl", split_dir + "/validation.jsonl",
                                      pre.best_checkpoint, cfg, run_dir + "/train");

    EvalReport report =
        evaluate_checkpoint(det.best_checkpoint, split_dir + "/test_held_out.jsonl", cfg, false);
    const double chance = chance_level(split_dir + "/test_held_out.jsonl", held_out_test, cfg.eval,
                                       20, cfg.training.seed + 17);

    json out;
    out["held_out"] = std::vector<std::string>(held_out.begin(), held_out.end());
    json cats = json::object();
    for (const auto& [cat, f] : report.f.per_category) cats[cat] = f;
    out["per_category_f"] = cats;
    out["average_f"] = report.f.macro_f;
    out["chance_level"] = chance;
    out["checkpoint"] = det.best_checkpoint;
    {
        std::ofstream o(run_dir + "/open_domain_report.json");
        o << out.dump(2) << '\n';
    }
    std::printf("open-domain F on held-out categories:\n");
    for (const auto& [cat, f] : report.f.per_category) std::printf("  %-15s %.4f\n", cat.c_str(), f);
    std::printf("  average %.4f (random-prediction chance level %.4f)\n", report.f.macro_f, chance);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tsd: target sound detection workbench"};
    app.require_subcommand(1);

    CommonFlags flags;

    std::string bank_manifest, out_dir;
    CLI::App* build = app.add_subcommand("build-dataset", "Synthesize a labelled dataset");
    add_common(build, flags);
    build->add_option("--bank", bank_manifest, "Clip-bank ingestion manifest (jsonl)");
    build->add_option("--out", out_dir, "Output dataset directory")->required();

    std::string bank_path;
    CLI::App* pretrain = app.add_subcommand("pretrain", "Pretrain the conditional network");
    add_common(pretrain, flags);
    pretrain->add_option("--bank", bank_path, "Bank manifest (jsonl)")->required();

    std::string data_dir, init_ckpt;
    CLI::App* train = app.add_subcommand("train", "Train the detection network");
    add_common(train, flags);
    train->add_option("--data", data_dir, "Dataset directory from build-dataset")->required();
    train->add_option("--init", init_ckpt, "Pretrain-stage checkpoint")->required();

    std::string ft_data, ft_init;
    CLI::App* finetune = app.add_subcommand("finetune", "Joint multi-task fine-tuning");
    add_common(finetune, flags);
    finetune->add_option("--data", ft_data, "Dataset directory")->required();
    finetune->add_option("--init", ft_init, "Train-stage checkpoint")->required();

    std::string ckpt, manifest, report_out;
    bool allow_mismatch = false;
    CLI::App* evaluate = app.add_subcommand("evaluate", "Segment-based macro F on a manifest");
    add_common(evaluate, flags, false);
    evaluate->add_option("--checkpoint", ckpt,
                         "Checkpoint path, or oracle / constant:<p> / random:<seed>")
        ->required();
    evaluate->add_option("--manifest", manifest, "Dataset manifest (jsonl)")->required();
    evaluate->add_option("--out", report_out, "Write the JSON report here");
    evaluate->add_flag("--allow-config-mismatch", allow_mismatch,
                       "Load the checkpoint even if the config hash differs");

    std::string od_data;
    std::vector<std::string> held_out;
    CLI::App* open_domain =
        app.add_subcommand("open-domain", "Hold out categories, retrain, evaluate on them");
    add_common(open_domain, flags);
    open_domain->add_option("--data", od_data, "Dataset directory")->required();
    open_domain->add_option("--held-out", held_out, "Held-out category names")
        ->required()
        ->delimiter(',');

    std::vector<std::string> report_inputs;
    std::string table_out;
    CLI::App* report = app.add_subcommand("report", "Render evaluation reports as a table");
    report->add_option("--in", report_inputs, "Evaluation report JSON files")->required();
    report->add_option("--out", table_out, "Write the table here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (build->parsed()) return cmd_build_dataset(flags, bank_manifest, out_dir);
        if (pretrain->parsed()) return cmd_pretrain(flags, bank_path);
        if (train->parsed()) return cmd_train(flags, data_dir, init_ckpt, false);
        if (finetune->parsed()) return cmd_train(flags, ft_data, ft_init, true);
        if (evaluate->parsed())
            return cmd_evaluate(flags, ckpt, manifest, report_out, allow_mismatch);
        if (open_domain->parsed()) return cmd_open_domain(flags, od_data, held_out);
        if (report->parsed()) return cmd_report(report_inputs, table_out);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
