// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>

#include "tsd/common.hpp"
#include "tsd/corpus.hpp"
#include "tsd/manifest.hpp"

using namespace tsd;
namespace fs = std::filesystem;

namespace {

std::string temp_root() {
    static std::string dir = [] {
        std::string d = (fs::temp_directory_path() / "tsdkit_corpus_tests").string();
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// fake bank of named clips; loader produces distinct tones per category
ClipBank fake_bank(int n_categories, int clips_per_category) {
    ClipBank bank;
    for (int c = 0; c < n_categories; ++c) {
        for (int i = 0; i < clips_per_category; ++i) {
            BankEntry e;
            e.clip_id = "cat" + std::to_string(c) + "-" + std::to_string(i);
            e.category = "cat" + std::to_string(c);
            e.duration = 1.0;
            e.split = "train";
            e.path = e.clip_id + ".wav";
            bank.entries.push_back(e);
        }
    }
    return bank;
}

Soundscape fake_scape(const std::vector<EventAnnotation>& annotations,
                      const std::vector<std::string>& ingredients) {
    Soundscape s;
    s.id = "fake-0";
    s.duration = 10.0;
    s.annotations = annotations;
    s.ingredient_clip_ids = ingredients;
    return s;
}

} // namespace

TEST_CASE("frame_labels: rasterization matches the positive-measure overlap rule") {
    // no annotations
    std::vector<uint8_t> zeros = frame_labels({}, "cat0", 50.0, 500);
    for (uint8_t v : zeros) CHECK(v == 0);

    // event [1.0, 2.0) at 50 fps: frames 50..99
    std::vector<uint8_t> one = frame_labels({{"cat0", 1.0, 2.0}}, "cat0", 50.0, 500);
    for (int64_t i = 0; i < 500; ++i) {
        CHECK(one[static_cast<size_t>(i)] == (i >= 50 && i < 100 ? 1 : 0));
    }

    // event [0.99, 1.01): exactly frames 49 and 50
    std::vector<uint8_t> edge = frame_labels({{"cat0", 0.99, 1.01}}, "cat0", 50.0, 500);
    for (int64_t i = 0; i < 500; ++i) {
        CHECK(edge[static_cast<size_t>(i)] == (i == 49 || i == 50 ? 1 : 0));
    }

    // other categories do not contribute
    std::vector<uint8_t> other = frame_labels({{"cat1", 1.0, 2.0}}, "cat0", 50.0, 500);
    for (uint8_t v : other) CHECK(v == 0);
}

TEST_CASE("frame_labels equals a brute-force per-frame oracle on random cases") {
    Rng rng(7001);
    for (int trial = 0; trial < 200; ++trial) {
        const double fps = 50.0;
        const int64_t t = 100;
        std::vector<EventAnnotation> anns;
        const int k = static_cast<int>(rng.uniform_int(0, 4));
        for (int i = 0; i < k; ++i) {
            const double onset = rng.uniform(0.0, 1.9);
            const double offset = onset + rng.uniform(0.01, 1.0);
            anns.push_back({rng.uniform() < 0.7 ? "t" : "other", onset, offset});
        }
        std::vector<uint8_t> got = frame_labels(anns, "t", fps, t);
        for (int64_t i = 0; i < t; ++i) {
            bool expect = false;
            for (const EventAnnotation& a : anns) {
                if (a.category != "t") continue;
                const double lo = i / fps, hi = (i + 1) / fps;
                if (std::max(a.onset, lo) < std::min(a.offset, hi)) expect = true;
            }
            CHECK(got[static_cast<size_t>(i)] == (expect ? 1 : 0));
        }
    }
}

TEST_CASE("pink noise hits the requested rms and is deterministic") {
    Rng a(5), b(5);
    std::vector<double> x = pink_noise(a, 44100, 0.05);
    std::vector<double> y = pink_noise(b, 44100, 0.05);
    CHECK(x == y);
    double acc = 0.0;
    for (double s : x) acc += s * s;
    CHECK(std::sqrt(acc / x.size()) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("toy bank: shape, jitter, split coverage and separability") {
    const std::string dir = temp_root() + "/bank10";
    ClipBank bank = synth_toy_bank(101, 10, 20, dir);
    CHECK(bank.entries.size() == 200);

    std::map<std::string, int> per_cat;
    std::map<std::string, std::set<std::string>> split_cats;
    for (const BankEntry& e : bank.entries) {
        ++per_cat[e.category];
        split_cats[e.split].insert(e.category);
        CHECK(e.duration >= 1.0);
        CHECK(e.duration <= 4.0);
    }
    CHECK(per_cat.size() == 10);
    for (const auto& [cat, count] : per_cat) CHECK(count == 20);
    for (const char* split : {"train", "validation", "test"}) {
        CHECK(split_cats[split].size() == 10);
    }

    // two clips of one category are distinct waveforms
    AudioClip c0 = load_wav(dir + "/bank/cat0-0000.wav");
    AudioClip c1 = load_wav(dir + "/bank/cat0-0001.wav");
    CHECK(c0.samples != c1.samples);

    // band-energy oracle separates categories
    const double acc = toy_bank_separability(bank, file_clip_loader(dir));
    CHECK(acc >= 0.95);
}

TEST_CASE("synthesize_soundscape: zero events leaves the background alone") {
    const std::string dir = temp_root() + "/bank2";
    ClipBank bank = synth_toy_bank(55, 2, 10, dir);
    CorpusParams params;
    params.min_events = 0;
    params.max_events = 0;
    Rng rng(9);
    Soundscape scape = synthesize_soundscape(bank.split_entries("train"), file_clip_loader(dir),
                                             rng, params, "s0");
    CHECK(scape.annotations.empty());
    // background-only mixture matches the pink noise stream exactly
    Rng bg = Rng(9).substream(0);
    std::vector<double> noise = pink_noise(bg, static_cast<int64_t>(params.duration * 22050),
                                           params.background_rms);
    CHECK(scape.mixture.samples == noise);
}

TEST_CASE("synthesize_soundscape: deterministic in the seed") {
    const std::string dir = temp_root() + "/bank3";
    ClipBank bank = synth_toy_bank(56, 3, 10, dir);
    CorpusParams params;
    params.min_events = 1;
    params.max_events = 1;
    Rng r1(33), r2(33);
    Soundscape a = synthesize_soundscape(bank.split_entries("train"), file_clip_loader(dir), r1,
                                         params, "s0");
    Soundscape b = synthesize_soundscape(bank.split_entries("train"), file_clip_loader(dir), r2,
                                         params, "s0");
    CHECK(a.mixture.samples == b.mixture.samples);
    REQUIRE(a.annotations.size() == b.annotations.size());
    CHECK(a.annotations[0].onset == b.annotations[0].onset);
    CHECK(a.annotations[0].category == b.annotations[0].category);
}

TEST_CASE("synthesize_soundscape: a +20 dB event dominates the background region") {
    const std::string dir = temp_root() + "/bank4";
    ClipBank bank = synth_toy_bank(57, 3, 10, dir);
    CorpusParams params;
    params.min_events = 1;
    params.max_events = 1;
    params.snr_min_db = 20.0;
    params.snr_max_db = 20.0;
    Rng rng(41);
    Soundscape scape = synthesize_soundscape(bank.split_entries("train"), file_clip_loader(dir),
                                             rng, params, "s0");
    REQUIRE(scape.annotations.size() == 1);
    const EventAnnotation& a = scape.annotations[0];
    CHECK(a.offset <= scape.duration + 1e-9);

    auto rms_over = [&scape](double lo, double hi) {
        const int64_t i0 = static_cast<int64_t>(lo * scape.mixture.sample_rate);
        const int64_t i1 = static_cast<int64_t>(hi * scape.mixture.sample_rate);
        double acc = 0.0;
        for (int64_t i = i0; i < i1; ++i) acc += scape.mixture.samples[static_cast<size_t>(i)] *
                                                 scape.mixture.samples[static_cast<size_t>(i)];
        return std::sqrt(acc / std::max<int64_t>(1, i1 - i0));
    };
    // compare the middle of the event against a region with no event
    const double ev_mid_lo = a.onset + 0.25 * (a.offset - a.onset);
    const double ev_mid_hi = a.onset + 0.75 * (a.offset - a.onset);
    double bg_lo = 0.0, bg_hi = 0.0;
    if (a.onset > 1.0) {
        bg_lo = 0.0;
        bg_hi = a.onset * 0.8;
    } else {
        bg_lo = std::min(scape.duration - 0.5, a.offset + 0.2);
        bg_hi = scape.duration;
    }
    CHECK(rms_over(ev_mid_lo, ev_mid_hi) > rms_over(bg_lo, bg_hi));
}

TEST_CASE("make_positive_samples: one sample per distinct category, labels union intervals") {
    ClipBank bank = fake_bank(4, 3);
    std::vector<const BankEntry*> split = bank.split_entries("train");

    // three events, three distinct categories
    Soundscape s3 = fake_scape({{"cat0", 1.0, 2.0}, {"cat1", 3.0, 4.0}, {"cat2", 5.0, 6.0}},
                               {"cat0-0", "cat1-0", "cat2-0"});
    Rng rng(71);
    std::vector<DrawnSample> pos = make_positive_samples(s3, split, rng, 50.0, 500);
    CHECK(pos.size() == 3);
    for (const DrawnSample& d : pos) {
        CHECK(d.reference->category == d.target_category);
        for (const std::string& used : s3.ingredient_clip_ids) {
            CHECK(d.reference->clip_id != used);
        }
    }

    // zero events
    Soundscape s0 = fake_scape({}, {});
    CHECK(make_positive_samples(s0, split, rng, 50.0, 500).empty());

    // repeated category: one sample, labels are the union of both extents
    Soundscape s2 = fake_scape({{"cat0", 1.0, 2.0}, {"cat0", 4.0, 5.0}}, {"cat0-0", "cat0-1"});
    std::vector<DrawnSample> merged = make_positive_samples(s2, split, rng, 50.0, 500);
    REQUIRE(merged.size() == 1);
    for (int64_t i = 0; i < 500; ++i) {
        const bool in_a = i >= 50 && i < 100;
        const bool in_b = i >= 200 && i < 250;
        CHECK(merged[0].labels[static_cast<size_t>(i)] == ((in_a || in_b) ? 1 : 0));
    }
    // both cat0 clips were ingredients, so the reference is the remaining one
    CHECK(merged[0].reference->clip_id == "cat0-2");

    // no eligible reference: skipped with a warning
    ClipBank small = fake_bank(1, 2);
    Soundscape s_all = fake_scape({{"cat0", 1.0, 2.0}}, {"cat0-0", "cat0-1"});
    std::vector<std::string> warnings;
    std::vector<DrawnSample> none =
        make_positive_samples(s_all, small.split_entries("train"), rng, 50.0, 500, &warnings);
    CHECK(none.empty());
    CHECK(warnings.size() == 1);
}

TEST_CASE("make_negative_sample: absent category, zero labels, forced choice") {
    ClipBank bank = fake_bank(10, 2);
    std::vector<const BankEntry*> split = bank.split_entries("train");

    // nine of ten categories present: the absent one is forced
    std::vector<EventAnnotation> nine;
    for (int c = 0; c < 9; ++c) {
        nine.push_back({"cat" + std::to_string(c), 0.5 * c, 0.5 * c + 0.3});
    }
    Rng rng(81);
    DrawnSample neg = make_negative_sample(fake_scape(nine, {}), split, rng, 500);
    CHECK(neg.target_category == "cat9");
    CHECK(neg.polarity == "negative");
    int64_t sum = 0;
    for (uint8_t v : neg.labels) sum += v;
    CHECK(sum == 0);

    // all categories present: error
    std::vector<EventAnnotation> all = nine;
    all.push_back({"cat9", 9.0, 9.5});
    CHECK_THROWS_AS(make_negative_sample(fake_scape(all, {}), split, rng, 500), Error);
}

TEST_CASE("build_dataset: mode invariants, split disjointness, byte-identical re-runs") {
    const std::string bank_dir = temp_root() + "/build_bank";
    ClipBank bank = synth_toy_bank(200, 6, 12, bank_dir);

    CorpusParams params;
    params.duration = 4.0;
    params.max_events = 4;
    DatasetSizes sizes{6, 3, 3};

    auto copy_bank_into = [&](const std::string& dir) {
        fs::create_directories(dir);
        fs::copy(bank_dir + "/bank", dir + "/bank", fs::copy_options::recursive);
        fs::copy_file(bank_dir + "/bank.jsonl", dir + "/bank.jsonl");
    };

    for (DatasetMode mode : {DatasetMode::Strong, DatasetMode::StrongPlus, DatasetMode::Weak}) {
        const std::string dir = temp_root() + "/ds_" + dataset_mode_name(mode);
        copy_bank_into(dir);
        BuildReport report = build_dataset(bank, mode, sizes, 77, params, 50.0, dir);

        for (const char* split : {"train", "validation", "test"}) {
            const SplitCounts& counts = report.splits.at(split);
            std::vector<TsdSample> samples = read_manifest(dir + "/" + split + ".jsonl");
            CHECK(static_cast<int64_t>(samples.size()) == counts.positives + counts.negatives);
            if (mode == DatasetMode::Strong) CHECK(counts.negatives == 0);
            if (mode == DatasetMode::StrongPlus) CHECK(counts.negatives == counts.soundscapes);
            if (mode == DatasetMode::Weak) {
                CHECK(counts.negatives == counts.positives);
                for (const TsdSample& s : samples) {
                    REQUIRE(s.clip_label.has_value());
                    CHECK(*s.clip_label == (s.polarity == "positive" ? 1 : 0));
                }
            }
        }
    }

    // split disjointness of bank clip ids
    std::map<std::string, std::set<std::string>> ids_by_split;
    for (const BankEntry& e : bank.entries) ids_by_split[e.split].insert(e.clip_id);
    for (const auto& [s1, ids1] : ids_by_split) {
        for (const auto& [s2, ids2] : ids_by_split) {
            if (s1 >= s2) continue;
            for (const std::string& id : ids1) CHECK(ids2.find(id) == ids2.end());
        }
    }

    // byte-identical re-run
    const std::string dir_a = temp_root() + "/det_a";
    const std::string dir_b = temp_root() + "/det_b";
    copy_bank_into(dir_a);
    copy_bank_into(dir_b);
    build_dataset(bank, DatasetMode::StrongPlus, sizes, 88, params, 50.0, dir_a);
    build_dataset(bank, DatasetMode::StrongPlus, sizes, 88, params, 50.0, dir_b);
    for (const char* name :
         {"train.jsonl", "validation.jsonl", "test.jsonl", "annotations.jsonl",
          "build_report.json"}) {
        CHECK(slurp(dir_a + "/" + name) == slurp(dir_b + "/" + name));
    }
    CHECK(file_hash(dir_a + "/soundscapes/train-00000.wav") ==
          file_hash(dir_b + "/soundscapes/train-00000.wav"));
}

TEST_CASE("build_dataset: positive references are in-mixture categories, negatives are not") {
    const std::string dir = temp_root() + "/ds_inv";
    ClipBank bank = synth_toy_bank(201, 5, 12, dir);
    CorpusParams params;
    params.duration = 4.0;
    params.max_events = 3;
    build_dataset(bank, DatasetMode::StrongPlus, DatasetSizes{5, 2, 2}, 99, params, 50.0, dir);

    // mixture categories per soundscape from the annotations file
    std::map<std::string, std::set<std::string>> scape_cats;
    {
        std::ifstream in(dir + "/annotations.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto rec = nlohmann::json::parse(line);
            scape_cats[rec.at("scape_id").get<std::string>()].insert(
                rec.at("category").get<std::string>());
        }
    }

    for (const char* split : {"train", "validation", "test"}) {
        for (const TsdSample& s : read_manifest(dir + "/" + std::string(split) + ".jsonl")) {
            const std::string scape_id =
                fs::path(s.mixture_path).stem().string();
            const std::set<std::string>& cats = scape_cats[scape_id];
            const bool present = cats.find(s.target_category) != cats.end();
            if (s.polarity == "positive") {
                CHECK(present);
            } else {
                CHECK_FALSE(present);
                std::vector<uint8_t> labels = load_frame_labels(dir + "/" + split + ".jsonl", s);
                int64_t sum = 0;
                for (uint8_t v : labels) sum += v;
                CHECK(sum == 0);
            }
        }
    }
}

TEST_CASE("rle frame labels round-trip") {
    CHECK(frame_labels_to_rle({}) == "");
    CHECK(frame_labels_to_rle({0, 0, 0}) == "");
    CHECK(frame_labels_to_rle({1, 1, 0, 1}) == "0:2,3:4");

    Rng rng(91);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t t = rng.uniform_int(1, 64);
        std::vector<uint8_t> labels(static_cast<size_t>(t));
        for (uint8_t& v : labels) v = rng.uniform() < 0.4 ? 1 : 0;
        CHECK(frame_labels_from_rle(frame_labels_to_rle(labels), t) == labels);
    }
}
