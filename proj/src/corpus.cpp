// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include "tsd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>

#include "tsd/common.hpp"
#include "tsd/fft.hpp"
#include "tsd/manifest.hpp"

namespace tsd {

namespace fs = std::filesystem;
using nlohmann::json;

std::string dataset_mode_name(DatasetMode mode) {
    switch (mode) {
    case DatasetMode::Strong: return "strong";
    case DatasetMode::StrongPlus: return "strong+";
    case DatasetMode::Weak: return "weak";
    }
    return "strong";
}

DatasetMode dataset_mode_from_name(const std::string& name) {
    if (name == "strong") return DatasetMode::Strong;
    if (name == "strong+") return DatasetMode::StrongPlus;
    if (name == "weak") return DatasetMode::Weak;
    config_error("unknown dataset mode '" + name + "' (expected strong, strong+ or weak)");
}

std::vector<std::string> ClipBank::categories() const {
    std::set<std::string> set;
    for (const BankEntry& e : entries) set.insert(e.category);
    return {set.begin(), set.end()};
}

std::vector<const BankEntry*> ClipBank::split_entries(const std::string& split) const {
    std::vector<const BankEntry*> out;
    for (const BankEntry& e : entries) {
        if (e.split == split) out.push_back(&e);
    }
    return out;
}

std::vector<uint8_t> frame_labels(const std::vector<EventAnnotation>& annotations,
                                  const std::string& target, double fps, int64_t t) {
    if (fps <= 0.0) data_error("frame_labels: fps must be positive");
    if (t < 1) data_error("frame_labels: t must be >= 1");
    std::vector<uint8_t> labels(static_cast<size_t>(t), 0);
    for (const EventAnnotation& a : annotations) {
        if (a.category != target) continue;
        for (int64_t i = 0; i < t; ++i) {
            const double lo = static_cast<double>(i) / fps;
            const double hi = static_cast<double>(i + 1) / fps;
            if (std::max(a.onset, lo) < std::min(a.offset, hi)) labels[static_cast<size_t>(i)] = 1;
        }
    }
    return labels;
}

std::vector<double> pink_noise(Rng& rng, int64_t length, double rms) {
    constexpr int kRows = 16;
    double rows[kRows];
    for (int r = 0; r < kRows; ++r) rows[r] = rng.uniform(-1.0, 1.0);

    std::vector<double> out(static_cast<size_t>(length));
    double energy = 0.0;
    for (int64_t n = 0; n < length; ++n) {
        for (int r = 0; r < kRows; ++r) {
            if (n % (int64_t{1} << r) == 0) rows[r] = rng.uniform(-1.0, 1.0);
        }
        double s = 0.0;
        for (int r = 0; r < kRows; ++r) s += rows[r];
        out[static_cast<size_t>(n)] = s;
        energy += s * s;
    }
    const double current = std::sqrt(energy / std::max<int64_t>(1, length));
    const double gain = current > 0.0 ? rms / current : 0.0;
    for (double& s : out) s *= gain;
    return out;
}

namespace {

double clip_rms(const std::vector<double>& samples) {
    double acc = 0.0;
    for (double s : samples) acc += s * s;
    return samples.empty() ? 0.0 : std::sqrt(acc / samples.size());
}

} // namespace

Soundscape synthesize_soundscape(const std::vector<const BankEntry*>& bank_split,
                                 const ClipLoader& loader, Rng& rng, const CorpusParams& params,
                                 const std::string& scape_id) {
    if (bank_split.empty()) data_error("synthesize_soundscape: empty bank split");
    if (params.duration <= 0.0) data_error("synthesize_soundscape: duration must be positive");

    const int64_t length = static_cast<int64_t>(std::llround(params.duration * params.sample_rate));
    Rng bg_rng = rng.substream(0);
    Rng event_rng = rng.substream(1);

    Soundscape scape;
    scape.id = scape_id;
    scape.duration = params.duration;
    scape.background_id = "pink-" + std::to_string(bg_rng.seed());
    scape.mixture.sample_rate = params.sample_rate;
    scape.mixture.source_id = scape_id;
    scape.mixture.samples = pink_noise(bg_rng, length, params.background_rms);

    const int64_t k = event_rng.uniform_int(params.min_events, params.max_events);
    for (int64_t e = 0; e < k; ++e) {
        const BankEntry* entry =
            bank_split[static_cast<size_t>(event_rng.uniform_int(0, bank_split.size() - 1))];
        const double onset = event_rng.uniform(0.0, params.duration);
        const double snr_db = event_rng.uniform(params.snr_min_db, params.snr_max_db);

        AudioClip clip = loader(*entry);
        if (clip.sample_rate != params.sample_rate) clip = resample(clip, params.sample_rate);

        const double rms = clip_rms(clip.samples);
        const double gain = rms > 0.0
                                ? params.background_rms * std::pow(10.0, snr_db / 20.0) / rms
                                : 0.0;

        const int64_t start = static_cast<int64_t>(std::llround(onset * params.sample_rate));
        int64_t n = static_cast<int64_t>(clip.samples.size());
        if (start + n > length) n = length - start; // trim to fit
        if (n <= 0) continue;
        for (int64_t i = 0; i < n; ++i) {
            scape.mixture.samples[static_cast<size_t>(start + i)] += gain * clip.samples[i];
        }
        EventAnnotation ann;
        ann.category = entry->category;
        ann.onset = onset;
        ann.offset = std::min(params.duration, onset + static_cast<double>(n) / params.sample_rate);
        scape.annotations.push_back(ann);
        scape.ingredient_clip_ids.push_back(entry->clip_id);
    }

    double peak = 0.0;
    for (double s : scape.mixture.samples) peak = std::max(peak, std::abs(s));
    if (peak > 0.99) {
        const double scale = 0.99 / peak;
        for (double& s : scape.mixture.samples) s *= scale;
    }
    return scape;
}

std::vector<DrawnSample> make_positive_samples(const Soundscape& scape,
                                               const std::vector<const BankEntry*>& bank_split,
                                               Rng& rng, double fps, int64_t t,
                                               std::vector<std::string>* warnings) {
    std::set<std::string> present;
    for (const EventAnnotation& a : scape.annotations) present.insert(a.category);
    std::set<std::string> used(scape.ingredient_clip_ids.begin(), scape.ingredient_clip_ids.end());

    std::vector<DrawnSample> out;
    for (const std::string& category : present) {
        std::vector<const BankEntry*> eligible;
        for (const BankEntry* e : bank_split) {
            if (e->category == category && used.find(e->clip_id) == used.end()) {
                eligible.push_back(e);
            }
        }
        if (eligible.empty()) {
            if (warnings != nullptr) {
                warnings->push_back("no eligible reference clip for category '" + category +
                                    "' in soundscape " + scape.id + "; sample skipped");
            }
            continue;
        }
        DrawnSample s;
        s.target_category = category;
        s.reference = eligible[static_cast<size_t>(rng.uniform_int(0, eligible.size() - 1))];
        s.labels = frame_labels(scape.annotations, category, fps, t);
        s.polarity = "positive";
        out.push_back(std::move(s));
    }
    return out;
}

DrawnSample make_negative_sample(const Soundscape& scape,
                                 const std::vector<const BankEntry*>& bank_split, Rng& rng,
                                 int64_t t) {
    std::set<std::string> present;
    for (const EventAnnotation& a : scape.annotations) present.insert(a.category);

    std::set<std::string> absent;
    for (const BankEntry* e : bank_split) {
        if (present.find(e->category) == present.end()) absent.insert(e->category);
    }
    if (absent.empty()) {
        data_error("make_negative_sample: every bank category is present in soundscape " +
                   scape.id);
    }
    std::vector<std::string> absent_list(absent.begin(), absent.end());
    const std::string category =
        absent_list[static_cast<size_t>(rng.uniform_int(0, absent_list.size() - 1))];

    std::vector<const BankEntry*> eligible;
    for (const BankEntry* e : bank_split) {
        if (e->category == category) eligible.push_back(e);
    }
    DrawnSample s;
    s.target_category = category;
    s.reference = eligible[static_cast<size_t>(rng.uniform_int(0, eligible.size() - 1))];
    s.labels.assign(static_cast<size_t>(t), 0);
    s.polarity = "negative";
    return s;
}

// ---------------------------------------------------------------------------
// dataset build

namespace {

constexpr const char* kSplits[3] = {"train", "validation", "test"};

void write_labels_file(const std::string& dir, const std::string& sample_id,
                       const std::vector<uint8_t>& labels) {
    std::ofstream out(dir + "/" + sample_id + ".txt");
    out << frame_labels_to_rle(labels) << '\n';
}

TsdSample finish_sample(const DrawnSample& drawn, const Soundscape& scape,
                        const std::string& sample_id, DatasetMode mode, const std::string& split,
                        double fps, const std::string& out_dir) {
    TsdSample s;
    s.sample_id = sample_id;
    s.mixture_path = "soundscapes/" + scape.id + ".wav";
    s.reference_path = drawn.reference->path;
    s.target_category = drawn.target_category;
    s.polarity = drawn.polarity;
    s.mode = mode;
    s.fps = fps;
    s.duration = scape.duration;
    const bool strong_labels =
        mode != DatasetMode::Weak || split == "validation" || split == "test";
    if (strong_labels) {
        s.frame_labels = drawn.labels;
        s.has_frame_labels = true;
        write_labels_file(out_dir + "/labels", sample_id, drawn.labels);
    }
    if (mode == DatasetMode::Weak) {
        s.clip_label = drawn.polarity == "positive" ? 1 : 0;
    }
    return s;
}

} // namespace

BuildReport build_dataset(const ClipBank& bank, DatasetMode mode, const DatasetSizes& sizes,
                          uint64_t seed, const CorpusParams& params, double fps,
                          const std::string& out_dir) {
    // the bank must cover all three splits with at least two clips per category
    for (const char* split : kSplits) {
        auto entries = bank.split_entries(split);
        if (entries.empty()) data_error("build_dataset: bank has no clips for split '" +
                                        std::string(split) + "'");
        std::map<std::string, int> per_cat;
        for (const BankEntry* e : entries) ++per_cat[e->category];
        for (const auto& [cat, count] : per_cat) {
            if (count < 2) {
                data_error("build_dataset: category '" + cat + "' has only " +
                           std::to_string(count) + " clip(s) in split '" + split +
                           "'; at least 2 are needed to draw a distinct reference");
            }
        }
    }

    fs::create_directories(out_dir + "/soundscapes");
    fs::create_directories(out_dir + "/labels");

    const ClipLoader loader = file_clip_loader(out_dir);
    const int64_t t = static_cast<int64_t>(params.duration * fps);

    Rng master(seed);
    BuildReport report;
    report.mode = mode;
    report.seed = seed;
    report.categories = bank.categories();

    std::ofstream ann_out(out_dir + "/annotations.jsonl");

    const int64_t split_sizes[3] = {sizes.train_soundscapes, sizes.validation_soundscapes,
                                    sizes.test_soundscapes};
    for (int si = 0; si < 3; ++si) {
        const std::string split = kSplits[si];
        Rng split_rng = master.substream(static_cast<uint64_t>(si));
        auto split_bank = bank.split_entries(split);

        std::vector<TsdSample> manifest;
        std::vector<Soundscape> scapes;
        SplitCounts counts;

        for (int64_t i = 0; i < split_sizes[si]; ++i) {
            Rng scape_rng = split_rng.substream(static_cast<uint64_t>(i));
            char id[64];
            std::snprintf(id, sizeof(id), "%s-%05lld", split.c_str(),
                          static_cast<long long>(i));
            Soundscape scape = synthesize_soundscape(split_bank, loader, scape_rng, params, id);
            save_wav(out_dir + "/soundscapes/" + scape.id + ".wav", scape.mixture);
            for (const EventAnnotation& a : scape.annotations) {
                json rec;
                rec["scape_id"] = scape.id;
                rec["split"] = split;
                rec["category"] = a.category;
                rec["onset"] = a.onset;
                rec["offset"] = a.offset;
                ann_out << rec.dump() << '\n';
            }
            ++counts.soundscapes;

            Rng pos_rng = scape_rng.substream(2);
            std::vector<std::string> warnings;
            for (const DrawnSample& d :
                 make_positive_samples(scape, split_bank, pos_rng, fps, t, &warnings)) {
                const std::string sample_id = scape.id + "-" + d.target_category;
                manifest.push_back(finish_sample(d, scape, sample_id, mode, split, fps, out_dir));
                ++counts.positives;
            }
            for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

            if (mode == DatasetMode::StrongPlus) {
                Rng neg_rng = scape_rng.substream(3);
                try {
                    DrawnSample d = make_negative_sample(scape, split_bank, neg_rng, t);
                    const std::string sample_id = scape.id + "-neg-" + d.target_category;
                    manifest.push_back(
                        finish_sample(d, scape, sample_id, mode, split, fps, out_dir));
                    ++counts.negatives;
                } catch (const Error&) {
                    std::fprintf(stderr, "warning: no negative sample possible for %s\n",
                                 scape.id.c_str());
                }
            }
            scape.mixture.samples.clear(); // audio already on disk
            scapes.push_back(std::move(scape));
        }

        if (mode == DatasetMode::Weak && !scapes.empty()) {
            // negatives drawn with replacement over soundscapes until they
            // match the positive count
            Rng neg_rng = split_rng.substream(0x40000000ULL);
            int64_t made = 0, attempts = 0;
            while (made < counts.positives) {
                if (++attempts > 100 * counts.positives + 1000) {
                    data_error("build_dataset: unable to draw enough weak negatives for split '" +
                               split + "'");
                }
                const Soundscape& scape =
                    scapes[static_cast<size_t>(neg_rng.uniform_int(0, scapes.size() - 1))];
                try {
                    DrawnSample d = make_negative_sample(scape, split_bank, neg_rng, t);
                    char sid[96];
                    std::snprintf(sid, sizeof(sid), "%s-wneg-%05lld-%s", scape.id.c_str(),
                                  static_cast<long long>(made), d.target_category.c_str());
                    manifest.push_back(finish_sample(d, scape, sid, mode, split, fps, out_dir));
                    ++counts.negatives;
                    ++made;
                } catch (const Error&) {
                    continue; // soundscape covers every category; redraw
                }
            }
        }

        write_manifest(out_dir + "/" + split + ".jsonl", manifest);
        report.splits[split] = counts;
    }

    // build report mirrors the manifest counts
    json rep;
    rep["mode"] = dataset_mode_name(mode);
    rep["seed"] = seed;
    rep["categories"] = report.categories;
    for (const auto& [split, counts] : report.splits) {
        rep["splits"][split] = {{"soundscapes", counts.soundscapes},
                                {"positives", counts.positives},
                                {"negatives", counts.negatives},
                                {"samples", counts.positives + counts.negatives}};
    }
    if (report.toy_separability >= 0.0) rep["toy_separability"] = report.toy_separability;
    std::ofstream rep_out(out_dir + "/build_report.json");
    rep_out << rep.dump(2) << '\n';

    return report;
}

// ---------------------------------------------------------------------------
// toy bank

std::vector<double> toy_category_centers(int n_categories) {
    std::vector<double> centers(static_cast<size_t>(n_categories));
    const double lo = 350.0, hi = 7000.0;
    for (int i = 0; i < n_categories; ++i) {
        const double r = n_categories > 1 ? static_cast<double>(i) / (n_categories - 1) : 0.5;
        centers[static_cast<size_t>(i)] = lo * std::pow(hi / lo, r);
    }
    return centers;
}

namespace {

std::vector<double> toy_clip_samples(Rng& rng, int family, double center_hz, int sample_rate) {
    const double duration = rng.uniform(1.0, 4.0);
    const int64_t n = static_cast<int64_t>(std::llround(duration * sample_rate));
    std::vector<double> x(static_cast<size_t>(n), 0.0);
    const double jitter = 1.0 + rng.uniform(-0.04, 0.04);
    const double f0 = center_hz * jitter;
    const double dt = 1.0 / sample_rate;

    if (family == 0) {
        // steady tone with mild vibrato and a soft second harmonic
        const double vib_rate = rng.uniform(4.0, 7.0);
        const double vib_depth = 0.01 * f0;
        const double phase0 = rng.uniform(0.0, 2.0 * M_PI);
        double phase = phase0, phase2 = 2.0 * phase0;
        for (int64_t i = 0; i < n; ++i) {
            const double f = f0 + vib_depth * std::sin(2.0 * M_PI * vib_rate * i * dt);
            phase += 2.0 * M_PI * f * dt;
            phase2 += 2.0 * M_PI * 2.0 * f * dt;
            x[static_cast<size_t>(i)] = std::sin(phase) + 0.25 * std::sin(phase2);
        }
    } else if (family == 1) {
        // linear chirp sweeping +-8% around the center
        const double f_lo = f0 * 0.92, f_hi = f0 * 1.08;
        const bool up = rng.uniform() < 0.5;
        double phase = rng.uniform(0.0, 2.0 * M_PI);
        for (int64_t i = 0; i < n; ++i) {
            const double r = static_cast<double>(i) / std::max<int64_t>(1, n - 1);
            const double f = up ? f_lo + (f_hi - f_lo) * r : f_hi - (f_hi - f_lo) * r;
            phase += 2.0 * M_PI * f * dt;
            x[static_cast<size_t>(i)] = std::sin(phase);
        }
    } else {
        // amplitude-modulated band noise: random-phase partials inside the band
        constexpr int kPartials = 24;
        double freqs[kPartials], phases[kPartials];
        for (int p = 0; p < kPartials; ++p) {
            freqs[p] = f0 * rng.uniform(0.93, 1.07);
            phases[p] = rng.uniform(0.0, 2.0 * M_PI);
        }
        const double am_rate = rng.uniform(2.0, 8.0);
        for (int64_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (int p = 0; p < kPartials; ++p) {
                s += std::sin(2.0 * M_PI * freqs[p] * i * dt + phases[p]);
            }
            const double am = 1.0 + 0.5 * std::sin(2.0 * M_PI * am_rate * i * dt);
            x[static_cast<size_t>(i)] = s * am / std::sqrt(static_cast<double>(kPartials));
        }
    }

    // attack / release envelope
    const int64_t attack = static_cast<int64_t>(rng.uniform(0.05, 0.2) * n);
    const int64_t release = static_cast<int64_t>(rng.uniform(0.05, 0.2) * n);
    for (int64_t i = 0; i < attack && i < n; ++i) {
        x[static_cast<size_t>(i)] *= static_cast<double>(i) / std::max<int64_t>(1, attack);
    }
    for (int64_t i = 0; i < release && i < n; ++i) {
        x[static_cast<size_t>(n - 1 - i)] *= static_cast<double>(i) / std::max<int64_t>(1, release);
    }

    const double rms = clip_rms(x);
    if (rms > 0.0) {
        for (double& s : x) s *= 0.1 / rms;
    }
    return x;
}

} // namespace

ClipBank synth_toy_bank(uint64_t seed, int n_categories, int clips_per_category,
                        const std::string& out_dir, int sample_rate) {
    if (n_categories < 2) config_error("synth_toy_bank: need at least 2 categories");
    if (clips_per_category < 10)
        config_error("synth_toy_bank: need at least 10 clips per category so every split keeps 2");

    fs::create_directories(out_dir + "/bank");
    const std::vector<double> centers = toy_category_centers(n_categories);

    Rng master(seed);
    ClipBank bank;
    for (int c = 0; c < n_categories; ++c) {
        char cat[16];
        std::snprintf(cat, sizeof(cat), "cat%d", c);
        const int family = c % 3;
        const int n_train = static_cast<int>(std::llround(clips_per_category * 0.6));
        const int n_val = static_cast<int>(std::llround(clips_per_category * 0.2));
        for (int i = 0; i < clips_per_category; ++i) {
            Rng clip_rng = master.substream(static_cast<uint64_t>(c) * 100000ULL +
                                            static_cast<uint64_t>(i));
            AudioClip clip;
            clip.sample_rate = sample_rate;
            clip.samples = toy_clip_samples(clip_rng, family, centers[static_cast<size_t>(c)],
                                            sample_rate);

            BankEntry e;
            char id[32];
            std::snprintf(id, sizeof(id), "%s-%04d", cat, i);
            e.clip_id = id;
            e.category = cat;
            e.duration = clip.duration();
            e.split = i < n_train ? "train" : (i < n_train + n_val ? "validation" : "test");
            e.path = "bank/" + e.clip_id + ".wav";
            clip.source_id = e.clip_id;
            save_wav(out_dir + "/" + e.path, clip);
            bank.entries.push_back(std::move(e));
        }
    }
    write_bank_manifest(out_dir + "/bank.jsonl", bank);
    return bank;
}

double toy_bank_separability(const ClipBank& bank, const ClipLoader& loader) {
    // category names carry their index ("cat3"), which addresses the center table
    const std::vector<std::string> cats = bank.categories();
    const int n = static_cast<int>(cats.size());
    std::vector<int> cat_index(cats.size(), 0);
    int max_index = 0;
    for (size_t i = 0; i < cats.size(); ++i) {
        cat_index[i] = std::atoi(cats[i].c_str() + 3);
        max_index = std::max(max_index, cat_index[i]);
    }
    const std::vector<double> centers = toy_category_centers(std::max(n, max_index + 1));

    int64_t correct = 0;
    for (const BankEntry& e : bank.entries) {
        AudioClip clip = loader(e);
        size_t pow2 = 1;
        while (pow2 < clip.samples.size()) pow2 <<= 1;
        std::vector<double> padded(pow2, 0.0);
        std::copy(clip.samples.begin(), clip.samples.end(), padded.begin());
        Fft fft(pow2);
        std::vector<double> mag = fft.real_magnitude(padded);

        const double bin_hz = static_cast<double>(clip.sample_rate) / pow2;
        int best = -1;
        double best_energy = -1.0;
        for (int c = 0; c < n; ++c) {
            const double center = centers[static_cast<size_t>(cat_index[static_cast<size_t>(c)])];
            const double lo = center / 1.15;
            const double hi = center * 1.15;
            const int b0 = std::max(0, static_cast<int>(lo / bin_hz));
            const int b1 = std::min(static_cast<int>(mag.size()) - 1, static_cast<int>(hi / bin_hz));
            double energy = 0.0;
            for (int b = b0; b <= b1; ++b) energy += mag[static_cast<size_t>(b)] * mag[static_cast<size_t>(b)];
            energy /= std::max(1, b1 - b0 + 1);
            if (energy > best_energy) {
                best_energy = energy;
                best = c;
            }
        }
        if (best >= 0 && cats[static_cast<size_t>(best)] == e.category) ++correct;
    }
    return bank.entries.empty() ? 0.0
                                : static_cast<double>(correct) / static_cast<double>(bank.entries.size());
}

ClipLoader file_clip_loader(const std::string& base_dir) {
    return [base_dir](const BankEntry& e) {
        const std::string path = !e.path.empty() && e.path[0] == '/'
                                     ? e.path
                                     : base_dir + "/" + e.path;
        return load_wav(path);
    };
}

} // namespace tsd
