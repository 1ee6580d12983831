// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#ifndef TSD_CLI_BINARY
#define TSD_CLI_BINARY "tsd"
#endif

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TSD_CLI_BINARY) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string temp_root() {
    static std::string dir = [] {
        std::string d = (fs::temp_directory_path() / "tsdkit_cli_tests").string();
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

} // namespace

TEST_CASE("exit codes: success, config errors, data errors") {
    const std::string dir = temp_root();

    // config error: unknown key
    {
        std::ofstream out(dir + "/bad.ini");
        out << "[dsp]\nnot_a_key = 1\n";
    }
    CHECK(run_cli("build-dataset --config " + dir + "/bad.ini --out " + dir + "/ds") == 2);

    // config error: malformed override
    CHECK(run_cli("build-dataset --set nonsense --out " + dir + "/ds") == 2);

    // usage error: unknown flag
    CHECK(run_cli("build-dataset --frobnicate --out " + dir + "/ds") == 2);

    // data error: missing manifest
    CHECK(run_cli("evaluate --checkpoint oracle --manifest " + dir + "/missing.jsonl") == 3);

    // data error: missing checkpoint file
    {
        std::ofstream out(dir + "/empty.jsonl");
    }
    CHECK(run_cli("evaluate --checkpoint " + dir + "/no.ckpt --manifest " + dir +
                  "/empty.jsonl") == 3);

    // success path: tiny toy build
    {
        std::ofstream out(dir + "/ok.ini");
        out << "[corpus]\nduration = 2.0\nmax_events = 2\ntoy_categories = 2\n"
               "toy_clips_per_category = 10\ntrain_soundscapes = 2\n"
               "validation_soundscapes = 1\ntest_soundscapes = 1\n";
    }
    CHECK(run_cli("build-dataset --config " + dir + "/ok.ini --seed 4 --out " + dir + "/ds_ok") ==
          0);
    CHECK(run_cli("evaluate --config " + dir + "/ok.ini --checkpoint oracle --manifest " + dir +
                  "/ds_ok/test.jsonl --out " + dir + "/report.json") == 0);
    CHECK(run_cli("report --in " + dir + "/report.json") == 0);

    // stage-order violation surfaces as a config error
    CHECK(run_cli("finetune --config " + dir + "/ok.ini --data " + dir +
                  "/ds_ok --init /nonexistent.ckpt") == 3);
}

TEST_CASE("exit code 4 on training divergence") {
    const std::string dir = temp_root();
    {
        std::ofstream out(dir + "/div.ini");
        out << "[corpus]\nduration = 2.0\nmax_events = 2\ntoy_categories = 2\n"
               "toy_clips_per_category = 10\ntrain_soundscapes = 2\n"
               "validation_soundscapes = 1\ntest_soundscapes = 1\n"
               "[model]\ncond_channels = 4,6,8,12\nembedding_dim = 16\n"
               "det_channels = 4,6,8,8\ndet_gru_hidden = 8\ndet_fc_hidden = 16\n"
               "det_proj_dim = 16\n[training]\npretrain_epochs = 1\ndetect_epochs = 2\n";
    }
    REQUIRE(run_cli("build-dataset --config " + dir + "/div.ini --seed 3 --out " + dir +
                    "/ds_div") == 0);
    REQUIRE(run_cli("pretrain --config " + dir + "/div.ini --bank " + dir +
                    "/ds_div/bank.jsonl --run-dir " + dir + "/pre_div") == 0);
    // an absurd learning rate with clipping disabled overflows the weights
    CHECK(run_cli("train --config " + dir + "/div.ini --data " + dir + "/ds_div --init " + dir +
                  "/pre_div/checkpoints/best.ckpt --run-dir " + dir + "/tr_div" +
                  " --set training.detect_lr=1e308 --set training.grad_clip=1e308") == 4);
}
