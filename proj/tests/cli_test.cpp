// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// Drives the klflow executable as a subprocess.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>


namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    static fs::path root() { return fs::temp_directory_path() / "klflow_cli_test"; }

    static void SetUpTestSuite() {
        fs::remove_all(root());
        fs::create_directories(root());
        std::ofstream(root() / "toy.json") << R"({
  "corpus": {"toy": {"V": 8, "order": 2, "seed": 3}, "seq_len": 8,
             "num_sequences": 300, "heldout_sequences": 200},
  "model": {"layers": 1, "heads": 2, "embed_dim": 16},
  "train": {"steps": 40, "batch_size": 8, "lr": 1e-3, "eval_every": 20, "lr_warmup_steps": 5},
  "eval_sequences": 40
})";
        const auto r = run("train --config " + (root() / "toy.json").string() + " --output-dir " + (root() / "run").string());
        ASSERT_EQ(r.code, 0) << r.err;
    }

    static Result run(const std::string& args) {
        const auto out = root() / "stdout.txt";
        const auto err = root() / "stderr.txt";
        const std::string cmd = std::string(KLFLOW_CLI) + " " + args + " > " + out.string() + " 2> " + err.string();
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    static std::string ckpt() { return (root() / "run" / "model.klf").string(); }
    static std::string path(const std::string& name) { return (root() / name).string(); }
};

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_F(Cli, TrainWritesCheckpointConfigAndMetrics) {
    EXPECT_TRUE(fs::exists(ckpt()));
    EXPECT_TRUE(fs::exists(root() / "run" / "metrics.csv"));
    const json cfg = json::parse(slurp(root() / "run" / "config.json"));
    EXPECT_EQ(cfg.at("model").at("vocab_size"), 8);
    EXPECT_EQ(cfg.at("model").at("max_seq_len"), 8);
    EXPECT_EQ(cfg.at("train").at("steps"), 40);
}

TEST_F(Cli, MissingCorpusPathIsConfigError) {
    std::ofstream(path("missing.json")) << R"({"corpus": {"path": "/no/such/corpus.txt"}})";
    const auto r = run("train --config " + path("missing.json"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("corpus.path"), std::string::npos) << r.err;
    const auto none = run("train");
    EXPECT_EQ(none.code, 2);
    EXPECT_NE(none.err.find("corpus.path"), std::string::npos) << none.err;
}

TEST_F(Cli, InvalidFieldNamed) {
    const auto r = run("train --config " + path("toy.json") + " --batch_size 0 --output-dir " + path("bad"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("train.batch_size"), std::string::npos) << r.err;
    const auto unknown = run("train --config " + path("toy.json") + " --set train.speed=3");
    EXPECT_EQ(unknown.code, 2);
    EXPECT_NE(unknown.err.find("speed"), std::string::npos) << unknown.err;
}

TEST_F(Cli, DivergentLearningRateExitsNumeric) {
    const auto r = run("train --config " + path("toy.json") +
                       " --set corpus.toy.V=16 --seq_len 16 --layers 4 --heads 4 --embed_dim 128 --batch_size 16"
                       " --lr 1e3 --steps 200 --output-dir " + path("diverge"));
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("step "), std::string::npos) << r.err;
}

TEST_F(Cli, BadCheckpointIsConfigError) {
    std::ofstream(path("garbage.klf")) << "not a checkpoint";
    EXPECT_EQ(run("generate --checkpoint " + path("garbage.klf")).code, 2);
    EXPECT_EQ(run("generate --checkpoint " + path("absent.klf")).code, 2);
}

TEST_F(Cli, HybridAtOneMatchesBasicFile) {
    ASSERT_EQ(run("generate --checkpoint " + ckpt() + " --scheme hybrid --t_star 1 --seed 5 --count 30 --out " + path("h1.txt")).code, 0);
    ASSERT_EQ(run("generate --checkpoint " + ckpt() + " --scheme basic --seed 5 --count 30 --out " + path("b.txt")).code, 0);
    EXPECT_EQ(slurp(path("h1.txt")), slurp(path("b.txt")));
    ASSERT_EQ(run("generate --checkpoint " + ckpt() + " --scheme hybrid --t_star 0 --seed 5 --count 30 --out " + path("h0.txt")).code, 0);
    ASSERT_EQ(run("generate --checkpoint " + ckpt() + " --scheme sampling --seed 5 --count 30 --out " + path("s.txt")).code, 0);
    EXPECT_EQ(slurp(path("h0.txt")), slurp(path("s.txt")));
    EXPECT_EQ(count_lines(slurp(path("s.txt"))), 30);
}

TEST_F(Cli, SamplingTopOneIsRepeatable) {
    const std::string args = "generate --checkpoint " + ckpt() + " --scheme sampling --top_k 1 --seed 9 --count 20 --out ";
    ASSERT_EQ(run(args + path("k1a.txt")).code, 0);
    ASSERT_EQ(run(args + path("k1b.txt") + " --threads 4").code, 0);
    EXPECT_EQ(slurp(path("k1a.txt")), slurp(path("k1b.txt")));
}

TEST_F(Cli, FullClampReproducesClampedSequence) {
    const auto r = run("generate --checkpoint " + ckpt() + " --count 4 --clamp 0=7,1=6,2=5,3=4,4=3,5=2,6=1,7=0 --out -");
    ASSERT_EQ(r.code, 0) << r.err;
    std::string expected;
    for (int i = 0; i < 4; ++i) expected += "7 6 5 4 3 2 1 0\n";
    EXPECT_EQ(r.out, expected);
    EXPECT_EQ(run("generate --checkpoint " + ckpt() + " --clamp 8=1").code, 2);
}

TEST_F(Cli, EmittedConfigReproducesOutput) {
    ASSERT_EQ(run("generate --checkpoint " + ckpt() + " --scheme semi_sampling --seed 3 --count 25 --out " + path("g1.txt")).code, 0);
    ASSERT_EQ(run("generate --config " + path("g1.txt.config.json") + " --out " + path("g2.txt")).code, 0);
    EXPECT_EQ(slurp(path("g1.txt")), slurp(path("g2.txt")));

    // Retraining from the emitted run config gives a bitwise-identical checkpoint.
    ASSERT_EQ(run("train --config " + (root() / "run" / "config.json").string() + " --output-dir " + path("rerun")).code, 0);
    EXPECT_EQ(slurp(root() / "run" / "model.klf"), slurp(root() / "rerun" / "model.klf"));
}

TEST_F(Cli, EvalReportsJsonAndCsv) {
    ASSERT_EQ(run("generate --checkpoint " + ckpt() + " --count 30 --out " + path("e.txt")).code, 0);
    const auto r = run("eval --checkpoint " + ckpt() + " --generated " + path("e.txt") + " --csv " + path("e.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j.at("num_sequences"), 30);
    EXPECT_GE(j.at("ref_perplexity").get<double>(), 1.0);
    EXPECT_LE(j.at("entropy_nats").get<double>(), std::log(8.0) + 1e-12);
    const auto csv = slurp(path("e.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "generated,entropy_nats,ref_perplexity,unigram_tv,bigram_tv,num_sequences");
    EXPECT_EQ(count_lines(csv), 2);
    std::ofstream(path("junk.txt")) << "1 2 banana\n";
    EXPECT_EQ(run("eval --checkpoint " + ckpt() + " --generated " + path("junk.txt")).code, 2);
}

TEST_F(Cli, SweepWritesOneRowPerDistinctValue) {
    const auto r = run("sweep --checkpoint " + ckpt() + " --axis t_star --values 0,0.25,0.5,0.75,1.0,0.5 --count 20 --out " + path("sw.csv"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("duplicate"), std::string::npos);
    const auto csv = slurp(path("sw.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "value,entropy,ref_perplexity,unigram_tv,bigram_tv");
    EXPECT_EQ(count_lines(csv), 6);

    ASSERT_EQ(run("sweep --checkpoint " + ckpt() + " --scheme sampling --axis nfe --values 8,16,32 --count 20 --out " + path("nfe.csv")).code, 0);
    EXPECT_EQ(count_lines(slurp(path("nfe.csv"))), 4);
    EXPECT_EQ(run("sweep --checkpoint " + ckpt() + " --axis nfe --values 8,8 --out " + path("x.csv")).code, 2);
    EXPECT_EQ(run("sweep --checkpoint " + ckpt() + " --axis temperature --values 1,2 --out " + path("x.csv")).code, 2);
}

TEST_F(Cli, TextCorpusRoundTrip) {
    std::ofstream(path("text.txt")) << "the cat sat on the mat\nthe dog sat on the log\n";
    ASSERT_EQ(run("train --corpus " + path("text.txt") + " --vocab_mode char --seq_len 10 --layers 1 --heads 2"
                  " --embed_dim 16 --steps 5 --output-dir " + path("textrun")).code, 0);
    const auto r = run("generate --checkpoint " + path("textrun/model.klf") + " --count 3 --clamp-text 'the ?at' --out -");
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(r.out);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        EXPECT_EQ(line.substr(0, 4), "the ");
        EXPECT_EQ(line.substr(5, 2), "at");
    }
    EXPECT_EQ(n, 3);
}

TEST_F(Cli, OracleCheckReport) {
    const auto r = run("oracle-check --samples 200000 --trajectories 20000 --out " + path("oracle.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(slurp(path("oracle.json")));
    for (const char* key : {"instance", "resolution", "mean_tv", "max_tv", "ode_tv", "pass"}) EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_TRUE(j.at("pass").get<bool>());
    const auto strict = run("oracle-check --samples 1000 --trajectories 100 --max-mean-tv 0.0001");
    EXPECT_EQ(strict.code, 1);
}
