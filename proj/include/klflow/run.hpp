// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration shared by the command-line tool and the bindings: one
// JSON document describing the corpus, model, training and inference
// settings, plus the helpers that turn it into data and text.
//
//   {"corpus": {"path": "train.txt", "vocab_mode": "byte", "seq_len": 32},
//    "model": {...}, "train": {...}, "inference": {...},
//    "output_dir": "runs/demo", "eval_sequences": 2000}
//
// A corpus is either a UTF-8 text file (one document per non-empty line) or
// a Markov toy language under "toy"; model.vocab_size and model.max_seq_len
// default to what the corpus needs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "klflow/corpus.hpp"
#include "klflow/denoiser.hpp"
#include "klflow/eval.hpp"
#include "klflow/inference.hpp"
#include "klflow/trainer.hpp"
#include "klflow/transformer.hpp"

namespace klflow {

struct CorpusSpec {
    std::string path;
    /// Held-out text for evaluation; empty reuses `path`.
    std::string heldout_path;
    VocabMode vocab_mode = VocabMode::byte;
    int seq_len = 32;
    /// Toy language: {"order", "V", "seed"} with optional "transitions";
    /// without transitions a random chain is drawn from the seed.
    nlohmann::json toy;
    std::size_t num_sequences = 20000;
    std::uint64_t sample_seed = 1;
    std::size_t heldout_sequences = 2000;
    std::uint64_t heldout_seed = 2;

    bool is_toy() const { return !toy.is_null(); }
};

struct RunConfig {
    CorpusSpec corpus;
    TransformerConfig model;
    TrainConfig train;
    InferenceConfig inference;
    std::string output_dir = "run";
    std::size_t eval_sequences = 2000;
};

void to_json(nlohmann::json& j, const CorpusSpec& c);
void from_json(const nlohmann::json& j, CorpusSpec& c);
void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing model.vocab_size / max_seq_len are filled in by resolve_run_config.
void from_json(const nlohmann::json& j, RunConfig& c);

/// Corpora and tokenizer materialized from a CorpusSpec.
struct RunData {
    std::optional<Vocab> vocab;
    std::optional<MarkovToyLanguage> language;
    CorpusStore train;
    CorpusStore heldout;

    int model_vocab_size() const;
    /// Token excluded from evaluation, or -1.
    int pad_id() const;
    /// One output line: decoded text (newlines escaped) or space-separated ids.
    std::string format(std::span<const int> tokens) const;
    /// Inverse of format for evaluation input.
    std::vector<int> parse(const std::string& line) const;
};

/// Throws ConfigError naming corpus.* fields for missing files or bad specs.
RunData load_run_data(const CorpusSpec& spec);

/// Parses `doc`, fills derived model fields from `data` and validates every
/// section. Explicit values that disagree with the corpus raise ConfigError.
RunConfig resolve_run_config(const nlohmann::json& doc, const RunData& data);

/// Generated sequences as an evaluation corpus; pad tokens are masked out.
CorpusStore corpus_from_sequences(const std::vector<std::vector<int>>& sequences, int seq_len, int pad_id);

/// Evaluation against the held-out corpus with a reference fit on it.
EvalReport evaluate_sequences(const std::vector<std::vector<int>>& sequences, const RunData& data);

/// Reads a whole file; throws ConfigError(field) if it cannot be opened.
std::string read_text_file(const std::filesystem::path& path, const std::string& field);

struct TrainRunResult {
    /// Resolved configuration, as written to output_dir/config.json.
    RunConfig config;
    TrainResult train;
};

/// Trains from a run document: relative corpus paths are made absolute, the
/// resolved config goes to output_dir/config.json, and the checkpoint
/// metadata carries the run (without output_dir) and the tokenizer, so a
/// rerun from config.json reproduces the checkpoint bit for bit.
TrainRunResult train_run(nlohmann::json doc, std::function<void(int, double)> on_log = {});

/// A checkpoint written by train_run, restored with its tokenizer.
struct LoadedModel {
    std::filesystem::path path;
    RunConfig run;
    nlohmann::json run_json;
    /// Tokenizer only, unless loaded with the corpus.
    RunData data;
    std::unique_ptr<TransformerDenoiser> denoiser;
};

/// Throws ConfigError("checkpoint") on missing or malformed files.
LoadedModel load_model(const std::string& path, bool with_corpus);

}  // namespace klflow
