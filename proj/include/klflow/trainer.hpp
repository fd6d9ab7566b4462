// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "klflow/corpus.hpp"
#include "klflow/errors.hpp"
#include "klflow/simplex.hpp"
#include "klflow/transformer.hpp"

namespace klflow {

enum class TimeDistribution { uniform };

struct TrainConfig {
    int batch_size = 16;
    int steps = 1000;
    double lr = 3e-4;
    int lr_warmup_steps = 100;
    double beta = 0.01;
    TimeDistribution t_distribution = TimeDistribution::uniform;
    std::uint64_t seed = 0;
    /// 0 saves only the final checkpoint.
    int checkpoint_every = 0;
    int eval_every = 100;
    /// Worker threads for the batch gradient; 1 is strictly deterministic.
    int threads = 1;
    /// Scale each example's loss by 1 / (1 - t).
    bool weight_by_inverse_time = false;
    double grad_clip = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.95;
    double adam_eps = 1e-8;

    void validate() const;
};

struct TrainingExample {
    SequenceState state;
    std::vector<int> targets;
};

/// Draws t ~ U(0, 1), then for each position a Dirichlet(1) noise row, and
/// returns the logit interpolation toward the smoothed targets.
TrainingExample make_training_example(std::span<const int> tokens, const SmoothingConfig& s, Rng& rng);
/// Same with a fixed t; only the noise is drawn.
TrainingExample make_training_example_at(std::span<const int> tokens, const SmoothingConfig& s, double t, Rng& rng);

/// Raised when the loss, an activation or a parameter becomes non-finite.
class TrainError : public NumericError {
public:
    TrainError(int step, std::filesystem::path last_checkpoint, const std::string& cause);

    int step() const noexcept { return step_; }
    const std::filesystem::path& last_checkpoint() const noexcept { return last_checkpoint_; }

private:
    int step_;
    std::filesystem::path last_checkpoint_;
};

struct TrainOptions {
    /// Where checkpoints and metrics go; empty keeps everything in memory.
    std::filesystem::path output_dir;
    std::string checkpoint_name = "model.klf";
    std::string metrics_name = "metrics.csv";
    /// Merged into the checkpoint metadata.
    nlohmann::json extra_metadata = nlohmann::json::object();
    /// Starting parameters; defaults to init_params(cfg, seed).
    std::optional<ParamSet<float>> init;
    /// Called at every logging step with (step, mean loss since last log).
    std::function<void(int, double)> on_log;
};

struct TrainResult {
    ParamSet<float> params;
    /// Batch loss of the first step, before any update.
    double initial_loss = 0.0;
    /// Mean loss over the last logging window.
    double final_loss = 0.0;
    std::vector<double> batch_losses;
    std::filesystem::path checkpoint_path;
};

TrainResult train(const CorpusStore& corpus, const TrainConfig& cfg, const TransformerConfig& model_cfg,
                  const TrainOptions& options = {});

/// Mean held-out loss per t-bucket (equal-width buckets on [0, 1]); each
/// bucket gets `per_bucket` examples with t uniform inside the bucket.
std::vector<double> loss_by_time(const ParamSet<float>& params, const TransformerConfig& model_cfg,
                                 const CorpusStore& corpus, double beta, int buckets, int per_bucket,
                                 std::uint64_t seed);

std::string to_string(TimeDistribution d);
TimeDistribution parse_time_distribution(std::string_view name);

}  // namespace klflow
