// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// Generation by integrating logit-space flows from Dirichlet noise.
//
// All schemes share the grid t_i = i / N and per-step RNG order: first one
// token per position (position-major), then one noise row per position.
//   basic          l += h / (1 - t) * (E_w[l_1] - l), w = softmax(model)
//   semi_sampling  same update toward log smooth_onehot(sampled token)
//   sampling       l = (1 - t - h) log x_0' + (t + h) log smooth_onehot(sampled)
//                  with fresh noise x_0'
//   hybrid         basic while t < t_star, sampling afterwards

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "klflow/denoiser.hpp"
#include "klflow/rng.hpp"
#include "klflow/simplex.hpp"

namespace klflow {

class Vocab;

enum class Scheme { basic, semi_sampling, sampling, hybrid };

std::string to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

struct InferenceConfig {
    Scheme scheme = Scheme::hybrid;
    int steps = 32;
    /// 0 means 1 / steps.
    double step_size = 0.0;
    double beta = 0.01;
    /// 0 means no truncation.
    int top_k = 0;
    double t_star = 0.28;
    std::uint64_t seed = 0;
    /// Denominator of the smoothing mass; 0 means the vocabulary size.
    double smoothing_denominator = 0.0;

    void validate(int vocab_size) const;
    /// Time grid t_0 .. t_N.
    std::vector<double> time_grid() const;
};

/// Positions held at a fixed token throughout generation.
struct ClampMask {
    std::vector<std::pair<int, int>> fixed;

    bool empty() const noexcept { return fixed.empty(); }
    void validate(int seq_len, int vocab_size) const;
};

/// Overwrite clamped rows with log smooth_onehot of their token.
void apply_clamp(LogitMatrix& logits, const ClampMask& mask, const SmoothingConfig& s);

struct Trajectory {
    std::vector<double> times;
    /// Every state along the path when recorded, else empty.
    std::vector<LogitMatrix> states;
    LogitMatrix final_logits;
    std::vector<int> tokens;
    /// Denoiser evaluations spent.
    int nfe = 0;
};

/// Index drawn from `probs` restricted to its k most probable entries
/// (ties toward the lower index); k <= 0 or k >= size samples unrestricted.
int sample_top_k(std::span<const double> probs, int k, Rng& rng);

/// Runs cfg.scheme from a fresh Dirichlet start drawn from `rng`.
Trajectory run_inference(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                         const ClampMask& clamp = {}, bool record = false);

Trajectory infer_basic(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                       const ClampMask& clamp = {}, bool record = false);
Trajectory infer_semi_sampling(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                               const ClampMask& clamp = {}, bool record = false);
Trajectory infer_sampling(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                          const ClampMask& clamp = {}, bool record = false);
Trajectory infer_hybrid(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                        const ClampMask& clamp = {}, bool record = false);

/// `count` trajectories; trajectory i uses Rng::derived(cfg.seed, i).
/// Work is split across `threads` workers without changing any result.
std::vector<Trajectory> generate(const Denoiser& model, const InferenceConfig& cfg, int seq_len, std::size_t count,
                                 const ClampMask& clamp = {}, bool record = false, int threads = 1);

/// Rows `step,t,position,argmax_token,argmax_prob` for every recorded state,
/// then a final line with the decoded text when a vocabulary is given.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const Vocab* vocab = nullptr);

}  // namespace klflow
