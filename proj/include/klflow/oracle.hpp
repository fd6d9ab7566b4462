// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

// Ground truth for tiny instances (V <= 4, S <= 2).
//
// Transition density. Fix a clean token j at one position and write
// c(l) = l - mean(l) for centered logits. The noisy logits are
// c(l_t) = (1 - t) c(l_0) + t c(l_1^j), a bijective affine map of the
// (V-1)-dimensional centered noise with Jacobian determinant (1 - t)^(V-1).
// A Dirichlet(1, ..., 1) point x_0 has density proportional to prod_i x_0,i
// in centered-logit coordinates, so
//
//     p_{t|1}(x_t | j) = (V-1)! prod_i x_0,i / ((1 - t)^(V-1) prod_i x_t,i),
//     x_0 = softmax((c(l_t) - t c(l_1^j)) / (1 - t)),
//
// as a density on the simplex. Only the factor prod_i x_0,i depends on j,
// so posteriors need nothing else. Sequence posteriors multiply the
// per-position factors with p1(sequence) and marginalize.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "klflow/corpus.hpp"
#include "klflow/denoiser.hpp"
#include "klflow/rng.hpp"
#include "klflow/simplex.hpp"

namespace klflow {

struct TinyInstance {
    int vocab_size = 2;
    int seq_len = 1;
    /// Joint probabilities over V^S sequences; sequence index is
    /// sum_k token_k * V^(S-1-k).
    std::vector<double> p1;
    double beta = 0.01;

    void validate() const;
    std::size_t num_sequences() const;
    std::vector<int> sequence(std::size_t index) const;
    /// S x V matrix of per-position data marginals.
    LogitMatrix marginals() const;
    SmoothingConfig smoothing() const { return {beta, vocab_size, 0.0}; }
    /// Draw a clean sequence from p1.
    std::vector<int> sample(Rng& rng) const;
    /// Draw (x_t, x_1) from the generative process at time t.
    SequenceState sample_state(double t, Rng& rng, std::vector<int>* clean = nullptr) const;

    nlohmann::json to_json() const;
    static TinyInstance from_json(const nlohmann::json& j);
};

/// log p_{t|1}(x_t | j) for one position, including all constants. Requires 0 <= t < 1.
double log_transition_density(std::span<const double> logits_t, int token, double t, const SmoothingConfig& s);

/// S x V matrix of exact posterior marginals p(x_1^(k) = j | x_t).
LogitMatrix exact_posterior(const TinyInstance& inst, const SequenceState& state);

/// V = 2, S = 1 posterior from the probability that x_t falls in an interval
/// of width 1 / resolution (in x_t,0) centred on the query. The Dirichlet(1)
/// noise is uniform for V = 2 and the geodesic is monotone, so each interval
/// probability is an exact difference of sigmoids; no density formula is used.
std::vector<double> interval_posterior(const TinyInstance& inst, double x_t0, double t, int resolution);

struct ExactVelocity {
    /// E[l_1] under the exact posterior, S x V.
    LogitMatrix expected_l1;
    /// (E[l_1] - l_t) / (1 - t).
    LogitMatrix velocity;
};

/// Throws DomainError at t >= 1.
ExactVelocity exact_velocity(const TinyInstance& inst, const SequenceState& state);

/// Posterior mean of the smoothed clean logits given posterior rows.
LogitMatrix expected_clean_logits(const LogitMatrix& posterior, const SmoothingConfig& s);

/// Euler integration of dl/dt = (E[l_1] - l_t) / (1 - t) on t_i = i / N.
SequenceState integrate_exact_ode(const TinyInstance& inst, const LogitMatrix& l0, int steps);

/// Decoded-token distribution over V^S sequences from `trajectories` Dirichlet starts.
std::vector<double> exact_ode_distribution(const TinyInstance& inst, int steps, std::size_t trajectories,
                                           std::uint64_t seed);

/// Midpoint nodes on the (V-1)-simplex in the first V-1 coordinates.
/// V = 2: R equal intervals. V = 3: R^2 congruent triangles, node at each
/// centroid with weight 1 / (2 R^2). Nodes with any coordinate (including
/// the implied last one) below `floor` are dropped.
struct QuadratureGrid {
    int vocab_size = 2;
    int resolution = 0;
    std::vector<std::vector<double>> nodes;
    std::vector<double> weights;

    static QuadratureGrid simplex(int vocab_size, int resolution, double floor = 1e-6);
    double total_weight() const;
};

/// Integral of p_{t|1}(. | token) over the grid (product over S positions is
/// the S-th power for identical factors, so one position suffices).
double integrate_transition_density(const QuadratureGrid& grid, int token, double t, const SmoothingConfig& s);

struct PropositionReport {
    std::size_t points = 0;
    double mean_tv = 0.0;
    double max_tv = 0.0;
};

/// Compares `model` with exact_posterior on `points` states: t_i = (i + 0.5) / points
/// and x_t drawn from the generative process with a stream seeded by `seed`.
PropositionReport validate_proposition1(const TinyInstance& inst, const Denoiser& model, std::size_t points = 200,
                                        std::uint64_t seed = 20240601);

/// Tabular denoiser fit on `samples` draws of (x_t, x_1) with t ~ U(0, 1).
TabularDenoiser fit_tabular(const TinyInstance& inst, TabularDenoiser::Config cfg, std::size_t samples,
                            std::uint64_t seed);

/// Monte-Carlo estimate of E[-log p(x_1^(k) | x_t)] per position under the
/// exact posterior, with t ~ U(0, 1).
double exact_conditional_entropy(const TinyInstance& inst, std::size_t samples, std::uint64_t seed);

/// Exact posterior behind the Denoiser interface (log-probabilities).
class ExactDenoiser final : public Denoiser {
public:
    explicit ExactDenoiser(TinyInstance inst);

    int vocab_size() const override { return inst_.vocab_size; }
    int max_seq_len() const override { return inst_.seq_len; }
    LogitMatrix predict(const SequenceState& state) const override;

private:
    TinyInstance inst_;
};

/// Exact posterior marginals for sequences from a Markov toy language
/// (contexts started from the stationary law, as in sample_toy_corpus).
/// The per-position likelihoods are independent given the clean sequence,
/// so forward-backward over the V^order contexts gives every marginal in
/// O(S V^(order+1)); no size limit beyond that.
class MarkovPosteriorDenoiser final : public Denoiser {
public:
    MarkovPosteriorDenoiser(MarkovToyLanguage lang, int seq_len, double beta = 0.01);

    int vocab_size() const override { return lang_.vocab_size; }
    int max_seq_len() const override { return seq_len_; }
    LogitMatrix predict(const SequenceState& state) const override;

private:
    MarkovToyLanguage lang_;
    int seq_len_;
    SmoothingConfig smoothing_;
    std::vector<double> stationary_;
};

}  // namespace klflow
