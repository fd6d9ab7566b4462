// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include "klflow/corpus.hpp"
#include "klflow/errors.hpp"

namespace klflow {

std::string to_string(Scheme scheme) {
    switch (scheme) {
        case Scheme::basic: return "basic";
        case Scheme::semi_sampling: return "semi_sampling";
        case Scheme::sampling: return "sampling";
        case Scheme::hybrid: return "hybrid";
    }
    return "unknown";
}

Scheme parse_scheme(std::string_view name) {
    if (name == "basic") return Scheme::basic;
    if (name == "semi_sampling" || name == "semi") return Scheme::semi_sampling;
    if (name == "sampling") return Scheme::sampling;
    if (name == "hybrid") return Scheme::hybrid;
    throw ConfigError("scheme", "expected basic, semi_sampling, sampling or hybrid, got '" + std::string(name) + "'");
}

void InferenceConfig::validate(int vocab_size) const {
    if (steps < 1) throw ConfigError("steps", "must be at least 1");
    if (!(step_size >= 0.0)) throw ConfigError("step_size", "must be positive");
    if (step_size > 0.0 && step_size * steps > 1.0 + 1e-12) throw ConfigError("step_size", "steps * step_size exceeds 1");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta", "must lie in (0, 1)");
    if (top_k < 0 || top_k > vocab_size) throw ConfigError("top_k", "must lie in [1, V] (0 disables truncation)");
    if (!(t_star >= 0.0)) throw ConfigError("t_star", "must be nonnegative");
    if (!(smoothing_denominator >= 0.0)) throw ConfigError("smoothing_denominator", "must be positive");
}

std::vector<double> InferenceConfig::time_grid() const {
    std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
    const bool uniform = step_size == 0.0 || std::abs(step_size * steps - 1.0) <= 1e-12;
    for (int i = 0; i <= steps; ++i) {
        grid[static_cast<std::size_t>(i)] = uniform ? static_cast<double>(i) / steps : i * step_size;
    }
    return grid;
}

void ClampMask::validate(int seq_len, int vocab_size) const {
    for (const auto& [pos, tok] : fixed) {
        if (pos < 0 || pos >= seq_len) throw InputError("clamp position " + std::to_string(pos) + " outside the sequence");
        if (tok < 0 || tok >= vocab_size) throw InputError("clamp token " + std::to_string(tok) + " outside the vocabulary");
    }
}

void apply_clamp(LogitMatrix& logits, const ClampMask& mask, const SmoothingConfig& s) {
    if (mask.empty()) return;
    const double hi = s.log_high();
    const double lo = s.log_low();
    for (const auto& [pos, tok] : mask.fixed) {
        logits.row(pos).setConstant(lo);
        logits(pos, tok) = hi;
    }
}

int sample_top_k(std::span<const double> probs, int k, Rng& rng) {
    const int v = static_cast<int>(probs.size());
    if (k <= 0 || k >= v) return sample_categorical(probs, rng);
    std::vector<int> order(static_cast<std::size_t>(v));
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        const double pa = probs[static_cast<std::size_t>(a)];
        const double pb = probs[static_cast<std::size_t>(b)];
        return pa > pb || (pa == pb && a < b);
    });
    std::vector<double> kept(static_cast<std::size_t>(v), 0.0);
    for (int i = 0; i < k; ++i) kept[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = probs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    if (std::accumulate(kept.begin(), kept.end(), 0.0) <= 0.0) return order.front();
    return sample_categorical(kept, rng);
}

namespace {

enum class StepKind { basic, semi, sampling };

StepKind step_kind(const InferenceConfig& cfg, double t) {
    switch (cfg.scheme) {
        case Scheme::basic: return StepKind::basic;
        case Scheme::semi_sampling: return StepKind::semi;
        case Scheme::sampling: return StepKind::sampling;
        case Scheme::hybrid: return t < cfg.t_star ? StepKind::basic : StepKind::sampling;
    }
    return StepKind::basic;
}

Trajectory integrate(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng, const ClampMask& clamp,
                     bool record) {
    const int v = model.vocab_size();
    cfg.validate(v);
    if (seq_len < 1 || seq_len > model.max_seq_len()) {
        throw InputError("sequence length " + std::to_string(seq_len) + " not supported by the model");
    }
    clamp.validate(seq_len, v);
    const SmoothingConfig s{cfg.beta, v, cfg.smoothing_denominator};
    const double hi = s.log_high();
    const double lo = s.log_low();
    const auto grid = cfg.time_grid();

    SequenceState state{LogitMatrix(seq_len, v), 0.0};
    for (int k = 0; k < seq_len; ++k) {
        const auto l0 = sample_dirichlet_uniform_logits(v, rng);
        for (int i = 0; i < v; ++i) state.logits(k, i) = l0[static_cast<std::size_t>(i)];
    }
    apply_clamp(state.logits, clamp, s);

    Trajectory traj;
    traj.times.push_back(0.0);
    if (record) traj.states.push_back(state.logits);
    std::vector<int> tokens(static_cast<std::size_t>(seq_len));
    std::vector<double> probs(static_cast<std::size_t>(v));

    for (int i = 0; i < cfg.steps; ++i) {
        const double t = grid[static_cast<std::size_t>(i)];
        const double next = grid[static_cast<std::size_t>(i) + 1];
        state.t = t;
        const LogitMatrix out = model.predict(state);
        ++traj.nfe;
        if (out.rows() != seq_len || out.cols() != v) throw InputError("denoiser output shape does not match the state");
        const LogitMatrix w = row_softmax(out);
        const StepKind kind = step_kind(cfg, t);
        if (kind == StepKind::basic) {
            const double f = (next - t) / (1.0 - t);
            for (int k = 0; k < seq_len; ++k) {
                for (int j = 0; j < v; ++j) {
                    const double target = w(k, j) * hi + (1.0 - w(k, j)) * lo;
                    state.logits(k, j) += f * (target - state.logits(k, j));
                }
            }
        } else {
            for (int k = 0; k < seq_len; ++k) {
                for (int j = 0; j < v; ++j) probs[static_cast<std::size_t>(j)] = w(k, j);
                tokens[static_cast<std::size_t>(k)] = sample_top_k(probs, cfg.top_k, rng);
            }
            if (kind == StepKind::semi) {
                const double f = (next - t) / (1.0 - t);
                for (int k = 0; k < seq_len; ++k) {
                    for (int j = 0; j < v; ++j) {
                        const double target = j == tokens[static_cast<std::size_t>(k)] ? hi : lo;
                        state.logits(k, j) += f * (target - state.logits(k, j));
                    }
                }
            } else {
                for (int k = 0; k < seq_len; ++k) {
                    const auto l0 = sample_dirichlet_uniform_logits(v, rng);
                    for (int j = 0; j < v; ++j) {
                        const double l1 = j == tokens[static_cast<std::size_t>(k)] ? hi : lo;
                        state.logits(k, j) = (1.0 - next) * l0[static_cast<std::size_t>(j)] + next * l1;
                    }
                }
            }
        }
        apply_clamp(state.logits, clamp, s);
        if (!state.logits.allFinite()) throw NumericError("non-finite state at inference step " + std::to_string(i));
        traj.times.push_back(next);
        if (record) traj.states.push_back(state.logits);
    }
    state.t = grid.back();
    traj.final_logits = state.logits;
    traj.tokens = decode_argmax(state.logits);
    return traj;
}

Trajectory run_as(Scheme scheme, const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                  const ClampMask& clamp, bool record) {
    if (cfg.scheme != scheme) throw ConfigError("scheme", "expected " + to_string(scheme) + ", got " + to_string(cfg.scheme));
    return integrate(model, cfg, seq_len, rng, clamp, record);
}

}  // namespace

Trajectory run_inference(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                         const ClampMask& clamp, bool record) {
    return integrate(model, cfg, seq_len, rng, clamp, record);
}

Trajectory infer_basic(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                       const ClampMask& clamp, bool record) {
    return run_as(Scheme::basic, model, cfg, seq_len, rng, clamp, record);
}

Trajectory infer_semi_sampling(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                               const ClampMask& clamp, bool record) {
    return run_as(Scheme::semi_sampling, model, cfg, seq_len, rng, clamp, record);
}

Trajectory infer_sampling(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                          const ClampMask& clamp, bool record) {
    return run_as(Scheme::sampling, model, cfg, seq_len, rng, clamp, record);
}

Trajectory infer_hybrid(const Denoiser& model, const InferenceConfig& cfg, int seq_len, Rng& rng,
                        const ClampMask& clamp, bool record) {
    return run_as(Scheme::hybrid, model, cfg, seq_len, rng, clamp, record);
}

std::vector<Trajectory> generate(const Denoiser& model, const InferenceConfig& cfg, int seq_len, std::size_t count,
                                 const ClampMask& clamp, bool record, int threads) {
    cfg.validate(model.vocab_size());
    std::vector<Trajectory> out(count);
    const auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Rng rng = Rng::derived(cfg.seed, i);
            out[i] = integrate(model, cfg, seq_len, rng, clamp, record);
        }
    };
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || count < 2) {
        run_range(0, count);
        return out;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    run_range(count * w / workers, count * (w + 1) / workers);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const Vocab* vocab) {
    out << "step,t,position,argmax_token,argmax_prob\n";
    for (std::size_t step = 0; step < traj.states.size(); ++step) {
        const LogitMatrix p = row_softmax(traj.states[step]);
        for (Eigen::Index k = 0; k < p.rows(); ++k) {
            Eigen::Index best = 0;
            p.row(k).maxCoeff(&best);
            out << step << ',' << traj.times[step] << ',' << k << ',' << best << ',' << p(k, best) << '\n';
        }
    }
    if (vocab != nullptr) out << "# decoded: " << vocab->decode_text(traj.tokens) << '\n';
}

}  // namespace klflow
