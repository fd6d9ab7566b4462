// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "klflow/errors.hpp"

namespace klflow {

void TinyInstance::validate() const {
    if (vocab_size < 2 || vocab_size > 4) throw ConfigError("V", "tiny instances need 2 <= V <= 4");
    if (seq_len < 1 || seq_len > 2) throw ConfigError("S", "tiny instances need 1 <= S <= 2");
    if (p1.size() != num_sequences()) throw ConfigError("p1", "expected V^S probabilities");
    double total = 0.0;
    for (double p : p1) {
        if (!(p >= 0.0)) throw ConfigError("p1", "probabilities must be nonnegative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("p1", "probabilities must sum to 1");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta", "must lie in (0, 1)");
}

std::size_t TinyInstance::num_sequences() const {
    std::size_t n = 1;
    for (int k = 0; k < seq_len; ++k) n *= static_cast<std::size_t>(vocab_size);
    return n;
}

std::vector<int> TinyInstance::sequence(std::size_t index) const {
    std::vector<int> seq(static_cast<std::size_t>(seq_len));
    for (int k = seq_len - 1; k >= 0; --k) {
        seq[static_cast<std::size_t>(k)] = static_cast<int>(index % static_cast<std::size_t>(vocab_size));
        index /= static_cast<std::size_t>(vocab_size);
    }
    return seq;
}

LogitMatrix TinyInstance::marginals() const {
    LogitMatrix m = LogitMatrix::Zero(seq_len, vocab_size);
    for (std::size_t s = 0; s < p1.size(); ++s) {
        const auto seq = sequence(s);
        for (int k = 0; k < seq_len; ++k) m(k, seq[static_cast<std::size_t>(k)]) += p1[s];
    }
    return m;
}

std::vector<int> TinyInstance::sample(Rng& rng) const {
    return sequence(static_cast<std::size_t>(sample_categorical(p1, rng)));
}

SequenceState TinyInstance::sample_state(double t, Rng& rng, std::vector<int>* clean) const {
    const auto tokens = sample(rng);
    const auto s = smoothing();
    SequenceState state{LogitMatrix(seq_len, vocab_size), t};
    for (int k = 0; k < seq_len; ++k) {
        const auto l0 = sample_dirichlet_uniform_logits(vocab_size, rng);
        const auto l1 = smooth_onehot_logits(tokens[static_cast<std::size_t>(k)], s);
        for (int i = 0; i < vocab_size; ++i) {
            state.logits(k, i) = (1.0 - t) * l0[static_cast<std::size_t>(i)] + t * l1[static_cast<std::size_t>(i)];
        }
    }
    if (clean != nullptr) *clean = tokens;
    return state;
}

nlohmann::json TinyInstance::to_json() const {
    return {{"V", vocab_size}, {"S", seq_len}, {"p1", p1}, {"beta", beta}};
}

TinyInstance TinyInstance::from_json(const nlohmann::json& j) {
    TinyInstance inst;
    try {
        inst.vocab_size = j.at("V").get<int>();
        inst.seq_len = j.value("S", 1);
        inst.p1 = j.at("p1").get<std::vector<double>>();
        inst.beta = j.value("beta", 0.01);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("instance", e.what());
    }
    inst.validate();
    return inst;
}

namespace {

// sum_i log softmax(z)_i with z = (c(l_t) - t c(l_1^j)) / (1 - t).
// Centering is omitted: both the mean of l_t and of l_1 drop out of the
// softmax, and the hot-token offset enters as -t D / (1 - t) on entry j.
double log_noise_product(std::span<const double> logits_t, int token, double t, double gap,
                         std::vector<double>& z) {
    const std::size_t v = logits_t.size();
    const double inv = 1.0 / (1.0 - t);
    for (std::size_t i = 0; i < v; ++i) z[i] = logits_t[i] * inv;
    z[static_cast<std::size_t>(token)] -= gap * t * inv;
    const double lse = log_sum_exp(z);
    double acc = 0.0;
    for (std::size_t i = 0; i < v; ++i) acc += z[i] - lse;
    return acc;
}

double smoothing_gap(const SmoothingConfig& s) { return s.log_high() - s.log_low(); }

void check_state(const TinyInstance& inst, const SequenceState& state) {
    if (state.seq_len() != inst.seq_len || state.vocab_size() != inst.vocab_size) {
        throw InputError("state shape does not match the instance");
    }
    state.validate();
}

}  // namespace

double log_transition_density(std::span<const double> logits_t, int token, double t, const SmoothingConfig& s) {
    if (!(t >= 0.0 && t < 1.0)) throw DomainError("transition density needs 0 <= t < 1");
    const std::size_t v = logits_t.size();
    std::vector<double> z(v);
    const double log_x0 = log_noise_product(logits_t, token, t, smoothing_gap(s), z);
    std::vector<double> xt(logits_t.begin(), logits_t.end());
    const double lse = log_sum_exp(xt);
    double log_xt = 0.0;
    for (double l : logits_t) log_xt += l - lse;
    const double vm1 = static_cast<double>(v - 1);
    return std::lgamma(vm1 + 1.0) + log_x0 - vm1 * std::log1p(-t) - log_xt;
}

LogitMatrix exact_posterior(const TinyInstance& inst, const SequenceState& state) {
    check_state(inst, state);
    const int v = inst.vocab_size;
    const int seq = inst.seq_len;
    if (state.t <= 0.0) return inst.marginals();
    if (state.t >= 1.0) {
        LogitMatrix out = LogitMatrix::Zero(seq, v);
        const auto tokens = decode_argmax(state.logits);
        for (int k = 0; k < seq; ++k) out(k, tokens[static_cast<std::size_t>(k)]) = 1.0;
        return out;
    }
    const double gap = smoothing_gap(inst.smoothing());
    std::vector<double> z(static_cast<std::size_t>(v));
    std::vector<double> factor(static_cast<std::size_t>(seq * v));
    for (int k = 0; k < seq; ++k) {
        const std::span<const double> row(state.logits.row(k).data(), static_cast<std::size_t>(v));
        for (int j = 0; j < v; ++j) {
            factor[static_cast<std::size_t>(k * v + j)] = log_noise_product(row, j, state.t, gap, z);
        }
    }
    std::vector<double> logw(inst.num_sequences(), -std::numeric_limits<double>::infinity());
    for (std::size_t s = 0; s < logw.size(); ++s) {
        if (inst.p1[s] <= 0.0) continue;
        const auto tokens = inst.sequence(s);
        double w = std::log(inst.p1[s]);
        for (int k = 0; k < seq; ++k) w += factor[static_cast<std::size_t>(k * v + tokens[static_cast<std::size_t>(k)])];
        logw[s] = w;
    }
    const double norm = log_sum_exp(logw);
    LogitMatrix out = LogitMatrix::Zero(seq, v);
    for (std::size_t s = 0; s < logw.size(); ++s) {
        if (inst.p1[s] <= 0.0) continue;
        const double w = std::exp(logw[s] - norm);
        const auto tokens = inst.sequence(s);
        for (int k = 0; k < seq; ++k) out(k, tokens[static_cast<std::size_t>(k)]) += w;
    }
    return out;
}

std::vector<double> interval_posterior(const TinyInstance& inst, double x_t0, double t, int resolution) {
    inst.validate();
    if (inst.vocab_size != 2 || inst.seq_len != 1) throw InputError("interval posterior needs V = 2, S = 1");
    if (!(t > 0.0 && t < 1.0)) throw DomainError("interval posterior needs 0 < t < 1");
    const double half = 0.5 / resolution;
    const double a = x_t0 - half;
    const double b = x_t0 + half;
    if (!(a > 0.0 && b < 1.0)) throw DomainError("interval leaves the simplex interior");
    const auto logit = [](double p) { return std::log(p) - std::log1p(-p); };
    const auto sigmoid = [](double y) { return 1.0 / (1.0 + std::exp(-y)); };
    const double gap = smoothing_gap(inst.smoothing());
    std::vector<double> post(2);
    for (int j = 0; j < 2; ++j) {
        // logit difference l[0] - l[1] of the clean endpoint
        const double y1 = j == 0 ? gap : -gap;
        const double lo = (logit(a) - t * y1) / (1.0 - t);
        const double hi = (logit(b) - t * y1) / (1.0 - t);
        post[static_cast<std::size_t>(j)] = inst.p1[static_cast<std::size_t>(j)] * (sigmoid(hi) - sigmoid(lo));
    }
    const double total = post[0] + post[1];
    post[0] /= total;
    post[1] /= total;
    return post;
}

LogitMatrix expected_clean_logits(const LogitMatrix& posterior, const SmoothingConfig& s) {
    const double hi = s.log_high();
    const double lo = s.log_low();
    LogitMatrix out(posterior.rows(), posterior.cols());
    for (Eigen::Index i = 0; i < posterior.size(); ++i) {
        const double w = posterior.data()[i];
        out.data()[i] = w * hi + (1.0 - w) * lo;
    }
    return out;
}

ExactVelocity exact_velocity(const TinyInstance& inst, const SequenceState& state) {
    if (!(state.t < 1.0)) throw DomainError("exact velocity is undefined at t = 1");
    ExactVelocity out;
    out.expected_l1 = expected_clean_logits(exact_posterior(inst, state), inst.smoothing());
    out.velocity = (out.expected_l1 - state.logits) / (1.0 - state.t);
    return out;
}

SequenceState integrate_exact_ode(const TinyInstance& inst, const LogitMatrix& l0, int steps) {
    if (steps < 1) throw InputError("steps must be positive");
    const auto s = inst.smoothing();
    SequenceState state{l0, 0.0};
    for (int i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        const double next = static_cast<double>(i + 1) / steps;
        state.t = t;
        const LogitMatrix target = expected_clean_logits(exact_posterior(inst, state), s);
        state.logits += ((next - t) / (1.0 - t)) * (target - state.logits);
    }
    state.t = 1.0;
    return state;
}

std::vector<double> exact_ode_distribution(const TinyInstance& inst, int steps, std::size_t trajectories,
                                           std::uint64_t seed) {
    inst.validate();
    Rng rng(seed);
    std::vector<double> hist(inst.num_sequences(), 0.0);
    LogitMatrix l0(inst.seq_len, inst.vocab_size);
    for (std::size_t n = 0; n < trajectories; ++n) {
        for (int k = 0; k < inst.seq_len; ++k) {
            const auto row = sample_dirichlet_uniform_logits(inst.vocab_size, rng);
            for (int i = 0; i < inst.vocab_size; ++i) l0(k, i) = row[static_cast<std::size_t>(i)];
        }
        const auto tokens = decode_argmax(integrate_exact_ode(inst, l0, steps).logits);
        std::size_t index = 0;
        for (int tok : tokens) index = index * static_cast<std::size_t>(inst.vocab_size) + static_cast<std::size_t>(tok);
        hist[index] += 1.0;
    }
    for (double& h : hist) h /= static_cast<double>(trajectories);
    return hist;
}

QuadratureGrid QuadratureGrid::simplex(int vocab_size, int resolution, double floor) {
    if (resolution < 1) throw InputError("quadrature resolution must be positive");
    QuadratureGrid g;
    g.vocab_size = vocab_size;
    g.resolution = resolution;
    const double r = resolution;
    const auto keep = [floor](std::initializer_list<double> xs) {
        return std::all_of(xs.begin(), xs.end(), [floor](double x) { return x >= floor; });
    };
    if (vocab_size == 2) {
        for (int i = 0; i < resolution; ++i) {
            const double x = (i + 0.5) / r;
            if (!keep({x, 1.0 - x})) continue;
            g.nodes.push_back({x});
            g.weights.push_back(1.0 / r);
        }
    } else if (vocab_size == 3) {
        const double w = 0.5 / (r * r);
        for (int i = 0; i < resolution; ++i) {
            for (int j = 0; i + j < resolution; ++j) {
                // upward triangle (i, j), (i+1, j), (i, j+1)
                double x = (i + 1.0 / 3.0) / r;
                double y = (j + 1.0 / 3.0) / r;
                if (keep({x, y, 1.0 - x - y})) {
                    g.nodes.push_back({x, y});
                    g.weights.push_back(w);
                }
                if (i + j + 1 < resolution) {
                    // downward triangle (i+1, j), (i, j+1), (i+1, j+1)
                    x = (i + 2.0 / 3.0) / r;
                    y = (j + 2.0 / 3.0) / r;
                    if (keep({x, y, 1.0 - x - y})) {
                        g.nodes.push_back({x, y});
                        g.weights.push_back(w);
                    }
                }
            }
        }
    } else {
        throw InputError("quadrature supports V = 2 or V = 3");
    }
    return g;
}

double QuadratureGrid::total_weight() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

double integrate_transition_density(const QuadratureGrid& grid, int token, double t, const SmoothingConfig& s) {
    std::vector<double> logits(static_cast<std::size_t>(grid.vocab_size));
    double acc = 0.0;
    for (std::size_t n = 0; n < grid.nodes.size(); ++n) {
        double last = 1.0;
        for (std::size_t i = 0; i < grid.nodes[n].size(); ++i) {
            logits[i] = std::log(grid.nodes[n][i]);
            last -= grid.nodes[n][i];
        }
        logits.back() = std::log(last);
        acc += grid.weights[n] * std::exp(log_transition_density(logits, token, t, s));
    }
    return acc;
}

PropositionReport validate_proposition1(const TinyInstance& inst, const Denoiser& model, std::size_t points,
                                        std::uint64_t seed) {
    inst.validate();
    if (model.vocab_size() != inst.vocab_size) throw InputError("denoiser vocabulary does not match the instance");
    Rng rng(seed);
    PropositionReport rep;
    rep.points = points;
    double total = 0.0;
    for (std::size_t i = 0; i < points; ++i) {
        const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(points);
        const auto state = inst.sample_state(t, rng);
        const LogitMatrix exact = exact_posterior(inst, state);
        const LogitMatrix pred = row_softmax(model.predict(state));
        double tv = 0.0;
        for (int k = 0; k < inst.seq_len; ++k) tv += 0.5 * (exact.row(k) - pred.row(k)).cwiseAbs().sum();
        tv /= inst.seq_len;
        total += tv;
        rep.max_tv = std::max(rep.max_tv, tv);
    }
    rep.mean_tv = points > 0 ? total / static_cast<double>(points) : 0.0;
    return rep;
}

TabularDenoiser fit_tabular(const TinyInstance& inst, TabularDenoiser::Config cfg, std::size_t samples,
                            std::uint64_t seed) {
    inst.validate();
    cfg.vocab_size = inst.vocab_size;
    cfg.seq_len = inst.seq_len;
    cfg.beta = inst.beta;
    TabularDenoiser tab(cfg);
    Rng rng(seed);
    std::vector<int> clean;
    for (std::size_t i = 0; i < samples; ++i) {
        const auto state = inst.sample_state(rng.uniform(), rng, &clean);
        tab.observe(state, clean);
    }
    return tab;
}

double exact_conditional_entropy(const TinyInstance& inst, std::size_t samples, std::uint64_t seed) {
    inst.validate();
    Rng rng(seed);
    double acc = 0.0;
    std::vector<int> clean;
    for (std::size_t n = 0; n < samples; ++n) {
        const double t = rng.uniform();
        const auto state = inst.sample_state(t, rng, &clean);
        const LogitMatrix post = exact_posterior(inst, state);
        for (int k = 0; k < inst.seq_len; ++k) acc -= std::log(post(k, clean[static_cast<std::size_t>(k)]));
    }
    return acc / static_cast<double>(samples * static_cast<std::size_t>(inst.seq_len));
}

ExactDenoiser::ExactDenoiser(TinyInstance inst) : inst_(std::move(inst)) { inst_.validate(); }

LogitMatrix ExactDenoiser::predict(const SequenceState& state) const {
    LogitMatrix post = exact_posterior(inst_, state);
    for (Eigen::Index i = 0; i < post.size(); ++i) {
        post.data()[i] = post.data()[i] > 0.0 ? std::max(-1000.0, std::log(post.data()[i])) : -1000.0;
    }
    return post;
}

MarkovPosteriorDenoiser::MarkovPosteriorDenoiser(MarkovToyLanguage lang, int seq_len, double beta)
    : lang_(std::move(lang)), seq_len_(seq_len), smoothing_{beta, lang_.vocab_size, 0.0} {
    lang_.validate();
    smoothing_.validate();
    if (seq_len_ < 1) throw InputError("MarkovPosteriorDenoiser: seq_len must be positive");
    stationary_ = lang_.stationary_contexts();
}

LogitMatrix MarkovPosteriorDenoiser::predict(const SequenceState& state) const {
    state.validate();
    const int v = lang_.vocab_size;
    if (state.vocab_size() != v || state.seq_len() > seq_len_) {
        throw InputError("MarkovPosteriorDenoiser: state shape does not match the language");
    }
    if (state.t >= 1.0) throw DomainError("MarkovPosteriorDenoiser: t must be below 1");
    const auto uv = static_cast<std::size_t>(v);
    const int s = state.seq_len();
    const int order = lang_.order;
    // Positions past the end of a short sequence carry no evidence.
    const int len = std::max(s, order);
    std::vector<std::vector<double>> like(static_cast<std::size_t>(len), std::vector<double>(uv, 1.0));
    std::vector<double> row(uv);
    for (int k = 0; k < s; ++k) {
        for (int j = 0; j < v; ++j) row[static_cast<std::size_t>(j)] = state.logits(k, j);
        auto& l = like[static_cast<std::size_t>(k)];
        double top = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < v; ++j) {
            l[static_cast<std::size_t>(j)] = log_transition_density(row, j, state.t, smoothing_);
            top = std::max(top, l[static_cast<std::size_t>(j)]);
        }
        for (double& x : l) x = std::exp(x - top);
    }

    const std::size_t nctx = lang_.num_contexts();
    const std::size_t shift_mod = nctx / uv;
    auto token_at = [&](std::size_t ctx, int i) {  // i-th token of a context window
        for (int r = order - 1; r > i; --r) ctx /= uv;
        return ctx % uv;
    };
    auto normalize = [](std::vector<double>& w) {
        double total = 0.0;
        for (double x : w) total += x;
        for (double& x : w) x /= total;
    };

    // Window k covers positions k .. k + order - 1.
    const int windows = len - order + 1;
    std::vector<std::vector<double>> fwd(static_cast<std::size_t>(windows), std::vector<double>(nctx, 0.0));
    std::vector<std::vector<double>> bwd(static_cast<std::size_t>(windows), std::vector<double>(nctx, 1.0));
    for (std::size_t c = 0; c < nctx; ++c) {
        double w = stationary_[c];
        for (int i = 0; i < order; ++i) w *= like[static_cast<std::size_t>(i)][token_at(c, i)];
        fwd[0][c] = w;
    }
    normalize(fwd[0]);
    for (int k = 1; k < windows; ++k) {
        const auto& prev = fwd[static_cast<std::size_t>(k - 1)];
        auto& cur = fwd[static_cast<std::size_t>(k)];
        const auto& l = like[static_cast<std::size_t>(k + order - 1)];
        for (std::size_t c = 0; c < nctx; ++c) {
            if (prev[c] == 0.0) continue;
            const auto next = lang_.row(c);
            const std::size_t base = (c % shift_mod) * uv;
            for (std::size_t j = 0; j < uv; ++j) cur[base + j] += prev[c] * next[j] * l[j];
        }
        normalize(cur);
    }
    for (int k = windows - 2; k >= 0; --k) {
        const auto& after = bwd[static_cast<std::size_t>(k + 1)];
        auto& cur = bwd[static_cast<std::size_t>(k)];
        const auto& l = like[static_cast<std::size_t>(k + order)];
        for (std::size_t c = 0; c < nctx; ++c) {
            const auto next = lang_.row(c);
            const std::size_t base = (c % shift_mod) * uv;
            double acc = 0.0;
            for (std::size_t j = 0; j < uv; ++j) acc += next[j] * l[j] * after[base + j];
            cur[c] = acc;
        }
        normalize(cur);
    }

    LogitMatrix probs = LogitMatrix::Zero(s, v);
    std::vector<double> joint(nctx);
    for (int k = 0; k < windows; ++k) {
        for (std::size_t c = 0; c < nctx; ++c) joint[c] = fwd[static_cast<std::size_t>(k)][c] * bwd[static_cast<std::size_t>(k)][c];
        normalize(joint);
        // Window 0 supplies the first order positions; later windows their last one.
        for (std::size_t c = 0; c < nctx; ++c) {
            if (joint[c] == 0.0) continue;
            if (k == 0) {
                for (int i = 0; i < order && i < s; ++i) probs(i, static_cast<Eigen::Index>(token_at(c, i))) += joint[c];
            } else if (k + order - 1 < s) {
                probs(k + order - 1, static_cast<Eigen::Index>(c % uv)) += joint[c];
            }
        }
    }
    LogitMatrix out(s, v);
    for (int k = 0; k < s; ++k) {
        for (int j = 0; j < v; ++j) out(k, j) = std::log(std::max(probs(k, j), kMinProbability));
    }
    return out;
}

}  // namespace klflow
