// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "klflow/checkpoint.hpp"
#include "klflow/config_io.hpp"

namespace klflow {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size", "must be positive");
    if (steps < 1) throw ConfigError("steps", "must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be positive");
    if (lr_warmup_steps < 0) throw ConfigError("lr_warmup_steps", "must be nonnegative");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("beta", "must lie in (0, 1)");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every", "must be nonnegative");
    if (eval_every < 1) throw ConfigError("eval_every", "must be positive");
    if (threads < 1) throw ConfigError("threads", "must be positive");
    if (!(grad_clip > 0.0)) throw ConfigError("grad_clip", "must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1", "must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2", "must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps", "must be positive");
}

std::string to_string(TimeDistribution) { return "uniform"; }

TimeDistribution parse_time_distribution(std::string_view name) {
    if (name == "uniform") return TimeDistribution::uniform;
    throw ConfigError("t_distribution", "only 'uniform' is supported");
}

TrainingExample make_training_example_at(std::span<const int> tokens, const SmoothingConfig& s, double t, Rng& rng) {
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("training time must lie in [0, 1]");
    const int v = s.vocab_size;
    TrainingExample ex{SequenceState{LogitMatrix(static_cast<Eigen::Index>(tokens.size()), v), t},
                       std::vector<int>(tokens.begin(), tokens.end())};
    const double hi = s.log_high();
    const double lo = s.log_low();
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        if (tokens[k] < 0 || tokens[k] >= v) throw InputError("token " + std::to_string(tokens[k]) + " outside vocabulary");
        const auto l0 = sample_dirichlet_uniform_logits(v, rng);
        for (int i = 0; i < v; ++i) {
            const double l1 = i == tokens[k] ? hi : lo;
            ex.state.logits(static_cast<Eigen::Index>(k), i) = (1.0 - t) * l0[static_cast<std::size_t>(i)] + t * l1;
        }
    }
    return ex;
}

TrainingExample make_training_example(std::span<const int> tokens, const SmoothingConfig& s, Rng& rng) {
    const double t = rng.uniform();
    return make_training_example_at(tokens, s, t, rng);
}

TrainError::TrainError(int step, std::filesystem::path last_checkpoint, const std::string& cause)
    : NumericError("non-finite value at step " + std::to_string(step) + " (" + cause + "); last good checkpoint: " +
                   (last_checkpoint.empty() ? std::string("none") : last_checkpoint.string())),
      step_(step),
      last_checkpoint_(std::move(last_checkpoint)) {}

namespace {

struct Adam {
    ParamSet<float> m;
    ParamSet<float> v;
    int t = 0;

    void step(ParamSet<float>& params, const ParamSet<float>& grad, const TrainConfig& cfg, double lr) {
        ++t;
        const float b1 = static_cast<float>(cfg.adam_beta1);
        const float b2 = static_cast<float>(cfg.adam_beta2);
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
        const float step_size = static_cast<float>(lr * std::sqrt(c2) / c1);
        const float eps = static_cast<float>(cfg.adam_eps * std::sqrt(c2));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& mi = m.tensors[i];
            auto& vi = v.tensors[i];
            const auto& g = grad.tensors[i];
            mi = b1 * mi + (1.0f - b1) * g;
            vi = b2 * vi + (1.0f - b2) * g.cwiseProduct(g);
            params.tensors[i].array() -= step_size * mi.array() / (vi.array().sqrt() + eps);
        }
    }
};

double scheduled_lr(const TrainConfig& cfg, int step) {
    if (cfg.lr_warmup_steps == 0 || step >= cfg.lr_warmup_steps) return cfg.lr;
    return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.lr_warmup_steps);
}

nlohmann::json checkpoint_metadata(const TrainConfig& cfg, const TransformerConfig& model_cfg, int step,
                                   const nlohmann::json& extra) {
    nlohmann::json meta = extra;
    meta["transformer"] = model_cfg;
    meta["train"] = cfg;
    meta["step"] = step;
    meta["seed"] = cfg.seed;
    return meta;
}

}  // namespace

TrainResult train(const CorpusStore& corpus, const TrainConfig& cfg, const TransformerConfig& model_cfg,
                  const TrainOptions& options) {
    cfg.validate();
    model_cfg.validate();
    if (corpus.empty()) throw InputError("training corpus is empty");
    if (corpus.seq_len() > model_cfg.max_seq_len) throw ConfigError("max_seq_len", "shorter than the corpus sequence length");
    for (int tok : corpus.tokens()) {
        if (tok < 0 || tok >= model_cfg.vocab_size) throw ConfigError("vocab_size", "corpus token " + std::to_string(tok) + " outside the model vocabulary");
    }

    const SmoothingConfig smoothing{cfg.beta, model_cfg.vocab_size, 0.0};
    const Transformer<float> net(model_cfg);
    TrainResult result;
    result.params = options.init ? *options.init : init_params<float>(model_cfg, cfg.seed);
    auto& params = result.params;
    Adam adam{ParamSet<float>::zeros(model_cfg), ParamSet<float>::zeros(model_cfg), 0};

    const int workers = std::min(cfg.threads, cfg.batch_size);
    std::vector<ParamSet<float>> grads(static_cast<std::size_t>(workers), ParamSet<float>::zeros(model_cfg));
    std::vector<double> worker_loss(static_cast<std::size_t>(workers));
    std::vector<std::string> worker_error(static_cast<std::size_t>(workers));

    const bool to_disk = !options.output_dir.empty();
    std::ofstream metrics;
    if (to_disk) {
        std::filesystem::create_directories(options.output_dir);
        const auto path = options.output_dir / options.metrics_name;
        const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
        metrics.open(path, std::ios::app);
        if (!metrics) throw InputError("cannot open metrics file " + path.string());
        if (fresh) metrics << "step,loss,lr,wall_ms\n";
    }
    const auto save = [&](int step) {
        const auto path = options.output_dir / options.checkpoint_name;
        save_checkpoint(make_checkpoint(params, checkpoint_metadata(cfg, model_cfg, step, options.extra_metadata)), path);
        result.checkpoint_path = path;
    };

    Rng picker(cfg.seed);
    std::vector<std::size_t> picks(static_cast<std::size_t>(cfg.batch_size));
    const auto start = std::chrono::steady_clock::now();
    double window_loss = 0.0;
    int window_count = 0;

    for (int step = 1; step <= cfg.steps; ++step) {
        for (auto& p : picks) p = static_cast<std::size_t>(picker.below(corpus.num_sequences()));
        const auto work = [&](int w) {
            auto& grad = grads[static_cast<std::size_t>(w)];
            grad.set_zero();
            double acc = 0.0;
            const int lo = cfg.batch_size * w / workers;
            const int hi = cfg.batch_size * (w + 1) / workers;
            try {
                for (int b = lo; b < hi; ++b) {
                    Rng rng = Rng::derived(cfg.seed, static_cast<std::uint64_t>(step - 1) * static_cast<std::uint64_t>(cfg.batch_size) + static_cast<std::uint64_t>(b));
                    const auto idx = picks[static_cast<std::size_t>(b)];
                    const auto ex = make_training_example(corpus.sequence(idx), smoothing, rng);
                    double weight = 1.0 / cfg.batch_size;
                    if (cfg.weight_by_inverse_time) weight /= 1.0 - ex.state.t;
                    acc += net.loss_and_gradient(params, ex.state, ex.targets, corpus.mask(idx), grad, static_cast<float>(weight));
                }
            } catch (const NumericError& e) {
                worker_error[static_cast<std::size_t>(w)] = e.what();
            }
            worker_loss[static_cast<std::size_t>(w)] = acc;
        };
        if (workers == 1) {
            work(0);
        } else {
            std::vector<std::jthread> pool;
            for (int w = 1; w < workers; ++w) pool.emplace_back(work, w);
            work(0);
        }
        double loss = 0.0;
        for (int w = 0; w < workers; ++w) {
            if (!worker_error[static_cast<std::size_t>(w)].empty()) {
                throw TrainError(step, result.checkpoint_path, worker_error[static_cast<std::size_t>(w)]);
            }
            loss += worker_loss[static_cast<std::size_t>(w)];
        }
        for (int w = 1; w < workers; ++w) grads[0].add_scaled(grads[static_cast<std::size_t>(w)], 1.0f);
        loss /= cfg.batch_size;
        if (!std::isfinite(loss)) throw TrainError(step, result.checkpoint_path, "loss");
        if (step == 1) result.initial_loss = loss;
        result.batch_losses.push_back(loss);

        const double norm = std::sqrt(grads[0].squared_norm());
        if (!std::isfinite(norm)) throw TrainError(step, result.checkpoint_path, "gradient");
        if (norm > cfg.grad_clip) {
            for (auto& g : grads[0].tensors) g *= static_cast<float>(cfg.grad_clip / norm);
        }
        const double lr = scheduled_lr(cfg, step);
        adam.step(params, grads[0], cfg, lr);
        if (!params.all_finite()) throw TrainError(step, result.checkpoint_path, "parameters");

        window_loss += loss;
        ++window_count;
        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            const double mean = window_loss / window_count;
            result.final_loss = mean;
            const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
            if (metrics.is_open()) metrics << step << ',' << mean << ',' << lr << ',' << ms << '\n' << std::flush;
            if (options.on_log) options.on_log(step, mean);
            window_loss = 0.0;
            window_count = 0;
        }
        if (to_disk && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && step != cfg.steps) save(step);
    }
    if (to_disk) save(cfg.steps);
    return result;
}

std::vector<double> loss_by_time(const ParamSet<float>& params, const TransformerConfig& model_cfg,
                                 const CorpusStore& corpus, double beta, int buckets, int per_bucket,
                                 std::uint64_t seed) {
    if (buckets < 1 || per_bucket < 1) throw InputError("buckets and per_bucket must be positive");
    if (corpus.empty()) throw InputError("held-out corpus is empty");
    const SmoothingConfig smoothing{beta, model_cfg.vocab_size, 0.0};
    const Transformer<float> net(model_cfg);
    Rng rng(seed);
    std::vector<double> out(static_cast<std::size_t>(buckets));
    for (int b = 0; b < buckets; ++b) {
        double acc = 0.0;
        for (int n = 0; n < per_bucket; ++n) {
            const auto idx = static_cast<std::size_t>(rng.below(corpus.num_sequences()));
            const double t = (b + rng.uniform()) / buckets;
            const auto ex = make_training_example_at(corpus.sequence(idx), smoothing, t, rng);
            const Mat<float> logits = net.forward(params, ex.state);
            acc += denoising_loss(logits.cast<double>(), ex.targets, corpus.mask(idx));
        }
        out[static_cast<std::size_t>(b)] = acc / per_bucket;
    }
    return out;
}

}  // namespace klflow
