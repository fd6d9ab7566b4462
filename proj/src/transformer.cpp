// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/transformer.hpp"

#include <cmath>
#include <string>

#include "klflow/errors.hpp"
#include "klflow/rng.hpp"

namespace klflow {

std::string to_string(TimeConditioning strategy) {
    switch (strategy) {
        case TimeConditioning::layer_norm_modulation: return "layer_norm_modulation";
        case TimeConditioning::time_token: return "time_token";
        case TimeConditioning::additive: return "additive";
    }
    return "unknown";
}

TimeConditioning parse_time_conditioning(std::string_view name) {
    if (name == "layer_norm_modulation") return TimeConditioning::layer_norm_modulation;
    if (name == "time_token") return TimeConditioning::time_token;
    if (name == "additive") return TimeConditioning::additive;
    throw ConfigError("time_conditioning", "unknown strategy '" + std::string(name) + "'");
}

void TransformerConfig::validate() const {
    if (layers < 1) throw ConfigError("layers", "must be >= 1");
    if (heads < 1) throw ConfigError("heads", "must be >= 1");
    if (embed_dim < 1) throw ConfigError("embed_dim", "must be >= 1");
    if (embed_dim % heads != 0) throw ConfigError("embed_dim", "must be divisible by heads");
    if (vocab_size < 2) throw ConfigError("vocab_size", "must be >= 2");
    if (max_seq_len < 1) throw ConfigError("max_seq_len", "must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio", "must be >= 1");
}

namespace {

constexpr int kTimeTensors = 6;
constexpr int kBlockTensors = 8;
constexpr int kModTensors = 2;
constexpr double kNormEps = 1e-5;

bool uses_modulation(const TransformerConfig& cfg) {
    return cfg.time_conditioning == TimeConditioning::layer_norm_modulation;
}

int block_tensor_count(const TransformerConfig& cfg) {
    return kBlockTensors + (uses_modulation(cfg) ? kModTensors : 0);
}

}  // namespace

std::vector<ParamSpec> parameter_inventory(const TransformerConfig& cfg) {
    cfg.validate();
    const int d = cfg.embed_dim;
    const int hidden = cfg.mlp_ratio * d;
    std::vector<ParamSpec> specs{
        {"tok_embed", cfg.vocab_size, d}, {"pos_embed", cfg.max_seq_len, d},
        {"time.w1", d, d},                {"time.b1", 1, d},
        {"time.w2", d, d},                {"time.b2", 1, d},
    };
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "blocks." + std::to_string(l) + ".";
        specs.push_back({p + "attn.wq", d, d});
        specs.push_back({p + "attn.wk", d, d});
        specs.push_back({p + "attn.wv", d, d});
        specs.push_back({p + "attn.wo", d, d});
        specs.push_back({p + "mlp.w1", d, hidden});
        specs.push_back({p + "mlp.b1", 1, hidden});
        specs.push_back({p + "mlp.w2", hidden, d});
        specs.push_back({p + "mlp.b2", 1, d});
        if (uses_modulation(cfg)) {
            specs.push_back({p + "mod.w", d, 4 * d});
            specs.push_back({p + "mod.b", 1, 4 * d});
        }
    }
    if (uses_modulation(cfg)) {
        specs.push_back({"final_mod.w", d, 2 * d});
        specs.push_back({"final_mod.b", 1, 2 * d});
    }
    specs.push_back({"head.w", d, cfg.vocab_size});
    specs.push_back({"head.b", 1, cfg.vocab_size});
    return specs;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros(const TransformerConfig& cfg) {
    ParamSet out;
    out.specs = parameter_inventory(cfg);
    for (const auto& s : out.specs) out.tensors.push_back(Mat<T>::Zero(s.rows, s.cols));
    return out;
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& m : tensors) n += static_cast<std::size_t>(m.size());
    return n;
}

template <typename T>
int ParamSet<T>::find(std::string_view name) const {
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

template <typename T>
void ParamSet<T>::set_zero() {
    for (auto& m : tensors) m.setZero();
}

template <typename T>
void ParamSet<T>::add_scaled(const ParamSet& other, T scale) {
    for (std::size_t i = 0; i < tensors.size(); ++i) tensors[i] += scale * other.tensors[i];
}

template <typename T>
double ParamSet<T>::squared_norm() const {
    double acc = 0.0;
    for (const auto& m : tensors) acc += static_cast<double>(m.squaredNorm());
    return acc;
}

template <typename T>
bool ParamSet<T>::all_finite() const {
    for (const auto& m : tensors) {
        if (!m.allFinite()) return false;
    }
    return true;
}

template <typename T>
ParamSet<T> init_params(const TransformerConfig& cfg, std::uint64_t seed, InitMode mode) {
    ParamSet<T> params = ParamSet<T>::zeros(cfg);
    Rng rng(seed);
    const double residual_scale = 1.0 / std::sqrt(2.0 * cfg.layers);
    const bool dense = mode == InitMode::dense;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.specs[i].name;
        auto& m = params.tensors[i];
        const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2");
        double std_dev = 1.0 / std::sqrt(static_cast<double>(m.rows()));
        if (name == "tok_embed") std_dev = 1.0;
        if (name == "pos_embed") std_dev = 0.5;
        if (name.ends_with("attn.wo") || name.ends_with("mlp.w2")) std_dev *= residual_scale;
        const bool zero_init = name.starts_with("head.") || name.find("mod.") != std::string::npos;
        if (is_bias && !dense) continue;
        if (zero_init && !dense) continue;
        if (is_bias) std_dev = 0.1;
        if (dense && zero_init && !is_bias) std_dev *= 0.5;
        for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<T>(std_dev * rng.normal());
    }
    return params;
}

std::vector<double> sinusoidal_time_embedding(double t, int dim) {
    std::vector<double> emb(static_cast<std::size_t>(dim), 0.0);
    const int half = dim / 2;
    const double scaled = 1000.0 * t;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / std::max(half, 1));
        emb[static_cast<std::size_t>(i)] = std::cos(scaled * freq);
        emb[static_cast<std::size_t>(i + half)] = std::sin(scaled * freq);
    }
    return emb;
}

// ---------------------------------------------------------------------------
// Transformer

template <typename T>
struct Transformer<T>::Cache {
    struct Layer {
        Mat<T> x_in, n1, inv1, a_in, q, k, v, o, x_mid, n2, inv2, m_in, z, th, g;
        std::vector<Mat<T>> attn;
        Mat<T> shift1, scale1, shift2, scale2;
    };

    Mat<T> probs;
    Mat<T> temb, a1, g1, c, cond;
    std::vector<Layer> layers;
    Mat<T> xf, nf, invf, f, shift_f, scale_f;
    int offset = 0;
};

namespace {

template <typename T>
T sigmoid(T a) {
    return T(1) / (T(1) + std::exp(-a));
}

template <typename T>
Mat<T> silu(const Mat<T>& a) {
    return a.unaryExpr([](T v) { return v * sigmoid(v); });
}

template <typename T>
Mat<T> silu_grad(const Mat<T>& a) {
    return a.unaryExpr([](T v) {
        const T s = sigmoid(v);
        return s * (T(1) + v * (T(1) - s));
    });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

/// Row-wise normalization without affine parameters; inv holds 1/sigma per row.
template <typename T>
Mat<T> layer_norm(const Mat<T>& x, Mat<T>& inv) {
    const Eigen::Index d = x.cols();
    Mat<T> out(x.rows(), d);
    inv.resize(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const T mean = x.row(r).mean();
        const T var = (x.row(r).array() - mean).square().mean();
        const T is = T(1) / std::sqrt(var + T(kNormEps));
        inv(r, 0) = is;
        out.row(r) = (x.row(r).array() - mean) * is;
    }
    return out;
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& y, const Mat<T>& inv) {
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const T mean_dy = dy.row(r).mean();
        const T mean_dyy = dy.row(r).cwiseProduct(y.row(r)).mean();
        dx.row(r) = inv(r, 0) * (dy.row(r).array() - mean_dy - y.row(r).array() * mean_dyy);
    }
    return dx;
}

/// n * (1 + scale) + shift, broadcast over rows.
template <typename T>
Mat<T> modulate(const Mat<T>& n, const Mat<T>& shift, const Mat<T>& scale) {
    Mat<T> out = n;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        out.row(r).array() = out.row(r).array() * (T(1) + scale.row(0).array()) + shift.row(0).array();
    }
    return out;
}

template <typename T>
void softmax_rows(Mat<T>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const T mx = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - mx).exp();
        m.row(r) /= m.row(r).sum();
    }
}

template <typename T>
Mat<T> column_sum(const Mat<T>& m) {
    return m.colwise().sum();
}

template <typename T>
void check_finite(const Mat<T>& m, const std::string& where) {
    if (!m.allFinite()) throw NumericError("non-finite activation in " + where);
}

}  // namespace

template <typename T>
Transformer<T>::Transformer(TransformerConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const int per_block = block_tensor_count(cfg_);
    for (int l = 0; l < cfg_.layers; ++l) layer_base_.push_back(kTimeTensors + l * per_block);
    tail_base_ = kTimeTensors + cfg_.layers * per_block;
}

template <typename T>
void Transformer<T>::check_params(const ParamSet<T>& params) const {
    const auto specs = parameter_inventory(cfg_);
    if (params.size() != specs.size()) throw InputError("parameter set does not match configuration");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (params.tensors[i].rows() != specs[i].rows || params.tensors[i].cols() != specs[i].cols) {
            throw InputError("parameter shape mismatch for " + specs[i].name);
        }
    }
}

template <typename T>
Mat<T> Transformer<T>::input_embed(const ParamSet<T>& params, const SequenceState& state) const {
    const int s = state.seq_len();
    const Mat<T> probs = row_softmax(state.logits).template cast<T>();
    Mat<T> h = probs * params.tensors[0];
    h += params.tensors[1].topRows(s);
    return h;
}

template <typename T>
Mat<T> Transformer<T>::run_forward(const ParamSet<T>& params, const SequenceState& state,
                                   Cache* cache) const {
    const int s = state.seq_len();
    const int d = cfg_.embed_dim;
    if (state.vocab_size() != cfg_.vocab_size) {
        throw InputError("state vocabulary " + std::to_string(state.vocab_size()) +
                         " does not match model vocabulary " + std::to_string(cfg_.vocab_size));
    }
    if (s < 1 || s > cfg_.max_seq_len) {
        throw InputError("sequence length " + std::to_string(s) + " outside [1, max_seq_len]");
    }
    if (!(state.t >= 0.0 && state.t <= 1.0)) throw InputError("state time must lie in [0, 1]");
    const auto& tensors = params.tensors;
    const bool modulated = uses_modulation(cfg_);

    Cache local;
    Cache& c = cache != nullptr ? *cache : local;

    c.probs = row_softmax(state.logits).template cast<T>();
    Mat<T> h = c.probs * tensors[0];
    h += tensors[1].topRows(s);

    const auto temb = sinusoidal_time_embedding(state.t, d);
    c.temb.resize(1, d);
    for (int i = 0; i < d; ++i) c.temb(0, i) = static_cast<T>(temb[static_cast<std::size_t>(i)]);
    c.a1 = c.temb * tensors[2] + tensors[3];
    c.g1 = silu(c.a1);
    c.c = c.g1 * tensors[4] + tensors[5];
    c.cond = silu(c.c);

    Mat<T> x;
    c.offset = 0;
    switch (cfg_.time_conditioning) {
        case TimeConditioning::additive:
            x = h;
            x.rowwise() += c.c.row(0);
            break;
        case TimeConditioning::time_token:
            x.resize(s + 1, d);
            x.row(0) = c.c.row(0);
            x.bottomRows(s) = h;
            c.offset = 1;
            break;
        case TimeConditioning::layer_norm_modulation:
            x = h;
            break;
    }

    const int rows = static_cast<int>(x.rows());
    const int heads = cfg_.heads;
    const int hd = cfg_.head_dim();
    const T attn_scale = T(1) / std::sqrt(static_cast<T>(hd));
    c.layers.assign(static_cast<std::size_t>(cfg_.layers), {});
    for (int l = 0; l < cfg_.layers; ++l) {
        auto& lc = c.layers[static_cast<std::size_t>(l)];
        const int b = layer_base_[static_cast<std::size_t>(l)];
        if (modulated) {
            const Mat<T> m = c.cond * tensors[b + 8] + tensors[b + 9];
            lc.shift1 = m.middleCols(0, d);
            lc.scale1 = m.middleCols(d, d);
            lc.shift2 = m.middleCols(2 * d, d);
            lc.scale2 = m.middleCols(3 * d, d);
        } else {
            lc.shift1 = lc.scale1 = lc.shift2 = lc.scale2 = Mat<T>::Zero(1, d);
        }

        lc.x_in = x;
        lc.n1 = layer_norm(x, lc.inv1);
        lc.a_in = modulate(lc.n1, lc.shift1, lc.scale1);
        lc.q.noalias() = lc.a_in * tensors[b + 0];
        lc.k.noalias() = lc.a_in * tensors[b + 1];
        lc.v.noalias() = lc.a_in * tensors[b + 2];
        lc.o.resize(rows, d);
        lc.attn.resize(static_cast<std::size_t>(heads));
        for (int hh = 0; hh < heads; ++hh) {
            Mat<T> scores = (lc.q.middleCols(hh * hd, hd) * lc.k.middleCols(hh * hd, hd).transpose()) * attn_scale;
            softmax_rows(scores);
            lc.o.middleCols(hh * hd, hd) = scores * lc.v.middleCols(hh * hd, hd);
            lc.attn[static_cast<std::size_t>(hh)] = std::move(scores);
        }
        x.noalias() += lc.o * tensors[b + 3];
        lc.x_mid = x;

        lc.n2 = layer_norm(x, lc.inv2);
        lc.m_in = modulate(lc.n2, lc.shift2, lc.scale2);
        lc.z.noalias() = lc.m_in * tensors[b + 4];
        lc.z.rowwise() += tensors[b + 5].row(0);
        lc.th = (T(kGeluC) * (lc.z.array() + T(kGeluA) * lc.z.array().cube())).tanh().matrix();
        lc.g = (T(0.5) * lc.z.array() * (T(1) + lc.th.array())).matrix();
        x.noalias() += lc.g * tensors[b + 6];
        x.rowwise() += tensors[b + 7].row(0);
        check_finite(x, "layer " + std::to_string(l));
    }

    int tail = tail_base_;
    if (modulated) {
        const Mat<T> m = c.cond * tensors[tail] + tensors[tail + 1];
        c.shift_f = m.middleCols(0, d);
        c.scale_f = m.middleCols(d, d);
        tail += 2;
    } else {
        c.shift_f = c.scale_f = Mat<T>::Zero(1, d);
    }
    c.xf = x;
    c.nf = layer_norm(x, c.invf);
    c.f = modulate(c.nf, c.shift_f, c.scale_f);
    Mat<T> logits = c.f.bottomRows(s) * tensors[tail];
    logits.rowwise() += tensors[tail + 1].row(0);
    check_finite(logits, "output head (layer " + std::to_string(cfg_.layers) + ")");
    return logits;
}

template <typename T>
Mat<T> Transformer<T>::forward(const ParamSet<T>& params, const SequenceState& state) const {
    check_params(params);
    return run_forward(params, state, nullptr);
}

template <typename T>
T Transformer<T>::loss_and_gradient(const ParamSet<T>& params, const SequenceState& state,
                                    std::span<const int> targets, std::span<const std::uint8_t> mask,
                                    ParamSet<T>& grad, T weight) const {
    check_params(params);
    check_params(grad);
    const int s = state.seq_len();
    if (static_cast<int>(targets.size()) != s) throw InputError("target length does not match sequence");
    if (!mask.empty() && static_cast<int>(mask.size()) != s) throw InputError("mask length does not match sequence");

    Cache c;
    const Mat<T> logits = run_forward(params, state, &c);
    const auto& tensors = params.tensors;
    auto& g = grad.tensors;
    const int d = cfg_.embed_dim;
    const bool modulated = uses_modulation(cfg_);

    int counted = 0;
    for (int k = 0; k < s; ++k) {
        if (mask.empty() || mask[static_cast<std::size_t>(k)] != 0) ++counted;
    }
    Mat<T> dlogits = Mat<T>::Zero(s, cfg_.vocab_size);
    T loss = T(0);
    if (counted == 0) return loss;
    for (int k = 0; k < s; ++k) {
        if (!mask.empty() && mask[static_cast<std::size_t>(k)] == 0) continue;
        const int target = targets[static_cast<std::size_t>(k)];
        if (target < 0 || target >= cfg_.vocab_size) throw InputError("target token out of range");
        const T mx = logits.row(k).maxCoeff();
        const T lse = mx + std::log((logits.row(k).array() - mx).exp().sum());
        loss += lse - logits(k, target);
        dlogits.row(k) = (logits.row(k).array() - lse).exp();
        dlogits(k, target) -= T(1);
    }
    loss /= static_cast<T>(counted);
    dlogits *= weight / static_cast<T>(counted);

    // Output head.
    int tail = tail_base_ + (modulated ? 2 : 0);
    const int rows = static_cast<int>(c.xf.rows());
    g[tail].noalias() += c.f.bottomRows(s).transpose() * dlogits;
    g[tail + 1] += column_sum(dlogits);
    Mat<T> df = Mat<T>::Zero(rows, d);
    df.bottomRows(s) = dlogits * tensors[tail].transpose();

    Mat<T> dcond = Mat<T>::Zero(1, d);
    Mat<T> dnf = df;
    for (Eigen::Index r = 0; r < dnf.rows(); ++r) dnf.row(r).array() *= (T(1) + c.scale_f.row(0).array());
    if (modulated) {
        Mat<T> dm(1, 2 * d);
        dm.middleCols(0, d) = column_sum(df);
        dm.middleCols(d, d) = column_sum(Mat<T>(df.cwiseProduct(c.nf)));
        g[tail_base_].noalias() += c.cond.transpose() * dm;
        g[tail_base_ + 1] += dm;
        dcond += dm * tensors[tail_base_].transpose();
    }
    Mat<T> dx = layer_norm_backward(dnf, c.nf, c.invf);

    const int heads = cfg_.heads;
    const int hd = cfg_.head_dim();
    const T attn_scale = T(1) / std::sqrt(static_cast<T>(hd));
    for (int l = cfg_.layers - 1; l >= 0; --l) {
        const auto& lc = c.layers[static_cast<std::size_t>(l)];
        const int b = layer_base_[static_cast<std::size_t>(l)];

        // MLP branch.
        g[b + 6].noalias() += lc.g.transpose() * dx;
        g[b + 7] += column_sum(dx);
        Mat<T> dz = dx * tensors[b + 6].transpose();
        dz.array() *= T(0.5) * (T(1) + lc.th.array()) +
                      T(0.5) * lc.z.array() * (T(1) - lc.th.array().square()) * T(kGeluC) *
                          (T(1) + T(3 * kGeluA) * lc.z.array().square());
        g[b + 4].noalias() += lc.m_in.transpose() * dz;
        g[b + 5] += column_sum(dz);
        const Mat<T> dm_in = dz * tensors[b + 4].transpose();
        Mat<T> dn2 = dm_in;
        for (Eigen::Index r = 0; r < dn2.rows(); ++r) dn2.row(r).array() *= (T(1) + lc.scale2.row(0).array());
        const Mat<T> dshift2 = column_sum(dm_in);
        const Mat<T> dscale2 = column_sum(Mat<T>(dm_in.cwiseProduct(lc.n2)));
        dx += layer_norm_backward(dn2, lc.n2, lc.inv2);

        // Attention branch.
        g[b + 3].noalias() += lc.o.transpose() * dx;
        const Mat<T> d_o = dx * tensors[b + 3].transpose();
        Mat<T> dq(rows, d), dk(rows, d), dv(rows, d);
        for (int hh = 0; hh < heads; ++hh) {
            const Mat<T>& p = lc.attn[static_cast<std::size_t>(hh)];
            const auto d_oh = d_o.middleCols(hh * hd, hd);
            dv.middleCols(hh * hd, hd) = p.transpose() * d_oh;
            Mat<T> dp = d_oh * lc.v.middleCols(hh * hd, hd).transpose();
            for (Eigen::Index r = 0; r < dp.rows(); ++r) {
                const T dot = dp.row(r).dot(p.row(r));
                dp.row(r) = p.row(r).cwiseProduct((dp.row(r).array() - dot).matrix());
            }
            dp *= attn_scale;
            dq.middleCols(hh * hd, hd) = dp * lc.k.middleCols(hh * hd, hd);
            dk.middleCols(hh * hd, hd) = dp.transpose() * lc.q.middleCols(hh * hd, hd);
        }
        g[b + 0].noalias() += lc.a_in.transpose() * dq;
        g[b + 1].noalias() += lc.a_in.transpose() * dk;
        g[b + 2].noalias() += lc.a_in.transpose() * dv;
        const Mat<T> da_in =
            dq * tensors[b + 0].transpose() + dk * tensors[b + 1].transpose() + dv * tensors[b + 2].transpose();
        Mat<T> dn1 = da_in;
        for (Eigen::Index r = 0; r < dn1.rows(); ++r) dn1.row(r).array() *= (T(1) + lc.scale1.row(0).array());
        const Mat<T> dshift1 = column_sum(da_in);
        const Mat<T> dscale1 = column_sum(Mat<T>(da_in.cwiseProduct(lc.n1)));
        dx += layer_norm_backward(dn1, lc.n1, lc.inv1);

        if (modulated) {
            Mat<T> dm(1, 4 * d);
            dm << dshift1, dscale1, dshift2, dscale2;
            g[b + 8].noalias() += c.cond.transpose() * dm;
            g[b + 9] += dm;
            dcond += dm * tensors[b + 8].transpose();
        }
    }

    // Embedding and time conditioning.
    Mat<T> dc = dcond.cwiseProduct(silu_grad(c.c));
    Mat<T> dh;
    switch (cfg_.time_conditioning) {
        case TimeConditioning::additive:
            dh = dx;
            dc += column_sum(dx);
            break;
        case TimeConditioning::time_token:
            dc += dx.row(0);
            dh = dx.bottomRows(s);
            break;
        case TimeConditioning::layer_norm_modulation:
            dh = dx;
            break;
    }
    g[0].noalias() += c.probs.transpose() * dh;
    g[1].topRows(s) += dh;
    g[4].noalias() += c.g1.transpose() * dc;
    g[5] += dc;
    const Mat<T> da1 = (dc * tensors[4].transpose()).cwiseProduct(silu_grad(c.a1));
    g[2].noalias() += c.temb.transpose() * da1;
    g[3] += da1;
    return loss;
}

double denoising_loss(const LogitMatrix& logits, std::span<const int> targets,
                      std::span<const std::uint8_t> mask) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
        throw InputError("target length does not match output rows");
    }
    double total = 0.0;
    int counted = 0;
    for (Eigen::Index k = 0; k < logits.rows(); ++k) {
        if (!mask.empty() && mask[static_cast<std::size_t>(k)] == 0) continue;
        const int target = targets[static_cast<std::size_t>(k)];
        if (target < 0 || target >= logits.cols()) throw InputError("target token out of range");
        const double lse = log_sum_exp(std::span<const double>(logits.row(k).data(), static_cast<std::size_t>(logits.cols())));
        total += lse - logits(k, target);
        ++counted;
    }
    return counted == 0 ? 0.0 : total / counted;
}

LogitMatrix denoising_loss_grad(const LogitMatrix& logits, std::span<const int> targets,
                                std::span<const std::uint8_t> mask) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
        throw InputError("target length does not match output rows");
    }
    LogitMatrix grad = LogitMatrix::Zero(logits.rows(), logits.cols());
    int counted = 0;
    for (Eigen::Index k = 0; k < logits.rows(); ++k) {
        if (mask.empty() || mask[static_cast<std::size_t>(k)] != 0) ++counted;
    }
    if (counted == 0) return grad;
    const LogitMatrix probs = row_softmax(logits);
    for (Eigen::Index k = 0; k < logits.rows(); ++k) {
        if (!mask.empty() && mask[static_cast<std::size_t>(k)] == 0) continue;
        grad.row(k) = probs.row(k);
        grad(k, targets[static_cast<std::size_t>(k)]) -= 1.0;
    }
    return grad / counted;
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template class Transformer<float>;
template class Transformer<double>;
template ParamSet<float> init_params<float>(const TransformerConfig&, std::uint64_t, InitMode);
template ParamSet<double> init_params<double>(const TransformerConfig&, std::uint64_t, InitMode);

}  // namespace klflow
