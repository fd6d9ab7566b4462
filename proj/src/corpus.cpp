// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "klflow/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "klflow/errors.hpp"
#include "klflow/simplex.hpp"

namespace klflow {

std::string to_string(VocabMode mode) { return mode == VocabMode::byte ? "byte" : "char"; }

VocabMode parse_vocab_mode(std::string_view name) {
    if (name == "byte") return VocabMode::byte;
    if (name == "char" || name == "character") return VocabMode::character;
    throw ConfigError("vocab_mode", "expected 'byte' or 'char', got '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// UTF-8

std::vector<char32_t> utf8_decode(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        int extra = 0;
        char32_t cp = 0;
        if (lead < 0x80) {
            cp = lead;
        } else if ((lead & 0xE0) == 0xC0) {
            cp = lead & 0x1F;
            extra = 1;
        } else if ((lead & 0xF0) == 0xE0) {
            cp = lead & 0x0F;
            extra = 2;
        } else if ((lead & 0xF8) == 0xF0) {
            cp = lead & 0x07;
            extra = 3;
        } else {
            throw InputError("invalid UTF-8 lead byte at offset " + std::to_string(i));
        }
        if (i + static_cast<std::size_t>(extra) >= text.size()) {
            throw InputError("truncated UTF-8 sequence at offset " + std::to_string(i));
        }
        for (int k = 1; k <= extra; ++k) {
            const auto cont = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
            if ((cont & 0xC0) != 0x80) throw InputError("invalid UTF-8 continuation at offset " + std::to_string(i));
            cp = (cp << 6) | (cont & 0x3F);
        }
        out.push_back(cp);
        i += static_cast<std::size_t>(extra) + 1;
    }
    return out;
}

std::string utf8_encode(std::span<const char32_t> code_points) {
    std::string out;
    for (char32_t cp : code_points) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab Vocab::bytes() { return Vocab{}; }

Vocab Vocab::build(std::string_view text, VocabMode mode) {
    Vocab v;
    v.mode_ = mode;
    if (mode == VocabMode::byte) return v;
    if (text.empty()) throw InputError("character vocabulary needs a non-empty corpus");
    const auto cps = utf8_decode(text);
    const std::set<char32_t> unique(cps.begin(), cps.end());
    v.symbols_.assign(unique.begin(), unique.end());
    for (std::size_t i = 0; i < v.symbols_.size(); ++i) v.index_[v.symbols_[i]] = static_cast<int>(i);
    return v;
}

int Vocab::size() const noexcept { return mode_ == VocabMode::byte ? 256 : static_cast<int>(symbols_.size()); }

int Vocab::model_vocab_size() const noexcept { return mode_ == VocabMode::byte ? 256 : size() + 1; }

int Vocab::pad_id() const noexcept { return mode_ == VocabMode::byte ? 0 : size(); }

std::vector<int> Vocab::encode(std::string_view text) const {
    std::vector<int> out;
    if (mode_ == VocabMode::byte) {
        out.reserve(text.size());
        for (char c : text) out.push_back(static_cast<unsigned char>(c));
        return out;
    }
    for (char32_t cp : utf8_decode(text)) {
        const auto it = index_.find(cp);
        if (it == index_.end()) throw InputError("character U+" + std::to_string(static_cast<std::uint32_t>(cp)) + " not in vocabulary");
        out.push_back(it->second);
    }
    return out;
}

std::string Vocab::decode(std::span<const int> tokens) const {
    if (mode_ == VocabMode::byte) {
        std::string out;
        out.reserve(tokens.size());
        for (int t : tokens) {
            if (t < 0 || t > 255) throw InputError("byte token out of range: " + std::to_string(t));
            out.push_back(static_cast<char>(t));
        }
        return out;
    }
    std::vector<char32_t> cps;
    cps.reserve(tokens.size());
    for (int t : tokens) {
        if (t < 0 || t >= size()) throw InputError("token out of range: " + std::to_string(t));
        cps.push_back(symbols_[static_cast<std::size_t>(t)]);
    }
    return utf8_encode(cps);
}

std::string Vocab::decode_text(std::span<const int> tokens) const {
    std::vector<int> kept;
    kept.reserve(tokens.size());
    for (int t : tokens) {
        if (t != pad_id()) kept.push_back(t);
    }
    return decode(kept);
}

nlohmann::json Vocab::to_json() const {
    nlohmann::json j;
    j["mode"] = to_string(mode_);
    if (mode_ == VocabMode::character) {
        nlohmann::json map = nlohmann::json::object();
        for (std::size_t i = 0; i < symbols_.size(); ++i) {
            const char32_t cp = symbols_[i];
            map[utf8_encode(std::span<const char32_t>(&cp, 1))] = static_cast<int>(i);
        }
        j["token_to_id"] = map;
        j["pad_id"] = pad_id();
    }
    return j;
}

Vocab Vocab::from_json(const nlohmann::json& j) {
    Vocab v;
    v.mode_ = parse_vocab_mode(j.at("mode").get<std::string>());
    if (v.mode_ == VocabMode::byte) return v;
    const auto& map = j.at("token_to_id");
    v.symbols_.assign(map.size(), 0);
    std::vector<bool> seen(map.size(), false);
    for (auto it = map.begin(); it != map.end(); ++it) {
        const auto cps = utf8_decode(it.key());
        const int id = it.value().get<int>();
        if (cps.size() != 1 || id < 0 || id >= static_cast<int>(map.size()) || seen[static_cast<std::size_t>(id)]) {
            throw FormatError("vocabulary map is not a bijection onto dense ids");
        }
        seen[static_cast<std::size_t>(id)] = true;
        v.symbols_[static_cast<std::size_t>(id)] = cps[0];
        v.index_[cps[0]] = id;
    }
    return v;
}

// ---------------------------------------------------------------------------
// CorpusStore

CorpusStore CorpusStore::from_documents(const std::vector<std::vector<int>>& docs, int seq_len, int pad_id) {
    if (seq_len < 1) throw InputError("sequence length must be positive");
    CorpusStore store(seq_len);
    const auto s = static_cast<std::size_t>(seq_len);
    std::vector<int> window(s);
    std::vector<std::uint8_t> mask(s);
    for (const auto& doc : docs) {
        for (std::size_t start = 0; start < doc.size(); start += s) {
            const std::size_t n = std::min(s, doc.size() - start);
            std::fill(window.begin(), window.end(), pad_id);
            std::fill(mask.begin(), mask.end(), 0);
            std::copy_n(doc.begin() + static_cast<std::ptrdiff_t>(start), n, window.begin());
            std::fill_n(mask.begin(), n, 1);
            store.add_sequence(window, mask);
        }
    }
    return store;
}

void CorpusStore::add_sequence(std::span<const int> tokens, std::span<const std::uint8_t> mask) {
    if (static_cast<int>(tokens.size()) != seq_len_) throw InputError("sequence length mismatch");
    if (!mask.empty() && mask.size() != tokens.size()) throw InputError("mask length mismatch");
    starts_.push_back(tokens_.size());
    tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
    if (mask.empty()) {
        mask_.insert(mask_.end(), tokens.size(), 1);
    } else {
        mask_.insert(mask_.end(), mask.begin(), mask.end());
    }
}

std::span<const int> CorpusStore::sequence(std::size_t i) const {
    return std::span<const int>(tokens_).subspan(starts_.at(i), static_cast<std::size_t>(seq_len_));
}

std::span<const std::uint8_t> CorpusStore::mask(std::size_t i) const {
    return std::span<const std::uint8_t>(mask_).subspan(starts_.at(i), static_cast<std::size_t>(seq_len_));
}

std::size_t CorpusStore::real_token_count() const {
    return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

CorpusStore corpus_from_text(std::string_view text, const Vocab& vocab, int seq_len, std::optional<int> separator) {
    const auto tokens = vocab.encode(text);
    std::vector<std::vector<int>> docs(1);
    for (int t : tokens) {
        if (separator && t == *separator) {
            if (!docs.back().empty()) docs.emplace_back();
            continue;
        }
        docs.back().push_back(t);
    }
    if (docs.back().empty()) docs.pop_back();
    return CorpusStore::from_documents(docs, seq_len, vocab.pad_id());
}

// ---------------------------------------------------------------------------
// Markov toy language

namespace {

std::size_t ipow(int base, int exp) {
    std::size_t r = 1;
    for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
    return r;
}

}  // namespace

void MarkovToyLanguage::validate() const {
    if (order < 1) throw ConfigError("order", "must be >= 1");
    if (vocab_size < 2) throw ConfigError("V", "must be >= 2");
    if (transitions.size() != num_contexts() * static_cast<std::size_t>(vocab_size)) {
        throw ConfigError("transitions", "expected V^order rows of V entries");
    }
    for (std::size_t c = 0; c < num_contexts(); ++c) {
        double total = 0.0;
        for (double p : row(c)) {
            if (!(p >= 0.0)) throw ConfigError("transitions", "negative probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw ConfigError("transitions", "row " + std::to_string(c) + " does not sum to 1");
        }
    }
}

std::size_t MarkovToyLanguage::num_contexts() const { return ipow(vocab_size, order); }

std::span<const double> MarkovToyLanguage::row(std::size_t context) const {
    return std::span<const double>(transitions).subspan(context * static_cast<std::size_t>(vocab_size),
                                                       static_cast<std::size_t>(vocab_size));
}

MarkovToyLanguage MarkovToyLanguage::random(int vocab_size, int order, std::uint64_t seed, int support,
                                            double floor_mass) {
    MarkovToyLanguage lang;
    lang.order = order;
    lang.vocab_size = vocab_size;
    lang.seed = seed;
    support = std::clamp(support, 1, vocab_size);
    Rng rng(seed);
    const auto v = static_cast<std::size_t>(vocab_size);
    lang.transitions.assign(lang.num_contexts() * v, floor_mass / vocab_size);
    std::vector<int> ids(v);
    for (std::size_t c = 0; c < lang.num_contexts(); ++c) {
        std::iota(ids.begin(), ids.end(), 0);
        for (int k = 0; k < support; ++k) {
            const auto pick = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_size - k)));
            std::swap(ids[static_cast<std::size_t>(k)], ids[static_cast<std::size_t>(pick)]);
        }
        std::vector<double> w(static_cast<std::size_t>(support));
        double total = 0.0;
        for (double& x : w) {
            x = rng.exponential();
            total += x;
        }
        for (int k = 0; k < support; ++k) {
            lang.transitions[c * v + static_cast<std::size_t>(ids[static_cast<std::size_t>(k)])] +=
                (1.0 - floor_mass) * w[static_cast<std::size_t>(k)] / total;
        }
    }
    return lang;
}

std::vector<double> MarkovToyLanguage::stationary_contexts() const {
    validate();
    const std::size_t n = num_contexts();
    const auto v = static_cast<std::size_t>(vocab_size);
    const std::size_t shift_mod = n / v;  // drops the oldest token of a context
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n);
    // Lazy chain (I + P) / 2 has the same stationary law and is aperiodic.
    for (int iter = 0; iter < 200000; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t c = 0; c < n; ++c) {
            if (pi[c] == 0.0) continue;
            const auto r = row(c);
            const std::size_t base = (c % shift_mod) * v;
            for (std::size_t j = 0; j < v; ++j) next[base + j] += 0.5 * pi[c] * r[j];
            next[c] += 0.5 * pi[c];
        }
        double diff = 0.0;
        for (std::size_t c = 0; c < n; ++c) diff += std::abs(next[c] - pi[c]);
        pi.swap(next);
        if (diff < 1e-15) break;
    }
    return pi;
}

std::vector<double> MarkovToyLanguage::stationary_ngram(int n) const {
    if (n < 1 || n > order + 1) throw InputError("n-gram order must lie in [1, order + 1]");
    const auto pi = stationary_contexts();
    const auto v = static_cast<std::size_t>(vocab_size);
    std::vector<double> joint;
    if (n == order + 1) {
        joint.assign(pi.size() * v, 0.0);
        for (std::size_t c = 0; c < pi.size(); ++c) {
            const auto r = row(c);
            for (std::size_t j = 0; j < v; ++j) joint[c * v + j] = pi[c] * r[j];
        }
        return joint;
    }
    // Marginalize the leading tokens of the stationary context.
    const std::size_t keep = ipow(vocab_size, n);
    joint.assign(keep, 0.0);
    for (std::size_t c = 0; c < pi.size(); ++c) joint[c % keep] += pi[c];
    return joint;
}

nlohmann::json MarkovToyLanguage::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t c = 0; c < num_contexts(); ++c) {
        const auto r = row(c);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"order", order}, {"V", vocab_size}, {"transitions", rows}, {"seed", seed}};
}

MarkovToyLanguage MarkovToyLanguage::from_json(const nlohmann::json& j) {
    MarkovToyLanguage lang;
    try {
        lang.order = j.at("order").get<int>();
        lang.vocab_size = j.at("V").get<int>();
        lang.seed = j.value("seed", std::uint64_t{0});
        for (const auto& r : j.at("transitions")) {
            const auto values = r.get<std::vector<double>>();
            lang.transitions.insert(lang.transitions.end(), values.begin(), values.end());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("toy_language", e.what());
    }
    lang.validate();
    return lang;
}

CorpusStore sample_toy_corpus(const MarkovToyLanguage& lang, std::size_t num_sequences, int seq_len) {
    Rng rng(lang.seed);
    return sample_toy_corpus(lang, num_sequences, seq_len, rng);
}

CorpusStore sample_toy_corpus(const MarkovToyLanguage& lang, std::size_t num_sequences, int seq_len, Rng& rng) {
    const auto pi = lang.stationary_contexts();
    const auto v = static_cast<std::size_t>(lang.vocab_size);
    const std::size_t shift_mod = lang.num_contexts() / v;
    CorpusStore store(seq_len);
    std::vector<int> seq(static_cast<std::size_t>(seq_len));
    for (std::size_t n = 0; n < num_sequences; ++n) {
        std::size_t ctx = static_cast<std::size_t>(sample_categorical(pi, rng));
        std::vector<int> head(static_cast<std::size_t>(lang.order));
        std::size_t rest = ctx;
        for (int i = lang.order - 1; i >= 0; --i) {
            head[static_cast<std::size_t>(i)] = static_cast<int>(rest % v);
            rest /= v;
        }
        for (int k = 0; k < seq_len; ++k) {
            if (k < lang.order) {
                seq[static_cast<std::size_t>(k)] = head[static_cast<std::size_t>(k)];
                continue;
            }
            const int next = sample_categorical(lang.row(ctx), rng);
            seq[static_cast<std::size_t>(k)] = next;
            ctx = (ctx % shift_mod) * v + static_cast<std::size_t>(next);
        }
        store.add_sequence(seq);
    }
    return store;
}

}  // namespace klflow
