// Copyright (C) 2026 The klflow Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "klflow/rng.hpp"

namespace klflow {

enum class VocabMode { byte, character };

std::string to_string(VocabMode mode);
VocabMode parse_vocab_mode(std::string_view name);

/// Token <-> symbol map. Byte mode is fixed at 256 ids with byte 0x00 as the
/// pad token; character mode holds the sorted unique code points of a corpus
/// and reserves one extra id after them for padding.
class Vocab {
public:
    static Vocab bytes();
    /// Throws InputError on empty text in character mode or invalid UTF-8.
    static Vocab build(std::string_view text, VocabMode mode);

    VocabMode mode() const noexcept { return mode_; }
    /// Number of real symbols.
    int size() const noexcept;
    /// Output dimension a model needs: symbols plus the reserved pad id.
    int model_vocab_size() const noexcept;
    int pad_id() const noexcept;

    std::vector<int> encode(std::string_view text) const;
    /// Exact inverse of encode.
    std::string decode(std::span<const int> tokens) const;
    /// decode with pad tokens dropped.
    std::string decode_text(std::span<const int> tokens) const;

    nlohmann::json to_json() const;
    static Vocab from_json(const nlohmann::json& j);

private:
    VocabMode mode_ = VocabMode::byte;
    std::vector<char32_t> symbols_;
    std::map<char32_t, int> index_;
};

/// Fixed-length token windows with a loss mask (1 = real token, 0 = pad).
class CorpusStore {
public:
    CorpusStore() = default;
    explicit CorpusStore(int seq_len) : seq_len_(seq_len) {}

    /// Chunks each document into non-overlapping windows of seq_len, padding
    /// the last window of a document with pad_id.
    static CorpusStore from_documents(const std::vector<std::vector<int>>& docs, int seq_len, int pad_id);

    void add_sequence(std::span<const int> tokens, std::span<const std::uint8_t> mask = {});

    int seq_len() const noexcept { return seq_len_; }
    std::size_t num_sequences() const noexcept { return starts_.size(); }
    bool empty() const noexcept { return starts_.empty(); }
    std::span<const int> sequence(std::size_t i) const;
    std::span<const std::uint8_t> mask(std::size_t i) const;
    const std::vector<int>& tokens() const noexcept { return tokens_; }
    std::size_t real_token_count() const;

private:
    int seq_len_ = 0;
    std::vector<int> tokens_;
    std::vector<std::uint8_t> mask_;
    std::vector<std::size_t> starts_;
};

/// Splits on `separator` (when given) so no window crosses a document boundary.
CorpusStore corpus_from_text(std::string_view text, const Vocab& vocab, int seq_len,
                             std::optional<int> separator = std::nullopt);

/// Order-n Markov chain over V tokens used as a toy language.
struct MarkovToyLanguage {
    int order = 2;
    int vocab_size = 16;
    /// V^order context rows of V successor probabilities, row-major; the
    /// context index is sum_i ctx[i] * V^(order-1-i).
    std::vector<double> transitions;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t num_contexts() const;
    std::span<const double> row(std::size_t context) const;

    /// Each context gets `support` random successors with Dirichlet(1) weights,
    /// mixed with `floor_mass` spread uniformly over all tokens.
    static MarkovToyLanguage random(int vocab_size, int order, std::uint64_t seed, int support = 3,
                                    double floor_mass = 0.03);

    /// Stationary distribution over contexts (length-`order` windows).
    std::vector<double> stationary_contexts() const;
    /// Stationary joint distribution of n consecutive tokens, n <= order + 1.
    std::vector<double> stationary_ngram(int n) const;

    nlohmann::json to_json() const;
    static MarkovToyLanguage from_json(const nlohmann::json& j);
};

/// Sequences started from the stationary context distribution.
CorpusStore sample_toy_corpus(const MarkovToyLanguage& lang, std::size_t num_sequences, int seq_len);
CorpusStore sample_toy_corpus(const MarkovToyLanguage& lang, std::size_t num_sequences, int seq_len, Rng& rng);

/// UTF-8 helpers; decode throws InputError on malformed input.
std::vector<char32_t> utf8_decode(std::string_view text);
std::string utf8_encode(std::span<const char32_t> code_points);

}  // namespace klflow
