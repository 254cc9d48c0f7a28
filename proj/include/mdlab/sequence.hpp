#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mdlab/vocab.hpp"

namespace mdlab {

// Clean prompt/response pair. tokens[0..prompt_len) is the prompt, the rest is
// the response. Clean means no MASK tokens.
struct TokenSequence {
    std::vector<TokenId> tokens;
    size_t prompt_len = 0;

    size_t size() const { return tokens.size(); }
    size_t response_len() const { return tokens.size() - prompt_len; }

    void validate(const Vocabulary& vocab) const {
        if (prompt_len > tokens.size())
            throw std::invalid_argument("token sequence: prompt_len exceeds length");
        for (TokenId t : tokens) {
            if (t >= vocab.size()) throw std::invalid_argument("token sequence: token id out of vocab");
            if (t == vocab.mask_id()) throw std::invalid_argument("token sequence: clean data contains mask");
        }
    }
};

// Which region of a sequence is eligible for masking.
struct MaskingPolicy {
    enum class Mode { ResponseOnly, FullSequence, Spans };

    Mode mode = Mode::FullSequence;
    std::vector<std::pair<size_t, size_t>> spans;  // [start, end) ranges, Spans mode only

    static MaskingPolicy response_only() { return {Mode::ResponseOnly, {}}; }
    static MaskingPolicy full_sequence() { return {Mode::FullSequence, {}}; }
    static MaskingPolicy from_spans(std::vector<std::pair<size_t, size_t>> s) {
        return {Mode::Spans, std::move(s)};
    }

    // Ascending list of maskable indices for a sequence of the given shape.
    // Throws if spans overlap or fall outside the sequence.
    std::vector<size_t> region(size_t length, size_t prompt_len) const;
};

// A corrupted view of a clean sequence: MASK exactly at masked_positions, the
// clean token everywhere else. origin is absent for inference-time templates
// whose clean content is unknown.
struct NoisySequence {
    std::vector<TokenId> tokens;
    std::vector<size_t> masked_positions;  // ascending
    double t = 0.0;
    size_t prompt_len = 0;
    std::optional<TokenSequence> origin;

    size_t size() const { return tokens.size(); }
    size_t masked_count() const { return masked_positions.size(); }

    void validate(const Vocabulary& vocab) const;
};

}  // namespace mdlab
