#include "mdlab/sequence.hpp"

#include <algorithm>

namespace mdlab {

std::vector<size_t> MaskingPolicy::region(size_t length, size_t prompt_len) const {
    std::vector<size_t> out;
    switch (mode) {
        case Mode::FullSequence:
            out.resize(length);
            for (size_t i = 0; i < length; ++i) out[i] = i;
            break;
        case Mode::ResponseOnly:
            if (prompt_len > length)
                throw std::invalid_argument("masking policy: prompt_len exceeds length");
            out.reserve(length - prompt_len);
            for (size_t i = prompt_len; i < length; ++i) out.push_back(i);
            break;
        case Mode::Spans: {
            auto sorted = spans;
            std::sort(sorted.begin(), sorted.end());
            size_t prev_end = 0;
            bool first = true;
            for (const auto& [start, end] : sorted) {
                if (start > end || end > length)
                    throw std::invalid_argument("masking policy: span out of bounds");
                if (!first && start < prev_end)
                    throw std::invalid_argument("masking policy: spans overlap");
                for (size_t i = start; i < end; ++i) out.push_back(i);
                prev_end = end;
                first = false;
            }
            break;
        }
    }
    return out;
}

void NoisySequence::validate(const Vocabulary& vocab) const {
    if (!std::is_sorted(masked_positions.begin(), masked_positions.end()))
        throw std::invalid_argument("noisy sequence: masked_positions not ascending");
    if (t == 0.0 && !masked_positions.empty())
        throw std::invalid_argument("noisy sequence: t=0 with nonempty mask set");
    std::vector<bool> is_masked(tokens.size(), false);
    for (size_t p : masked_positions) {
        if (p >= tokens.size()) throw std::invalid_argument("noisy sequence: mask position out of range");
        if (is_masked[p]) throw std::invalid_argument("noisy sequence: duplicate mask position");
        is_masked[p] = true;
    }
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (is_masked[i] != (tokens[i] == vocab.mask_id()))
            throw std::invalid_argument("noisy sequence: tokens[i] == MASK iff i in masked_positions violated");
        if (origin && !is_masked[i] && tokens[i] != origin->tokens[i])
            throw std::invalid_argument("noisy sequence: unmasked token differs from origin");
    }
    if (origin && origin->tokens.size() != tokens.size())
        throw std::invalid_argument("noisy sequence: origin length mismatch");
}

}  // namespace mdlab
