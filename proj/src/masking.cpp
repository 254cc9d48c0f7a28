#include "mdlab/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdlab {

namespace {

NoisySequence apply_masks(const TokenSequence& seq, std::vector<size_t> positions, double t,
                          const Vocabulary& vocab) {
    std::sort(positions.begin(), positions.end());
    NoisySequence out;
    out.tokens = seq.tokens;
    out.prompt_len = seq.prompt_len;
    out.masked_positions = std::move(positions);
    out.t = t;
    out.origin = seq;
    for (size_t p : out.masked_positions) out.tokens[p] = vocab.mask_id();
    return out;
}

}  // namespace

NoisySequence mask_fixed_count(const TokenSequence& seq, double t, const MaskingPolicy& policy,
                               const Vocabulary& vocab, Rng& rng) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("mask_fixed_count: t outside [0, 1]");
    std::vector<size_t> region = policy.region(seq.size(), seq.prompt_len);
    size_t count = static_cast<size_t>(std::floor(t * static_cast<double>(region.size())));
    // partial Fisher-Yates: the first `count` entries become a uniform
    // without-replacement draw
    for (size_t i = 0; i < count; ++i) {
        size_t j = i + static_cast<size_t>(rng.uniform_int(region.size() - i));
        std::swap(region[i], region[j]);
    }
    region.resize(count);
    return apply_masks(seq, std::move(region), t, vocab);
}

NoisySequence mask_bernoulli(const TokenSequence& seq, double p, const MaskingPolicy& policy,
                             const Vocabulary& vocab, Rng& rng, double t_record) {
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("mask_bernoulli: p outside [0, 1]");
    std::vector<size_t> positions;
    for (size_t idx : policy.region(seq.size(), seq.prompt_len)) {
        if (rng.bernoulli(p)) positions.push_back(idx);
    }
    double t = t_record >= 0.0 ? t_record : p;
    return apply_masks(seq, std::move(positions), t, vocab);
}

}  // namespace mdlab
