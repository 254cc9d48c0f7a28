#pragma once

#include "mdlab/rng.hpp"
#include "mdlab/sequence.hpp"

namespace mdlab {

// Forward process, fixed-count form: replaces exactly floor(t * |region|)
// positions of the policy region with MASK, chosen uniformly without
// replacement.
NoisySequence mask_fixed_count(const TokenSequence& seq, double t, const MaskingPolicy& policy,
                               const Vocabulary& vocab, Rng& rng);

// Forward process, per-token form: each position of the policy region is
// masked independently with probability p. The recorded timestep defaults to
// p; pass t_record when the caller is working at a known t (the perplexity
// estimator masks with p = 1 - alpha_t).
NoisySequence mask_bernoulli(const TokenSequence& seq, double p, const MaskingPolicy& policy,
                             const Vocabulary& vocab, Rng& rng, double t_record = -1.0);

}  // namespace mdlab
