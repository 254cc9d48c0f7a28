#pragma once

#include <cstdint>
#include <vector>

#include "mdlab/denoiser.hpp"
#include "mdlab/sequence.hpp"

namespace mdlab {

enum class UnmaskStrategy { Confidence, Random };

struct SamplerConfig {
    uint32_t steps = 128;
    uint32_t gen_length = 128;
    double temperature = 0.8;
    UnmaskStrategy strategy = UnmaskStrategy::Confidence;
    uint64_t seed = 0;

    void validate() const;
};

struct TraceStep {
    uint32_t step = 0;
    std::vector<size_t> positions;  // committed this step, in commit order
    std::vector<TokenId> tokens;
};

struct GenerationResult {
    TokenSequence sequence;
    std::vector<TraceStep> trace;
};

// Per-step commit counts: sums to num_masked, earlier steps take the ceiling
// of the even split, length min(steps, num_masked); empty for num_masked 0.
std::vector<size_t> unmask_count_schedule(size_t num_masked, uint32_t steps);

// One reverse step: samples a token for every masked position from
// softmax(logits / temperature) and commits exactly k of them - the k
// highest-confidence samples (confidence = probability of the sampled token
// under the tempered distribution) or k uniformly chosen under Random. At
// temperature 0 the sampled token is the argmax, no rng is consumed, and
// ranking uses the untempered softmax probability. The MASK id is excluded
// from the distribution: committed tokens are always clean. Throws if k
// exceeds the remaining masks.
NoisySequence denoise_step(const DenoiserParams& params, const NoisySequence& state, size_t k,
                           const SamplerConfig& config, const Vocabulary& vocab, Rng& rng,
                           TraceStep* trace = nullptr);

// Appends gen_length MASK tokens after the prompt and denoises them over the
// stepped schedule. Prompt tokens are never modified.
GenerationResult generate(const DenoiserParams& params, const TokenSequence& prompt,
                          const SamplerConfig& config, const Vocabulary& vocab);

// Fills exactly the masked positions of the template, any span placement,
// fixed length. Clean positions are preserved byte-for-byte. With masks
// confined to an appended response region this is the same computation as
// generate under a shared seed.
GenerationResult infill(const DenoiserParams& params, const NoisySequence& template_seq,
                        const SamplerConfig& config, const Vocabulary& vocab);

// Writes one JSON record per trace step: {"step":..,"positions":[..],"tokens":[..]}.
void write_trace_jsonl(const std::vector<TraceStep>& trace, const std::string& path);

}  // namespace mdlab
