#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mdlab/denoiser.hpp"
#include "mdlab/masking.hpp"
#include "mdlab/schedule.hpp"

namespace mdlab {

struct PPLEstimate {
    double ppl = 0.0;
    double nelbo_per_token = 0.0;
    uint64_t mc_samples = 0;
    double standard_error = 0.0;  // of nelbo_per_token

    void save_kv(const std::string& path) const;
};

// Anything that maps a corrupted sequence to per-position logits (length x
// vocab). The denoiser is the usual provider; tests plug in closed-form ones.
using LogitsFn = std::function<Mat(const NoisySequence&)>;

LogitsFn denoiser_logits_fn(const DenoiserParams& params);
LogitsFn uniform_logits_fn(uint32_t vocab_size);

// Monte-Carlo diffusion perplexity over the given region. Draw k uses a
// stratified timestep t_k = max(t_min, (k + u)/K) with u ~ U(0,1) — uniform
// draws clamped at t_min, stratified across K so the timestep integral does
// not dominate the variance — masks each region token independently with
// probability 1 - alpha_t, sums -log P(clean | corrupted) over the masked
// positions, and weights by nelbo_weight(t). Empty-mask draws contribute 0.
// ppl = exp(estimate / region size).
PPLEstimate diffusion_ppl(const LogitsFn& model, const TokenSequence& seq, uint64_t mc_samples,
                          const NoiseSchedule& schedule, const MaskingPolicy& region,
                          const Vocabulary& vocab, uint64_t seed);

PPLEstimate diffusion_ppl(const DenoiserParams& params, const TokenSequence& seq, uint64_t mc_samples,
                          const NoiseSchedule& schedule, const MaskingPolicy& region,
                          const Vocabulary& vocab, uint64_t seed);

// Pooled estimate over several sequences: sums sequence NELBOs, divides by
// total region size, propagates the per-sequence standard errors.
PPLEstimate diffusion_ppl_pooled(const LogitsFn& model, const std::vector<TokenSequence>& seqs,
                                 uint64_t mc_samples, const NoiseSchedule& schedule,
                                 const MaskingPolicy& region, const Vocabulary& vocab, uint64_t seed);

// 1 iff the two strings are equal after trimming and collapsing whitespace.
int exact_match(const std::string& prediction, const std::string& reference);

struct RankCorrelations {
    double pearson = 0.0;
    double spearman = 0.0;
    double kendall = 0.0;  // tau-b, tie corrected
};

// Throws when a requested coefficient is undefined (constant input, or an
// all-tied side for tau-b).
RankCorrelations rank_correlations(const std::vector<double>& x, const std::vector<double>& y);

struct InfillDiagnostics {
    double token_accuracy = 0.0;    // over masked-span positions
    double eos_pad_fraction = 0.0;  // masked-span positions holding EOS or PAD
    size_t span_tokens = 0;
};

InfillDiagnostics infill_diagnostics(const std::vector<TokenId>& candidate,
                                     const std::vector<TokenId>& reference,
                                     const std::vector<std::pair<size_t, size_t>>& mask_spans,
                                     const Vocabulary& vocab);

struct MetricReport {
    double em = 0.0;
    std::optional<double> pearson, spearman, kendall;
    size_t count = 0;

    void save_kv(const std::string& path) const;
    std::string to_json() const;
};

}  // namespace mdlab
