#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mdlab/prompt_template.hpp"
#include "mdlab/sampler.hpp"

namespace mdlab {

enum class ScorerKind { ExactMatch, NumericAbsError };

struct PipelineConfig {
    size_t num_candidates = 8;
    SamplerConfig infill_sampler;      // per-candidate seeds are derived from `seed`
    SamplerConfig validation_sampler;  // gen_length must cover the response
    ScorerKind scorer = ScorerKind::ExactMatch;
    uint64_t seed = 0;
    // ties in select_best go to the lowest provenance candidate index (stable)
};

struct Provenance {
    size_t candidate_index = 0;
    size_t example_index = 0;
    uint64_t seed = 0;
};

// A completed prompt: the template with every mask filled, slots still
// symbolic for per-example substitution at validation/test time.
struct InfillCandidate {
    std::vector<TemplateElement> elements;
    Provenance provenance;
    std::optional<double> score;  // mean validation score, set by validate_candidates
    std::vector<double> per_example_scores;
};

// Template with one example's slots substituted and the reference response
// appended clean, so denoising the masks is conditioned on the response.
// prompt_len of the result is the substituted template length.
NoisySequence assemble_infill_context(const PromptTemplate& tpl, const FewShotExample& example,
                                      const Vocabulary& vocab);

struct ProposalResult {
    std::vector<InfillCandidate> candidates;
    uint64_t infill_calls = 0;
};

// Produces cfg.num_candidates candidates by cycling (example index, derived
// seed) pairs; each candidate is the infilled template only, the appended
// reference stripped.
ProposalResult propose_candidates(const DenoiserParams& params, const PromptTemplate& tpl,
                                  const std::vector<FewShotExample>& examples,
                                  const PipelineConfig& cfg, const Vocabulary& vocab);

// Extracts the generated answer: response-region tokens up to the first EOS,
// PAD dropped, decoded to text.
std::string extract_answer(const TokenSequence& seq, const Vocabulary& vocab);
std::string extract_answer_text(const std::string& response_text);

double score_response(const std::string& generated, const std::string& reference,
                      ScorerKind scorer);

// For each candidate: substitute each example's slots, generate a response
// with the validation sampler, score against the reference, record the mean.
// Scores depend only on (candidate, example), never on list order.
void validate_candidates(const DenoiserParams& params, std::vector<InfillCandidate>& candidates,
                         const std::vector<FewShotExample>& examples, const PipelineConfig& cfg,
                         const Vocabulary& vocab);

// Maximum-score candidate, ties to the lowest provenance candidate index.
// Throws if any candidate is unscored.
const InfillCandidate& select_best(const std::vector<InfillCandidate>& candidates);

struct PipelineResult {
    std::vector<InfillCandidate> candidates;
    InfillCandidate best;
    uint64_t infill_calls = 0;
};

// Steps 1-4 end to end: assemble contexts, propose, validate, select. The
// selected prompt is computed once; applying it to test inputs never infills
// again (infill_calls records the total for the whole run).
PipelineResult run_infill_pipeline(const DenoiserParams& params, const PromptTemplate& tpl,
                                   const std::vector<FewShotExample>& examples,
                                   const PipelineConfig& cfg, const Vocabulary& vocab);

struct SlidingWindowResult {
    std::vector<InfillCandidate> candidates;  // baseline first, then one per window
    InfillCandidate best;
    std::vector<size_t> window_offsets;
    uint64_t infill_calls = 0;
};

// Masks mask_size tokens at the start of each window over the template's
// leading literal run (offset 0, stride, 2*stride, ... while offset+window
// fits), infills, validates every candidate plus the unmodified baseline, and
// selects the best. A window wider than the editable run collapses to a
// single full-run window at offset 0.
SlidingWindowResult sliding_window_infill(const DenoiserParams& params, const PromptTemplate& tpl,
                                          size_t window, size_t stride, size_t mask_size,
                                          const std::vector<FewShotExample>& examples,
                                          const PipelineConfig& cfg, const Vocabulary& vocab);

void write_candidate_report(const std::vector<InfillCandidate>& candidates, const Vocabulary& vocab,
                            const std::string& path);
void write_selected_prompt(const InfillCandidate& best, const Vocabulary& vocab,
                           const std::string& path);

}  // namespace mdlab
