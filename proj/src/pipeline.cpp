#include "mdlab/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mdlab/evalkit.hpp"

namespace mdlab {

NoisySequence assemble_infill_context(const PromptTemplate& tpl, const FewShotExample& example,
                                      const Vocabulary& vocab) {
    SubstitutedTemplate sub = substitute_slots(tpl.elements, example, vocab);
    std::vector<TokenId> reference = vocab.encode(example.reference);
    if (reference.empty()) throw std::invalid_argument("assemble_infill_context: empty reference");

    NoisySequence ctx;
    ctx.tokens = sub.tokens;
    ctx.prompt_len = sub.tokens.size();
    ctx.tokens.insert(ctx.tokens.end(), reference.begin(), reference.end());
    ctx.masked_positions = sub.mask_positions;
    ctx.t = ctx.tokens.empty()
                ? 0.0
                : static_cast<double>(ctx.masked_positions.size()) / static_cast<double>(ctx.tokens.size());
    return ctx;
}

namespace {

InfillCandidate infill_one_candidate(const DenoiserParams& params, const PromptTemplate& tpl,
                                     const FewShotExample& example, Provenance prov,
                                     const SamplerConfig& sampler_cfg, const Vocabulary& vocab,
                                     uint64_t& infill_calls) {
    NoisySequence ctx = assemble_infill_context(tpl, example, vocab);
    SubstitutedTemplate sub = substitute_slots(tpl.elements, example, vocab);

    SamplerConfig cfg = sampler_cfg;
    cfg.seed = prov.seed;
    GenerationResult filled = infill(params, ctx, cfg, vocab);
    ++infill_calls;

    InfillCandidate cand;
    cand.elements = tpl.elements;
    cand.provenance = prov;
    for (size_t i = 0; i < sub.mask_positions.size(); ++i)
        cand.elements[sub.mask_elements[i]] =
            TemplateElement::literal(filled.sequence.tokens[sub.mask_positions[i]]);
    return cand;
}

}  // namespace

ProposalResult propose_candidates(const DenoiserParams& params, const PromptTemplate& tpl,
                                  const std::vector<FewShotExample>& examples,
                                  const PipelineConfig& cfg, const Vocabulary& vocab) {
    if (cfg.num_candidates == 0)
        throw std::invalid_argument("propose_candidates: num_candidates must be >= 1");
    if (examples.empty()) throw std::invalid_argument("propose_candidates: no examples");

    ProposalResult out;
    for (size_t c = 0; c < cfg.num_candidates; ++c) {
        Provenance prov;
        prov.candidate_index = c;
        prov.example_index = c % examples.size();
        prov.seed = derive_seed(cfg.seed, "infill-candidate", c);
        out.candidates.push_back(infill_one_candidate(params, tpl, examples[prov.example_index], prov,
                                                      cfg.infill_sampler, vocab, out.infill_calls));
    }
    return out;
}

std::string extract_answer(const TokenSequence& seq, const Vocabulary& vocab) {
    std::vector<TokenId> answer;
    for (size_t i = seq.prompt_len; i < seq.tokens.size(); ++i) {
        if (seq.tokens[i] == vocab.eos_id()) break;
        if (seq.tokens[i] == vocab.pad_id()) continue;
        answer.push_back(seq.tokens[i]);
    }
    return vocab.decode(answer);
}

std::string extract_answer_text(const std::string& response_text) {
    std::istringstream is(response_text);
    std::string word, out;
    while (is >> word) {
        if (word == Vocabulary::kEosSymbol) break;
        if (word == Vocabulary::kPadSymbol) continue;
        if (!out.empty()) out += ' ';
        out += word;
    }
    return out;
}

namespace {

std::optional<double> parse_first_number(const std::string& text) {
    // digit-token streams ("0 2 6") concatenate to one number
    std::string digits;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) digits += c;
    if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos)
        return std::stod(digits);

    std::istringstream is(text);
    std::string word;
    while (is >> word) {
        try {
            size_t used = 0;
            double v = std::stod(word, &used);
            if (used == word.size()) return v;
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

}  // namespace

double score_response(const std::string& generated, const std::string& reference,
                      ScorerKind scorer) {
    std::string gen = extract_answer_text(generated);
    std::string ref = extract_answer_text(reference);
    if (scorer == ScorerKind::ExactMatch) return static_cast<double>(exact_match(gen, ref));

    // absolute error mapped to [0, 1]; unparseable output scores 0
    std::optional<double> g = parse_first_number(gen);
    std::optional<double> r = parse_first_number(ref);
    if (!g || !r) return 0.0;
    double scale = std::max(1.0, std::abs(*r));
    return std::max(0.0, 1.0 - std::abs(*g - *r) / scale);
}

void validate_candidates(const DenoiserParams& params, std::vector<InfillCandidate>& candidates,
                         const std::vector<FewShotExample>& examples, const PipelineConfig& cfg,
                         const Vocabulary& vocab) {
    if (candidates.empty()) throw std::invalid_argument("validate_candidates: empty candidate list");
    if (examples.empty()) throw std::invalid_argument("validate_candidates: no examples");

    for (auto& cand : candidates) {
        cand.per_example_scores.clear();
        double sum = 0.0;
        for (size_t e = 0; e < examples.size(); ++e) {
            SubstitutedTemplate sub = substitute_slots(cand.elements, examples[e], vocab);
            if (!sub.mask_positions.empty())
                throw std::invalid_argument("validate_candidates: candidate still contains masks");
            TokenSequence prompt{sub.tokens, sub.tokens.size()};

            SamplerConfig gen_cfg = cfg.validation_sampler;
            // keyed by provenance so scores are independent of list order
            gen_cfg.seed = derive_seed(cand.provenance.seed, "validate", e);
            GenerationResult gen = generate(params, prompt, gen_cfg, vocab);

            std::string answer = extract_answer(gen.sequence, vocab);
            double s = score_response(answer, examples[e].reference, cfg.scorer);
            cand.per_example_scores.push_back(s);
            sum += s;
        }
        cand.score = sum / static_cast<double>(examples.size());
    }
}

const InfillCandidate& select_best(const std::vector<InfillCandidate>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("select_best: empty candidate list");
    const InfillCandidate* best = nullptr;
    for (const auto& c : candidates) {
        if (!c.score) throw std::invalid_argument("select_best: unscored candidate");
        if (!best || *c.score > *best->score ||
            (*c.score == *best->score && c.provenance.candidate_index < best->provenance.candidate_index))
            best = &c;
    }
    return *best;
}

PipelineResult run_infill_pipeline(const DenoiserParams& params, const PromptTemplate& tpl,
                                   const std::vector<FewShotExample>& examples,
                                   const PipelineConfig& cfg, const Vocabulary& vocab) {
    ProposalResult proposal = propose_candidates(params, tpl, examples, cfg, vocab);
    validate_candidates(params, proposal.candidates, examples, cfg, vocab);

    PipelineResult out;
    out.best = select_best(proposal.candidates);
    out.candidates = std::move(proposal.candidates);
    out.infill_calls = proposal.infill_calls;
    return out;
}

SlidingWindowResult sliding_window_infill(const DenoiserParams& params, const PromptTemplate& tpl,
                                          size_t window, size_t stride, size_t mask_size,
                                          const std::vector<FewShotExample>& examples,
                                          const PipelineConfig& cfg, const Vocabulary& vocab) {
    if (mask_size < 1 || window < mask_size)
        throw std::invalid_argument("sliding_window_infill: need window >= mask_size >= 1");
    if (stride < 1) throw std::invalid_argument("sliding_window_infill: stride must be >= 1");
    if (tpl.has_masks(vocab))
        throw std::invalid_argument("sliding_window_infill: template must start without masks");

    size_t editable = tpl.leading_literal_run(vocab);
    if (editable == 0)
        throw std::invalid_argument("sliding_window_infill: no editable literal prefix");

    SlidingWindowResult out;
    if (window > editable) {
        out.window_offsets = {0};
        window = editable;
        mask_size = std::min(mask_size, window);
    } else {
        for (size_t o = 0; o + window <= editable; o += stride) out.window_offsets.push_back(o);
    }

    // baseline: the unmodified prompt, provenance index 0
    InfillCandidate baseline;
    baseline.elements = tpl.elements;
    baseline.provenance = {0, 0, derive_seed(cfg.seed, "sw-baseline")};
    out.candidates.push_back(std::move(baseline));

    for (size_t w = 0; w < out.window_offsets.size(); ++w) {
        size_t offset = out.window_offsets[w];
        PromptTemplate masked = tpl;
        for (size_t i = offset; i < offset + mask_size; ++i)
            masked.elements[i] = TemplateElement::literal(vocab.mask_id());

        Provenance prov;
        prov.candidate_index = w + 1;
        prov.example_index = w % examples.size();
        prov.seed = derive_seed(cfg.seed, "sw-window", w);
        out.candidates.push_back(infill_one_candidate(params, masked, examples[prov.example_index],
                                                      prov, cfg.infill_sampler, vocab,
                                                      out.infill_calls));
    }

    validate_candidates(params, out.candidates, examples, cfg, vocab);
    out.best = select_best(out.candidates);
    return out;
}

void write_candidate_report(const std::vector<InfillCandidate>& candidates, const Vocabulary& vocab,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("candidate report: cannot write " + path);
    for (const auto& c : candidates) {
        nlohmann::json rec;
        rec["candidate_index"] = c.provenance.candidate_index;
        rec["example_index"] = c.provenance.example_index;
        rec["seed"] = c.provenance.seed;
        PromptTemplate view{c.elements};
        rec["prompt"] = view.render(vocab);
        rec["per_example_scores"] = c.per_example_scores;
        if (c.score) rec["mean_score"] = *c.score;
        out << rec.dump() << "\n";
    }
}

void write_selected_prompt(const InfillCandidate& best, const Vocabulary& vocab,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("selected prompt: cannot write " + path);
    nlohmann::json rec;
    rec["candidate_index"] = best.provenance.candidate_index;
    rec["example_index"] = best.provenance.example_index;
    rec["seed"] = best.provenance.seed;
    PromptTemplate view{best.elements};
    rec["prompt"] = view.render(vocab);
    if (best.score) rec["mean_score"] = *best.score;
    out << rec.dump() << "\n";
}

}  // namespace mdlab
