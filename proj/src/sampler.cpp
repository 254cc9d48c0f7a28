#include "mdlab/sampler.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mdlab {

void SamplerConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("sampler config: steps must be >= 1");
    if (temperature < 0.0) throw std::invalid_argument("sampler config: temperature must be >= 0");
}

std::vector<size_t> unmask_count_schedule(size_t num_masked, uint32_t steps) {
    if (steps < 1) throw std::invalid_argument("unmask_count_schedule: steps must be >= 1");
    if (num_masked == 0) return {};
    size_t n_steps = std::min<size_t>(steps, num_masked);
    size_t base = num_masked / n_steps;
    size_t remainder = num_masked % n_steps;
    std::vector<size_t> counts(n_steps, base);
    for (size_t i = 0; i < remainder; ++i) counts[i] += 1;
    return counts;
}

NoisySequence denoise_step(const DenoiserParams& params, const NoisySequence& state, size_t k,
                           const SamplerConfig& config, const Vocabulary& vocab, Rng& rng,
                           TraceStep* trace) {
    config.validate();
    if (k > state.masked_positions.size())
        throw std::invalid_argument("denoise_step: k exceeds remaining masked positions");
    if (k == 0) return state;

    LogitsGrid grid = forward(params, {state});
    Mat logits = std::move(grid[0]);
    const auto vsize = logits.cols();
    // never emit the mask symbol: committed tokens must be clean
    logits.col(vocab.mask_id()).setConstant(-std::numeric_limits<double>::infinity());

    struct Candidate {
        size_t pos;
        TokenId token;
        double confidence;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(state.masked_positions.size());

    Eigen::RowVectorXd probs(vsize);
    for (size_t pos : state.masked_positions) {
        const auto r = static_cast<Eigen::Index>(pos);
        TokenId token;
        double conf;
        if (config.temperature > 0.0) {
            Eigen::RowVectorXd scaled = logits.row(r) / config.temperature;
            double m = scaled.maxCoeff();
            probs = (scaled.array() - m).exp();
            probs /= probs.sum();
            double u = rng.uniform01();
            double acc = 0.0;
            Eigen::Index chosen = vsize - 1;
            for (Eigen::Index j = 0; j < vsize; ++j) {
                acc += probs(j);
                if (u < acc) {
                    chosen = j;
                    break;
                }
            }
            token = static_cast<TokenId>(chosen);
            conf = probs(chosen);
        } else {
            Eigen::Index chosen = 0;
            logits.row(r).maxCoeff(&chosen);
            double m = logits.row(r).maxCoeff();
            probs = (logits.row(r).array() - m).exp();
            token = static_cast<TokenId>(chosen);
            conf = probs(chosen) / probs.sum();
        }
        if (config.strategy == UnmaskStrategy::Random) conf = rng.uniform01();
        candidates.push_back({pos, token, conf});
    }

    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                          if (a.confidence != b.confidence) return a.confidence > b.confidence;
                          return a.pos < b.pos;
                      });

    NoisySequence next = state;
    std::vector<size_t> committed;
    committed.reserve(k);
    for (size_t i = 0; i < k; ++i) {
        next.tokens[candidates[i].pos] = candidates[i].token;
        committed.push_back(candidates[i].pos);
        if (trace) {
            trace->positions.push_back(candidates[i].pos);
            trace->tokens.push_back(candidates[i].token);
        }
    }
    std::sort(committed.begin(), committed.end());
    std::vector<size_t> remaining;
    remaining.reserve(next.masked_positions.size() - k);
    std::set_difference(next.masked_positions.begin(), next.masked_positions.end(), committed.begin(),
                        committed.end(), std::back_inserter(remaining));
    next.masked_positions = std::move(remaining);
    return next;
}

namespace {

GenerationResult run_schedule(const DenoiserParams& params, NoisySequence state,
                              const SamplerConfig& config, const Vocabulary& vocab) {
    Rng rng(derive_seed(config.seed, "sampler"));
    GenerationResult result;
    std::vector<size_t> counts = unmask_count_schedule(state.masked_positions.size(), config.steps);
    for (size_t s = 0; s < counts.size(); ++s) {
        TraceStep step;
        step.step = static_cast<uint32_t>(s);
        state = denoise_step(params, state, counts[s], config, vocab, rng, &step);
        result.trace.push_back(std::move(step));
    }
    result.sequence.tokens = std::move(state.tokens);
    result.sequence.prompt_len = state.prompt_len;
    return result;
}

}  // namespace

GenerationResult generate(const DenoiserParams& params, const TokenSequence& prompt,
                          const SamplerConfig& config, const Vocabulary& vocab) {
    config.validate();
    if (prompt.size() + config.gen_length > params.config.max_len)
        throw std::invalid_argument("generate: prompt plus gen_length exceeds max_len");

    NoisySequence state;
    state.tokens = prompt.tokens;
    state.tokens.resize(prompt.size() + config.gen_length, vocab.mask_id());
    state.prompt_len = prompt.size();
    for (size_t i = prompt.size(); i < state.tokens.size(); ++i) state.masked_positions.push_back(i);
    state.t = config.gen_length > 0 ? 1.0 : 0.0;
    return run_schedule(params, std::move(state), config, vocab);
}

GenerationResult infill(const DenoiserParams& params, const NoisySequence& template_seq,
                        const SamplerConfig& config, const Vocabulary& vocab) {
    config.validate();
    if (template_seq.size() > params.config.max_len)
        throw std::invalid_argument("infill: template exceeds max_len");
    return run_schedule(params, template_seq, config, vocab);
}

void write_trace_jsonl(const std::vector<TraceStep>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("trace: cannot write " + path);
    for (const auto& s : trace) {
        nlohmann::json rec;
        rec["step"] = s.step;
        rec["positions"] = s.positions;
        rec["tokens"] = s.tokens;
        out << rec.dump() << "\n";
    }
}

}  // namespace mdlab
