#include "mdlab/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mdlab {

void PPLEstimate::save_kv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("ppl estimate: cannot write " + path);
    out.precision(17);
    out << "ppl=" << ppl << "\n"
        << "nelbo_per_token=" << nelbo_per_token << "\n"
        << "mc_samples=" << mc_samples << "\n"
        << "standard_error=" << standard_error << "\n";
}

LogitsFn denoiser_logits_fn(const DenoiserParams& params) {
    return [&params](const NoisySequence& seq) { return forward(params, {seq})[0]; };
}

LogitsFn uniform_logits_fn(uint32_t vocab_size) {
    return [vocab_size](const NoisySequence& seq) {
        return Mat::Zero(static_cast<Eigen::Index>(seq.size()), vocab_size);
    };
}

PPLEstimate diffusion_ppl(const LogitsFn& model, const TokenSequence& seq, uint64_t mc_samples,
                          const NoiseSchedule& schedule, const MaskingPolicy& region,
                          const Vocabulary& vocab, uint64_t seed) {
    if (mc_samples < 1) throw std::invalid_argument("diffusion_ppl: mc_samples must be >= 1");
    const std::vector<size_t> region_indices = region.region(seq.size(), seq.prompt_len);
    if (region_indices.empty()) throw std::invalid_argument("diffusion_ppl: empty region");
    const double region_len = static_cast<double>(region_indices.size());
    const double K = static_cast<double>(mc_samples);

    double sum = 0.0;
    double sum_sq = 0.0;
    for (uint64_t k = 0; k < mc_samples; ++k) {
        Rng rng(derive_seed(seed, "ppl-draw", k));
        double u = (static_cast<double>(k) + rng.uniform01()) / K;
        double t = std::max(NoiseSchedule::kTMin, u);
        double p_mask = -std::expm1(-t * schedule.sigma_max);

        NoisySequence noisy = mask_bernoulli(seq, p_mask, region, vocab, rng, t);
        double value = 0.0;
        if (!noisy.masked_positions.empty()) {
            Mat logits = model(noisy);
            double ce = 0.0;
            for (size_t pos : noisy.masked_positions) {
                const auto r = static_cast<Eigen::Index>(pos);
                double m = logits.row(r).maxCoeff();
                double log_z = m + std::log((logits.row(r).array() - m).exp().sum());
                ce += log_z - logits(r, seq.tokens[pos]);
            }
            value = nelbo_weight(t, schedule) * ce;
        }
        sum += value;
        sum_sq += value * value;
    }

    PPLEstimate est;
    est.mc_samples = mc_samples;
    double mean = sum / K;
    est.nelbo_per_token = mean / region_len;
    double var = mc_samples > 1 ? std::max(0.0, (sum_sq - K * mean * mean) / (K - 1.0)) : 0.0;
    est.standard_error = std::sqrt(var / K) / region_len;
    est.ppl = std::exp(est.nelbo_per_token);
    return est;
}

PPLEstimate diffusion_ppl(const DenoiserParams& params, const TokenSequence& seq, uint64_t mc_samples,
                          const NoiseSchedule& schedule, const MaskingPolicy& region,
                          const Vocabulary& vocab, uint64_t seed) {
    return diffusion_ppl(denoiser_logits_fn(params), seq, mc_samples, schedule, region, vocab, seed);
}

PPLEstimate diffusion_ppl_pooled(const LogitsFn& model, const std::vector<TokenSequence>& seqs,
                                 uint64_t mc_samples, const NoiseSchedule& schedule,
                                 const MaskingPolicy& region, const Vocabulary& vocab, uint64_t seed) {
    if (seqs.empty()) throw std::invalid_argument("diffusion_ppl_pooled: no sequences");
    double total_nelbo = 0.0;
    double total_tokens = 0.0;
    double var_sum = 0.0;
    for (size_t i = 0; i < seqs.size(); ++i) {
        double len = static_cast<double>(region.region(seqs[i].size(), seqs[i].prompt_len).size());
        PPLEstimate e = diffusion_ppl(model, seqs[i], mc_samples, schedule, region, vocab,
                                      derive_seed(seed, "ppl-seq", i));
        total_nelbo += e.nelbo_per_token * len;
        total_tokens += len;
        var_sum += (e.standard_error * len) * (e.standard_error * len);
    }
    PPLEstimate out;
    out.mc_samples = mc_samples;
    out.nelbo_per_token = total_nelbo / total_tokens;
    out.standard_error = std::sqrt(var_sum) / total_tokens;
    out.ppl = std::exp(out.nelbo_per_token);
    return out;
}

int exact_match(const std::string& prediction, const std::string& reference) {
    auto normalize = [](const std::string& s) {
        std::string out;
        std::istringstream is(s);
        std::string word;
        while (is >> word) {
            if (!out.empty()) out += ' ';
            out += word;
        }
        return out;
    };
    return normalize(prediction) == normalize(reference) ? 1 : 0;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson_of(const std::vector<double>& x, const std::vector<double>& y, const char* what) {
    const double n = static_cast<double>(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument(std::string(what) + ": constant input, coefficient undefined");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

RankCorrelations rank_correlations(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("rank_correlations: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("rank_correlations: need at least 2 points");

    RankCorrelations out;
    out.pearson = pearson_of(x, y, "pearson");
    out.spearman = pearson_of(average_ranks(x), average_ranks(y), "spearman");

    // Kendall tau-b by pair counting with tie correction.
    const size_t n = x.size();
    long long concordant = 0, discordant = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            double dx = x[i] - x[j];
            double dy = y[i] - y[j];
            if (dx == 0.0 || dy == 0.0) continue;  // ties enter through the denominator only
            if ((dx > 0.0) == (dy > 0.0))
                ++concordant;
            else
                ++discordant;
        }
    }
    double n0 = static_cast<double>(n) * (static_cast<double>(n) - 1.0) / 2.0;
    double tx = 0.0, ty = 0.0;
    {
        // tie counts per group: sum t(t-1)/2 over tied groups in each vector
        auto group_ties = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            double total = 0.0;
            size_t i = 0;
            while (i < v.size()) {
                size_t j = i;
                while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
                double t = static_cast<double>(j - i + 1);
                total += t * (t - 1.0) / 2.0;
                i = j + 1;
            }
            return total;
        };
        tx = group_ties(x);
        ty = group_ties(y);
    }
    double denom = std::sqrt((n0 - tx) * (n0 - ty));
    if (denom == 0.0) throw std::invalid_argument("kendall: all pairs tied, tau-b undefined");
    out.kendall = (static_cast<double>(concordant) - static_cast<double>(discordant)) / denom;
    return out;
}

InfillDiagnostics infill_diagnostics(const std::vector<TokenId>& candidate,
                                     const std::vector<TokenId>& reference,
                                     const std::vector<std::pair<size_t, size_t>>& mask_spans,
                                     const Vocabulary& vocab) {
    if (candidate.size() != reference.size())
        throw std::invalid_argument("infill_diagnostics: length mismatch");

    InfillDiagnostics out;
    size_t correct = 0, filler = 0, total = 0;
    for (const auto& [start, end] : mask_spans) {
        if (start > end || end > candidate.size())
            throw std::invalid_argument("infill_diagnostics: span out of bounds");
        for (size_t i = start; i < end; ++i) {
            ++total;
            if (candidate[i] == reference[i]) ++correct;
            if (candidate[i] == vocab.eos_id() || candidate[i] == vocab.pad_id()) ++filler;
        }
    }
    if (total == 0) throw std::invalid_argument("infill_diagnostics: empty mask spans");
    out.span_tokens = total;
    out.token_accuracy = static_cast<double>(correct) / static_cast<double>(total);
    out.eos_pad_fraction = static_cast<double>(filler) / static_cast<double>(total);
    return out;
}

void MetricReport::save_kv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("metric report: cannot write " + path);
    out.precision(17);
    out << "em=" << em << "\n";
    out << "pearson=" << (pearson ? std::to_string(*pearson) : "undefined") << "\n";
    out << "spearman=" << (spearman ? std::to_string(*spearman) : "undefined") << "\n";
    out << "kendall=" << (kendall ? std::to_string(*kendall) : "undefined") << "\n";
    out << "count=" << count << "\n";
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["em"] = em;
    j["pearson"] = pearson ? nlohmann::json(*pearson) : nlohmann::json(nullptr);
    j["spearman"] = spearman ? nlohmann::json(*spearman) : nlohmann::json(nullptr);
    j["kendall"] = kendall ? nlohmann::json(*kendall) : nlohmann::json(nullptr);
    j["count"] = count;
    return j.dump();
}

}  // namespace mdlab
