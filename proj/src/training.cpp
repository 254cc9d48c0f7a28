#include "mdlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace mdlab {

void TrainConfig::validate() const {
    if (!(peak_lr > 0.0)) throw std::invalid_argument("train config: peak_lr must be positive");
    if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("train config: clip_norm must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train config: betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("train config: adam_eps must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be nonnegative");
}

const char* stage_kind_name(StageKind k) {
    return k == StageKind::FullSequence ? "FS" : "RO";
}

const char* mask_sampler_name(MaskSampler s) {
    return s == MaskSampler::FixedCount ? "fixed_count" : "bernoulli";
}

void TrainLog::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("train log: cannot write " + path);
    out << "step\tstage\tt\tloss\tgrad_norm\tlr\n";
    out.precision(17);
    for (const auto& e : entries)
        out << e.step << '\t' << e.stage << '\t' << e.t_mean << '\t' << e.loss << '\t' << e.grad_norm
            << '\t' << e.lr << '\n';
}

NoisySequence corrupt_for_stage(const TokenSequence& example, StageKind kind, MaskSampler sampler,
                                const Vocabulary& vocab, Rng& rng) {
    MaskingPolicy policy = kind == StageKind::FullSequence ? MaskingPolicy::full_sequence()
                                                           : MaskingPolicy::response_only();
    std::vector<size_t> region = policy.region(example.size(), example.prompt_len);
    if (region.empty())
        throw std::invalid_argument(std::string("corrupt_for_stage: empty maskable region for ") +
                                    stage_kind_name(kind) + " stage");

    double t = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        t = sample_mask_ratio(rng);
        NoisySequence noisy = sampler == MaskSampler::FixedCount
                                  ? mask_fixed_count(example, t, policy, vocab, rng)
                                  : mask_bernoulli(example, t, policy, vocab, rng);
        if (!noisy.masked_positions.empty()) return noisy;
    }
    // eight empty draws: force one uniformly chosen maskable position
    size_t pos = region[rng.uniform_int(region.size())];
    NoisySequence noisy;
    noisy.tokens = example.tokens;
    noisy.prompt_len = example.prompt_len;
    noisy.masked_positions = {pos};
    noisy.t = t;
    noisy.origin = example;
    noisy.tokens[pos] = vocab.mask_id();
    return noisy;
}

namespace {

std::vector<NoisySequence> corrupt_batch(const std::vector<TokenSequence>& batch, StageKind kind,
                                         MaskSampler sampler, const Vocabulary& vocab, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("objective: empty batch");
    std::vector<NoisySequence> noisy;
    noisy.reserve(batch.size());
    for (const auto& ex : batch) noisy.push_back(corrupt_for_stage(ex, kind, sampler, vocab, rng));
    return noisy;
}

}  // namespace

LossGrads loss_full_sequence(const DenoiserParams& params, const std::vector<TokenSequence>& batch,
                             const Vocabulary& vocab, Rng& rng, MaskSampler sampler) {
    return loss_full_sequence_on(params,
                                 corrupt_batch(batch, StageKind::FullSequence, sampler, vocab, rng));
}

LossGrads loss_response_only(const DenoiserParams& params, const std::vector<TokenSequence>& batch,
                             const Vocabulary& vocab, Rng& rng, MaskSampler sampler) {
    for (const auto& ex : batch)
        if (ex.prompt_len >= ex.size())
            throw std::invalid_argument("loss_response_only: example has empty response");
    return loss_response_only_on(params,
                                 corrupt_batch(batch, StageKind::ResponseOnly, sampler, vocab, rng));
}

LossGrads loss_full_sequence_on(const DenoiserParams& params, const std::vector<NoisySequence>& batch) {
    return masked_cross_entropy(params, batch);
}

LossGrads loss_response_only_on(const DenoiserParams& params, const std::vector<NoisySequence>& batch) {
    for (const auto& seq : batch) {
        for (size_t pos : seq.masked_positions)
            if (pos < seq.prompt_len)
                throw std::invalid_argument(
                    "loss_response_only_on: mask at prompt position " + std::to_string(pos));
    }
    // Masks are response-confined, so |M| == |M^R| and the shared kernel's
    // normalization is exactly the response-mask normalization.
    return masked_cross_entropy(params, batch);
}

double learning_rate_at(uint64_t step, uint64_t total_steps, const TrainConfig& cfg) {
    if (step == 0 || step > total_steps)
        throw std::invalid_argument("learning_rate_at: step outside [1, total]");
    if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
        return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    if (total_steps <= cfg.warmup_steps) return cfg.peak_lr;
    double progress = static_cast<double>(step - cfg.warmup_steps) /
                      static_cast<double>(total_steps - cfg.warmup_steps);
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_gradients(DenoiserParams& grads, double max_norm) {
    double sq = 0.0;
    grads.for_each([&](const std::string&, Eigen::Map<Mat> m) { sq += m.squaredNorm(); });
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double scale = max_norm / norm;
        grads.for_each([&](const std::string&, Eigen::Map<Mat> m) { m *= scale; });
        sq = 0.0;
        grads.for_each([&](const std::string&, Eigen::Map<Mat> m) { sq += m.squaredNorm(); });
        norm = std::sqrt(sq);
    }
    return norm;
}

AdamW::AdamW(const DenoiserParams& shape, TrainConfig cfg)
    : cfg_(std::move(cfg)), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

void AdamW::step(DenoiserParams& params, const DenoiserParams& grads, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    // walk the four structures in lockstep via the shared visitation order
    std::vector<Eigen::Map<const Mat>> gs;
    std::vector<Eigen::Map<Mat>> ms, vs;
    grads.for_each([&](const std::string&, Eigen::Map<const Mat> g) { gs.push_back(g); });
    m_.for_each([&](const std::string&, Eigen::Map<Mat> m) { ms.push_back(m); });
    v_.for_each([&](const std::string&, Eigen::Map<Mat> m) { vs.push_back(m); });

    size_t idx = 0;
    params.for_each([&](const std::string&, Eigen::Map<Mat> p) {
        const auto& g = gs[idx];
        auto& m = ms[idx];
        auto& v = vs[idx];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.array().square().matrix();
        p.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.adam_eps) +
                           cfg_.weight_decay * p.array());
        ++idx;
    });
}

void train_stage(DenoiserParams& params, const std::vector<TokenSequence>& dataset,
                 const Vocabulary& vocab, const StageSpec& stage, const std::string& stage_tag,
                 uint64_t seed, TrainLog& log) {
    if (dataset.empty()) throw std::invalid_argument("train_stage: empty dataset");
    stage.config.validate();

    const uint32_t epochs = stage.effective_epochs();
    const size_t n = dataset.size();
    const size_t batch_size = stage.config.batch_size;
    const uint64_t steps_per_epoch = (n + batch_size - 1) / batch_size;
    const uint64_t total_steps = steps_per_epoch * epochs;

    AdamW opt(params, stage.config);
    uint64_t step = 0;
    uint64_t example_counter = 0;

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    for (uint32_t epoch = 0; epoch < epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(seed, "epoch-shuffle", epoch));
        for (size_t i = n; i > 1; --i) {
            size_t j = static_cast<size_t>(shuffle_rng.uniform_int(i));
            std::swap(order[i - 1], order[j]);
        }
        for (size_t start = 0; start < n; start += batch_size) {
            size_t end = std::min(start + batch_size, n);
            std::vector<NoisySequence> noisy;
            noisy.reserve(end - start);
            double t_sum = 0.0;
            for (size_t i = start; i < end; ++i) {
                Rng ex_rng(derive_seed(seed, "mask", example_counter++));
                noisy.push_back(
                    corrupt_for_stage(dataset[order[i]], stage.kind, stage.sampler, vocab, ex_rng));
                t_sum += noisy.back().t;
            }

            LossGrads lg = masked_cross_entropy(params, noisy);
            ++step;
            double lr = learning_rate_at(step, total_steps, stage.config);
            double grad_norm = clip_gradients(lg.grads, stage.config.clip_norm);

            log.entries.push_back({step, stage_tag, t_sum / static_cast<double>(end - start), lg.loss,
                                   grad_norm, lr});
            if (!std::isfinite(lg.loss))
                throw std::runtime_error("train_stage: non-finite loss at step " + std::to_string(step) +
                                         " of stage " + stage_tag);

            opt.step(params, lg.grads, lr);
        }
    }
}

TrainRunResult run_training_pipeline(DenoiserParams params, const std::vector<TokenSequence>& dataset,
                                     const Vocabulary& vocab, const std::vector<StageSpec>& stages,
                                     uint64_t seed, const std::string& out_dir) {
    if (stages.empty()) throw std::invalid_argument("run_training_pipeline: no stages");

    TrainRunResult result;
    std::string tag;
    for (size_t s = 0; s < stages.size(); ++s) {
        tag = tag.empty() ? stage_kind_name(stages[s].kind)
                          : tag + "+" + stage_kind_name(stages[s].kind);
        train_stage(params, dataset, vocab, stages[s], tag, derive_seed(seed, "stage", s), result.log);

        if (!out_dir.empty()) {
            Checkpoint ckpt;
            ckpt.params = params;
            ckpt.vocab_hash = vocab.content_hash();
            ckpt.stage_tag = tag;
            ckpt.rng_state = "root_seed=" + std::to_string(seed) + " stage_index=" + std::to_string(s);
            std::string path = (std::filesystem::path(out_dir) / ("ckpt_" + tag + ".mdlm")).string();
            save_checkpoint(ckpt, path);
            result.checkpoints.push_back({tag, path});
        } else {
            result.checkpoints.push_back({tag, ""});
        }
    }
    result.params = std::move(params);
    return result;
}

}  // namespace mdlab
