#pragma once

#include <string>
#include <vector>

#include "mdlab/checkpoint.hpp"
#include "mdlab/denoiser.hpp"
#include "mdlab/masking.hpp"
#include "mdlab/schedule.hpp"

namespace mdlab {

struct TrainConfig {
    double peak_lr = 3e-4;
    uint32_t warmup_steps = 50;   // linear warmup, then cosine decay to 0
    uint32_t batch_size = 32;
    uint32_t epochs = 0;          // 0 = stage default (FS 8, RO 4)
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;

    void validate() const;
};

enum class StageKind { ResponseOnly, FullSequence };
enum class MaskSampler { FixedCount, Bernoulli };

const char* stage_kind_name(StageKind k);      // "RO" / "FS"
const char* mask_sampler_name(MaskSampler s);  // "fixed_count" / "bernoulli"

// One fine-tuning stage: the masking regime fixes the policy for every step.
struct StageSpec {
    StageKind kind = StageKind::FullSequence;
    TrainConfig config;
    MaskSampler sampler = MaskSampler::FixedCount;

    uint32_t effective_epochs() const {
        if (config.epochs > 0) return config.epochs;
        return kind == StageKind::FullSequence ? 8 : 4;
    }
};

struct TrainLogEntry {
    uint64_t step = 0;
    std::string stage;
    double t_mean = 0.0;  // mean masking ratio drawn across the batch
    double loss = 0.0;
    double grad_norm = 0.0;  // post-clip
    double lr = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
    void save(const std::string& path) const;  // tab-separated, one step per line
};

// Corrupts one clean example for a training step. Redraws t up to 8 times if
// the draw masks nothing, then forces a single uniformly chosen maskable
// position. Throws if the policy region is empty (e.g. RO with no response).
NoisySequence corrupt_for_stage(const TokenSequence& example, StageKind kind, MaskSampler sampler,
                                const Vocabulary& vocab, Rng& rng);

// Full-sequence objective: per example draw t ~ U(0,1], mask anywhere in the
// sequence, cross-entropy over masked positions normalized by each example's
// mask count.
LossGrads loss_full_sequence(const DenoiserParams& params, const std::vector<TokenSequence>& batch,
                             const Vocabulary& vocab, Rng& rng,
                             MaskSampler sampler = MaskSampler::FixedCount);

// Response-only objective: prompts stay clean, masks land in the response,
// normalization by the response mask count.
LossGrads loss_response_only(const DenoiserParams& params, const std::vector<TokenSequence>& batch,
                             const Vocabulary& vocab, Rng& rng,
                             MaskSampler sampler = MaskSampler::FixedCount);

// Evaluate either objective on an already-corrupted batch. The response-only
// route rejects masks in the prompt region; on a response-confined pattern the
// two agree exactly (same sum, same normalization).
LossGrads loss_full_sequence_on(const DenoiserParams& params, const std::vector<NoisySequence>& batch);
LossGrads loss_response_only_on(const DenoiserParams& params, const std::vector<NoisySequence>& batch);

// Linear warmup then cosine decay; step is 1-based, lr(warmup) = peak,
// lr(total) = 0.
double learning_rate_at(uint64_t step, uint64_t total_steps, const TrainConfig& cfg);

// Scales gradients in place so the global L2 norm is at most max_norm.
// Returns the post-clip norm.
double clip_gradients(DenoiserParams& grads, double max_norm);

// AdamW with decoupled weight decay.
class AdamW {
  public:
    AdamW(const DenoiserParams& shape, TrainConfig cfg);
    void step(DenoiserParams& params, const DenoiserParams& grads, double lr);
    uint64_t steps_taken() const { return t_; }

  private:
    TrainConfig cfg_;
    DenoiserParams m_, v_;
    uint64_t t_ = 0;
};

// Runs one stage over the dataset: shuffle each epoch, corrupt, loss, clip,
// AdamW update, schedule step. Mutates params; appends to log. Aborts with a
// diagnostic record on a non-finite loss.
void train_stage(DenoiserParams& params, const std::vector<TokenSequence>& dataset,
                 const Vocabulary& vocab, const StageSpec& stage, const std::string& stage_tag,
                 uint64_t seed, TrainLog& log);

struct StageCheckpoint {
    std::string tag;
    std::string path;
};

struct TrainRunResult {
    DenoiserParams params;
    std::vector<StageCheckpoint> checkpoints;
    TrainLog log;
};

// Runs stages in order, each from the previous stage's weights, persisting a
// stage-tagged checkpoint after each ([FS, RO] yields tags FS and FS+RO).
// Pass an empty out_dir to skip checkpoint files.
TrainRunResult run_training_pipeline(DenoiserParams params, const std::vector<TokenSequence>& dataset,
                                     const Vocabulary& vocab, const std::vector<StageSpec>& stages,
                                     uint64_t seed, const std::string& out_dir);

}  // namespace mdlab
