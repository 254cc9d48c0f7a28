#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "mdlab/rng.hpp"
#include "mdlab/sequence.hpp"

namespace mdlab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct DenoiserConfig {
    uint32_t vocab_size = 0;
    uint32_t d_model = 128;
    uint32_t n_layers = 4;
    uint32_t n_heads = 4;
    uint32_t max_len = 256;
    uint32_t ff_mult = 4;  // feed-forward width = ff_mult * d_model

    uint32_t ff_dim() const { return ff_mult * d_model; }
    uint32_t head_dim() const { return d_model / n_heads; }

    void validate() const;
    bool operator==(const DenoiserConfig&) const = default;
};

// One pre-norm transformer block: x += Attn(LN1(x)); x += FF(LN2(x)).
// Linear layers apply as y = x * W + b with row-vector activations.
struct LayerParams {
    Vec ln1_gamma, ln1_beta;
    Mat wq, wk, wv, wo;     // each d_model x d_model
    Vec bq, bk, bv, bo;
    Vec ln2_gamma, ln2_beta;
    Mat w_ff1;              // d_model x ff_dim
    Vec b_ff1;
    Mat w_ff2;              // ff_dim x d_model
    Vec b_ff2;
};

// All weights of the bidirectional denoiser estimating the clean sequence
// from a masked one. Attention has no causal mask; there is no timestep
// input, the mask pattern itself carries the noise level.
struct DenoiserParams {
    DenoiserConfig config;
    Mat token_embedding;     // vocab_size x d_model
    Mat position_embedding;  // max_len x d_model
    std::vector<LayerParams> layers;
    Vec lnf_gamma, lnf_beta;
    Mat w_out;               // d_model x vocab_size
    Vec b_out;

    // Visits every parameter matrix in a fixed documented order (the
    // checkpoint serialization order). Vectors are visited as n x 1 matrices.
    void for_each(const std::function<void(const std::string&, Eigen::Map<Mat>)>& fn);
    void for_each(const std::function<void(const std::string&, Eigen::Map<const Mat>)>& fn) const;

    DenoiserParams zeros_like() const;
    size_t parameter_count() const;
    uint64_t content_hash() const;  // FNV-1a over the raw parameter bytes
};

DenoiserParams init_params(const DenoiserConfig& config, uint64_t seed);

// One logits matrix (length x vocab) per batch element.
using LogitsGrid = std::vector<Mat>;

// Everything the backward pass needs, cached per sequence during forward.
struct ForwardCache;

LogitsGrid forward(const DenoiserParams& params, const std::vector<NoisySequence>& batch);

struct LossGrads {
    double loss = 0.0;
    DenoiserParams grads;  // same shapes as the parameters
};

// Cross-entropy over the masked positions of each batch element, normalized
// by that element's mask count, averaged over elements with nonempty masks.
// Targets come from each NoisySequence's origin. Returns the loss and exact
// gradients for every parameter. Throws if every mask set is empty or an
// origin is missing.
LossGrads masked_cross_entropy(const DenoiserParams& params, const std::vector<NoisySequence>& batch);

// Loss-only evaluation from precomputed logits (no gradients). targets[b] is
// the clean sequence, masks[b] the positions that contribute terms.
double masked_cross_entropy_value(const LogitsGrid& logits, const std::vector<TokenSequence>& targets,
                                  const std::vector<std::vector<size_t>>& masks);

}  // namespace mdlab
