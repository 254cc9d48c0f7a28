#include "mdlab/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <type_traits>

namespace mdlab {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) {
    double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    double u = kGeluC * (x + kGeluA * x * x * x);
    double th = std::tanh(u);
    double sech2 = 1.0 - th * th;
    return 0.5 * (1.0 + th) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

// Row-wise layer norm. Returns y = gamma .* xhat + beta and caches xhat and
// 1/std for the backward pass.
Mat layer_norm(const Mat& x, const Vec& gamma, const Vec& beta, Mat& xhat, Vec& inv_std) {
    const auto rows = x.rows();
    const auto cols = x.cols();
    xhat.resize(rows, cols);
    inv_std.resize(rows);
    Mat y(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        double mean = x.row(r).mean();
        double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(cols);
        double is = 1.0 / std::sqrt(var + kLnEps);
        inv_std(r) = is;
        xhat.row(r) = (x.row(r).array() - mean) * is;
        y.row(r) = xhat.row(r).array() * gamma.transpose().array() + beta.transpose().array();
    }
    return y;
}

// dx for layer norm given upstream dy; accumulates dgamma/dbeta.
Mat layer_norm_backward(const Mat& dy, const Mat& xhat, const Vec& inv_std, const Vec& gamma,
                        Vec& dgamma, Vec& dbeta) {
    const auto rows = dy.rows();
    const auto cols = dy.cols();
    Mat dx(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        dgamma.array() += dy.row(r).transpose().array() * xhat.row(r).transpose().array();
        dbeta.array() += dy.row(r).transpose().array();
        Eigen::RowVectorXd dyh = dy.row(r).array() * gamma.transpose().array();
        double m1 = dyh.mean();
        double m2 = (dyh.array() * xhat.row(r).array()).mean();
        dx.row(r) = (dyh.array() - m1 - xhat.row(r).array() * m2) * inv_std(r);
    }
    return dx;
}

struct LayerCache {
    Mat x_in;
    Mat ln1_out, ln1_xhat;
    Vec ln1_inv_std;
    Mat q, k, v;
    std::vector<Mat> attn_probs;  // per head, L x L
    Mat attn_concat;
    Mat res1;
    Mat ln2_out, ln2_xhat;
    Vec ln2_inv_std;
    Mat ff_pre, ff_act;
};

struct SeqCache {
    std::vector<TokenId> tokens;
    Mat x0;
    std::vector<LayerCache> layers;
    Mat x_final;
    Mat lnf_xhat;
    Vec lnf_inv_std;
    Mat logits;
};

void forward_one(const DenoiserParams& p, const std::vector<TokenId>& tokens, SeqCache& cache) {
    const DenoiserConfig& cfg = p.config;
    const auto L = static_cast<Eigen::Index>(tokens.size());
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    const auto hd = static_cast<Eigen::Index>(cfg.head_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    if (tokens.size() > cfg.max_len)
        throw std::invalid_argument("denoiser: sequence length " + std::to_string(tokens.size()) +
                                    " exceeds max_len " + std::to_string(cfg.max_len));
    for (TokenId t : tokens)
        if (t >= cfg.vocab_size) throw std::invalid_argument("denoiser: token id out of range");

    cache.tokens = tokens;
    cache.x0.resize(L, d);
    for (Eigen::Index i = 0; i < L; ++i)
        cache.x0.row(i) = p.token_embedding.row(tokens[i]) + p.position_embedding.row(i);

    Mat x = cache.x0;
    cache.layers.resize(cfg.n_layers);
    for (uint32_t l = 0; l < cfg.n_layers; ++l) {
        LayerCache& lc = cache.layers[l];
        const LayerParams& lp = p.layers[l];
        lc.x_in = x;

        lc.ln1_out = layer_norm(x, lp.ln1_gamma, lp.ln1_beta, lc.ln1_xhat, lc.ln1_inv_std);
        lc.q.noalias() = lc.ln1_out * lp.wq;
        lc.q.rowwise() += lp.bq.transpose();
        lc.k.noalias() = lc.ln1_out * lp.wk;
        lc.k.rowwise() += lp.bk.transpose();
        lc.v.noalias() = lc.ln1_out * lp.wv;
        lc.v.rowwise() += lp.bv.transpose();

        lc.attn_probs.assign(cfg.n_heads, Mat());
        lc.attn_concat.resize(L, d);
        for (uint32_t h = 0; h < cfg.n_heads; ++h) {
            auto qh = lc.q.middleCols(h * hd, hd);
            auto kh = lc.k.middleCols(h * hd, hd);
            auto vh = lc.v.middleCols(h * hd, hd);
            Mat scores = qh * kh.transpose() * scale;  // bidirectional, no causal mask
            Mat& probs = lc.attn_probs[h];
            probs.resize(L, L);
            for (Eigen::Index r = 0; r < L; ++r) {
                double m = scores.row(r).maxCoeff();
                Eigen::RowVectorXd e = (scores.row(r).array() - m).exp();
                probs.row(r) = e / e.sum();
            }
            lc.attn_concat.middleCols(h * hd, hd).noalias() = probs * vh;
        }

        Mat attn_out = lc.attn_concat * lp.wo;
        attn_out.rowwise() += lp.bo.transpose();
        lc.res1 = x + attn_out;

        lc.ln2_out = layer_norm(lc.res1, lp.ln2_gamma, lp.ln2_beta, lc.ln2_xhat, lc.ln2_inv_std);
        lc.ff_pre.noalias() = lc.ln2_out * lp.w_ff1;
        lc.ff_pre.rowwise() += lp.b_ff1.transpose();
        lc.ff_act = lc.ff_pre.unaryExpr([](double v) { return gelu(v); });
        Mat ff_out = lc.ff_act * lp.w_ff2;
        ff_out.rowwise() += lp.b_ff2.transpose();
        x = lc.res1 + ff_out;
    }

    cache.x_final = x;
    Mat h = layer_norm(x, p.lnf_gamma, p.lnf_beta, cache.lnf_xhat, cache.lnf_inv_std);
    cache.logits.noalias() = h * p.w_out;
    cache.logits.rowwise() += p.b_out.transpose();
}

// Backpropagates d_logits through one cached sequence, accumulating into g.
void backward_one(const DenoiserParams& p, const SeqCache& cache, const Mat& d_logits,
                  DenoiserParams& g) {
    const DenoiserConfig& cfg = p.config;
    const auto L = cache.logits.rows();
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    const auto hd = static_cast<Eigen::Index>(cfg.head_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Mat h = cache.lnf_xhat;
    for (Eigen::Index r = 0; r < L; ++r)
        h.row(r) = h.row(r).array() * p.lnf_gamma.transpose().array() + p.lnf_beta.transpose().array();

    g.w_out.noalias() += h.transpose() * d_logits;
    g.b_out += d_logits.colwise().sum().transpose();
    Mat dh = d_logits * p.w_out.transpose();
    Mat dx = layer_norm_backward(dh, cache.lnf_xhat, cache.lnf_inv_std, p.lnf_gamma, g.lnf_gamma,
                                 g.lnf_beta);

    for (int l = static_cast<int>(cfg.n_layers) - 1; l >= 0; --l) {
        const LayerCache& lc = cache.layers[l];
        const LayerParams& lp = p.layers[l];
        LayerParams& gl = g.layers[l];

        // feed-forward branch
        Mat d_ff_out = dx;  // residual: dx flows to both branch and skip
        gl.w_ff2.noalias() += lc.ff_act.transpose() * d_ff_out;
        gl.b_ff2 += d_ff_out.colwise().sum().transpose();
        Mat d_act = d_ff_out * lp.w_ff2.transpose();
        Mat d_pre = d_act.array() * lc.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
        gl.w_ff1.noalias() += lc.ln2_out.transpose() * d_pre;
        gl.b_ff1 += d_pre.colwise().sum().transpose();
        Mat d_ln2_out = d_pre * lp.w_ff1.transpose();
        Mat d_res1 = dx + layer_norm_backward(d_ln2_out, lc.ln2_xhat, lc.ln2_inv_std, lp.ln2_gamma,
                                              gl.ln2_gamma, gl.ln2_beta);

        // attention branch
        Mat d_attn_out = d_res1;
        gl.wo.noalias() += lc.attn_concat.transpose() * d_attn_out;
        gl.bo += d_attn_out.colwise().sum().transpose();
        Mat d_concat = d_attn_out * lp.wo.transpose();

        Mat dq(L, d), dk(L, d), dv(L, d);
        for (uint32_t hid = 0; hid < cfg.n_heads; ++hid) {
            auto qh = lc.q.middleCols(hid * hd, hd);
            auto kh = lc.k.middleCols(hid * hd, hd);
            auto vh = lc.v.middleCols(hid * hd, hd);
            const Mat& probs = lc.attn_probs[hid];
            auto d_oh = d_concat.middleCols(hid * hd, hd);

            Mat d_probs = d_oh * vh.transpose();
            dv.middleCols(hid * hd, hd).noalias() = probs.transpose() * d_oh;

            // softmax backward row-wise: ds = (dp - rowsum(dp .* p)) .* p
            Mat d_scores(L, L);
            for (Eigen::Index r = 0; r < L; ++r) {
                double dot = (d_probs.row(r).array() * probs.row(r).array()).sum();
                d_scores.row(r) = (d_probs.row(r).array() - dot) * probs.row(r).array();
            }
            d_scores *= scale;
            dq.middleCols(hid * hd, hd).noalias() = d_scores * kh;
            dk.middleCols(hid * hd, hd).noalias() = d_scores.transpose() * qh;
        }

        gl.wq.noalias() += lc.ln1_out.transpose() * dq;
        gl.bq += dq.colwise().sum().transpose();
        gl.wk.noalias() += lc.ln1_out.transpose() * dk;
        gl.bk += dk.colwise().sum().transpose();
        gl.wv.noalias() += lc.ln1_out.transpose() * dv;
        gl.bv += dv.colwise().sum().transpose();

        Mat d_ln1_out = dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
        dx = d_res1 + layer_norm_backward(d_ln1_out, lc.ln1_xhat, lc.ln1_inv_std, lp.ln1_gamma,
                                          gl.ln1_gamma, gl.ln1_beta);
    }

    for (Eigen::Index i = 0; i < L; ++i) {
        g.token_embedding.row(cache.tokens[i]) += dx.row(i);
        g.position_embedding.row(i) += dx.row(i);
    }
}

}  // namespace

void DenoiserConfig::validate() const {
    if (vocab_size == 0) throw std::invalid_argument("denoiser config: vocab_size must be positive");
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || max_len == 0 || ff_mult == 0)
        throw std::invalid_argument("denoiser config: zero dimension");
    if (d_model % n_heads != 0)
        throw std::invalid_argument("denoiser config: d_model not divisible by n_heads");
}

namespace {

template <typename P, typename Fn>
void visit_params(P& p, Fn&& fn) {
    using MapT = std::conditional_t<std::is_const_v<P>, Eigen::Map<const Mat>, Eigen::Map<Mat>>;
    auto mat = [&](const std::string& name, auto& m) { fn(name, MapT(m.data(), m.rows(), m.cols())); };
    auto vec = [&](const std::string& name, auto& v) { fn(name, MapT(v.data(), v.size(), 1)); };
    mat("token_embedding", p.token_embedding);
    mat("position_embedding", p.position_embedding);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        std::string pre = "layer" + std::to_string(l) + ".";
        vec(pre + "ln1_gamma", p.layers[l].ln1_gamma);
        vec(pre + "ln1_beta", p.layers[l].ln1_beta);
        mat(pre + "wq", p.layers[l].wq);
        vec(pre + "bq", p.layers[l].bq);
        mat(pre + "wk", p.layers[l].wk);
        vec(pre + "bk", p.layers[l].bk);
        mat(pre + "wv", p.layers[l].wv);
        vec(pre + "bv", p.layers[l].bv);
        mat(pre + "wo", p.layers[l].wo);
        vec(pre + "bo", p.layers[l].bo);
        vec(pre + "ln2_gamma", p.layers[l].ln2_gamma);
        vec(pre + "ln2_beta", p.layers[l].ln2_beta);
        mat(pre + "w_ff1", p.layers[l].w_ff1);
        vec(pre + "b_ff1", p.layers[l].b_ff1);
        mat(pre + "w_ff2", p.layers[l].w_ff2);
        vec(pre + "b_ff2", p.layers[l].b_ff2);
    }
    vec("lnf_gamma", p.lnf_gamma);
    vec("lnf_beta", p.lnf_beta);
    mat("w_out", p.w_out);
    vec("b_out", p.b_out);
}

}  // namespace

void DenoiserParams::for_each(const std::function<void(const std::string&, Eigen::Map<Mat>)>& fn) {
    visit_params(*this, fn);
}

void DenoiserParams::for_each(
    const std::function<void(const std::string&, Eigen::Map<const Mat>)>& fn) const {
    visit_params(*this, fn);
}

DenoiserParams DenoiserParams::zeros_like() const {
    DenoiserParams z = *this;
    z.for_each([](const std::string&, Eigen::Map<Mat> m) { m.setZero(); });
    return z;
}

size_t DenoiserParams::parameter_count() const {
    size_t n = 0;
    for_each([&](const std::string&, Eigen::Map<const Mat> m) { n += static_cast<size_t>(m.size()); });
    return n;
}

uint64_t DenoiserParams::content_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for_each([&](const std::string&, Eigen::Map<const Mat> m) {
        const auto* bytes = reinterpret_cast<const uint8_t*>(m.data());
        size_t n = static_cast<size_t>(m.size()) * sizeof(double);
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    });
    return h;
}

DenoiserParams init_params(const DenoiserConfig& config, uint64_t seed) {
    config.validate();
    Rng rng(derive_seed(seed, "denoiser-init"));
    const double sd = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    auto randn = [&](Eigen::Index rows, Eigen::Index cols) {
        Mat m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = sd * rng.normal();
        return m;
    };

    DenoiserParams p;
    p.config = config;
    const auto d = static_cast<Eigen::Index>(config.d_model);
    const auto ff = static_cast<Eigen::Index>(config.ff_dim());
    p.token_embedding = randn(config.vocab_size, d);
    p.position_embedding = randn(config.max_len, d);
    p.layers.resize(config.n_layers);
    for (auto& l : p.layers) {
        l.ln1_gamma = Vec::Ones(d);
        l.ln1_beta = Vec::Zero(d);
        l.wq = randn(d, d);
        l.bq = Vec::Zero(d);
        l.wk = randn(d, d);
        l.bk = Vec::Zero(d);
        l.wv = randn(d, d);
        l.bv = Vec::Zero(d);
        l.wo = randn(d, d);
        l.bo = Vec::Zero(d);
        l.ln2_gamma = Vec::Ones(d);
        l.ln2_beta = Vec::Zero(d);
        l.w_ff1 = randn(d, ff);
        l.b_ff1 = Vec::Zero(ff);
        l.w_ff2 = randn(ff, d);
        l.b_ff2 = Vec::Zero(d);
    }
    p.lnf_gamma = Vec::Ones(d);
    p.lnf_beta = Vec::Zero(d);
    p.w_out = randn(d, config.vocab_size);
    p.b_out = Vec::Zero(config.vocab_size);
    return p;
}

LogitsGrid forward(const DenoiserParams& params, const std::vector<NoisySequence>& batch) {
    LogitsGrid grid;
    grid.reserve(batch.size());
    SeqCache cache;
    for (const auto& seq : batch) {
        forward_one(params, seq.tokens, cache);
        grid.push_back(cache.logits);
    }
    return grid;
}

LossGrads masked_cross_entropy(const DenoiserParams& params, const std::vector<NoisySequence>& batch) {
    if (batch.empty()) throw std::invalid_argument("masked_cross_entropy: empty batch");
    size_t contributing = 0;
    for (const auto& seq : batch) {
        if (!seq.origin) throw std::invalid_argument("masked_cross_entropy: batch element missing origin");
        if (!seq.masked_positions.empty()) ++contributing;
    }
    if (contributing == 0)
        throw std::invalid_argument("masked_cross_entropy: every mask set is empty, loss undefined");

    LossGrads out;
    out.grads = params.zeros_like();
    const double batch_scale = 1.0 / static_cast<double>(contributing);

    SeqCache cache;
    for (const auto& seq : batch) {
        if (seq.masked_positions.empty()) continue;
        forward_one(params, seq.tokens, cache);
        const auto L = cache.logits.rows();
        const auto V = cache.logits.cols();
        const double example_scale = batch_scale / static_cast<double>(seq.masked_positions.size());

        Mat d_logits = Mat::Zero(L, V);
        for (size_t pos : seq.masked_positions) {
            const auto r = static_cast<Eigen::Index>(pos);
            TokenId target = seq.origin->tokens[pos];
            double m = cache.logits.row(r).maxCoeff();
            Eigen::RowVectorXd e = (cache.logits.row(r).array() - m).exp();
            double z = e.sum();
            double log_z = m + std::log(z);
            out.loss += example_scale * (log_z - cache.logits(r, target));
            d_logits.row(r) = (e / z) * example_scale;
            d_logits(r, target) -= example_scale;
        }
        backward_one(params, cache, d_logits, out.grads);
    }
    return out;
}

double masked_cross_entropy_value(const LogitsGrid& logits, const std::vector<TokenSequence>& targets,
                                  const std::vector<std::vector<size_t>>& masks) {
    if (logits.size() != targets.size() || logits.size() != masks.size())
        throw std::invalid_argument("masked_cross_entropy_value: batch size mismatch");
    size_t contributing = 0;
    for (const auto& m : masks)
        if (!m.empty()) ++contributing;
    if (contributing == 0)
        throw std::invalid_argument("masked_cross_entropy_value: every mask set is empty");

    double loss = 0.0;
    for (size_t b = 0; b < logits.size(); ++b) {
        if (masks[b].empty()) continue;
        double seq_loss = 0.0;
        for (size_t pos : masks[b]) {
            const auto r = static_cast<Eigen::Index>(pos);
            double m = logits[b].row(r).maxCoeff();
            double log_z = m + std::log((logits[b].row(r).array() - m).exp().sum());
            seq_loss += log_z - logits[b](r, targets[b].tokens[pos]);
        }
        loss += seq_loss / static_cast<double>(masks[b].size());
    }
    return loss / static_cast<double>(contributing);
}

}  // namespace mdlab
