#include <doctest.h>

#include <numeric>
#include <set>

#include "mdlab/sampler.hpp"

using namespace mdlab;

namespace {

Vocabulary test_vocab(uint32_t size) {
    std::vector<std::string> symbols = {"<mask>", "<eos>", "<pad>"};
    for (uint32_t i = 3; i < size; ++i) symbols.push_back("t" + std::to_string(i));
    return Vocabulary(std::move(symbols));
}

DenoiserConfig small_config(uint32_t vocab_size) {
    DenoiserConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_len = 32;
    return cfg;
}

TokenSequence random_sequence(size_t len, size_t prompt_len, const Vocabulary& vocab, Rng& rng) {
    TokenSequence seq;
    seq.prompt_len = prompt_len;
    for (size_t i = 0; i < len; ++i)
        seq.tokens.push_back(static_cast<TokenId>(1 + rng.uniform_int(vocab.size() - 1)));
    return seq;
}

NoisySequence masked_template(const TokenSequence& seq, std::vector<size_t> masks,
                              const Vocabulary& vocab) {
    NoisySequence n;
    n.tokens = seq.tokens;
    n.prompt_len = seq.prompt_len;
    n.masked_positions = std::move(masks);
    n.t = n.masked_positions.empty() ? 0.0 : 0.5;
    for (size_t p : n.masked_positions) n.tokens[p] = vocab.mask_id();
    return n;
}

}  // namespace

TEST_CASE("unmask count schedule partitions the mask budget") {
    CHECK(unmask_count_schedule(128, 128) == std::vector<size_t>(128, 1));
    CHECK(unmask_count_schedule(5, 2) == std::vector<size_t>{3, 2});
    CHECK(unmask_count_schedule(0, 16).empty());
    CHECK(unmask_count_schedule(3, 100) == std::vector<size_t>{1, 1, 1});  // length min(steps, masked)

    for (size_t masked : {1u, 7u, 64u, 129u}) {
        for (uint32_t steps : {1u, 2u, 5u, 128u}) {
            auto counts = unmask_count_schedule(masked, steps);
            CHECK(counts.size() == std::min<size_t>(steps, masked));
            CHECK(std::accumulate(counts.begin(), counts.end(), size_t{0}) == masked);
            for (size_t i = 1; i < counts.size(); ++i) CHECK(counts[i - 1] >= counts[i]);
        }
    }
}

TEST_CASE("zero temperature commits argmax tokens without consuming randomness") {
    Vocabulary vocab = test_vocab(20);
    DenoiserParams params = init_params(small_config(vocab.size()), 5);
    Rng rng(6);
    TokenSequence seq = random_sequence(10, 2, vocab, rng);
    NoisySequence state = masked_template(seq, {3, 6, 7}, vocab);

    SamplerConfig cfg;
    cfg.temperature = 0.0;
    Rng r1(1), r2(999);
    NoisySequence out1 = denoise_step(params, state, 3, cfg, vocab, r1);
    NoisySequence out2 = denoise_step(params, state, 3, cfg, vocab, r2);
    CHECK(out1.tokens == out2.tokens);  // no rng dependence at T=0
    CHECK(out1.masked_positions.empty());

    Mat logits = forward(params, {state})[0];
    for (size_t p : {3, 6, 7}) {
        Eigen::Index argmax = 0;
        logits.row(static_cast<Eigen::Index>(p)).maxCoeff(&argmax);
        CHECK(out1.tokens[p] == static_cast<TokenId>(argmax));
    }
}

TEST_CASE("denoise step contracts") {
    Vocabulary vocab = test_vocab(20);
    DenoiserParams params = init_params(small_config(vocab.size()), 15);
    Rng rng(16);
    TokenSequence seq = random_sequence(12, 3, vocab, rng);
    NoisySequence state = masked_template(seq, {4, 5, 9}, vocab);

    SamplerConfig cfg;
    Rng step_rng(17);
    CHECK_THROWS_AS(denoise_step(params, state, 4, cfg, vocab, step_rng), std::invalid_argument);

    Rng a(18), b(18);
    NoisySequence out_a = denoise_step(params, state, 2, cfg, vocab, a);
    NoisySequence out_b = denoise_step(params, state, 2, cfg, vocab, b);
    CHECK(out_a.tokens == out_b.tokens);
    CHECK(out_a.masked_positions == out_b.masked_positions);
    CHECK(out_a.masked_positions.size() == 1);

    // previously clean positions never move
    for (size_t i = 0; i < seq.size(); ++i) {
        if (i == 4 || i == 5 || i == 9) continue;
        CHECK(out_a.tokens[i] == state.tokens[i]);
    }
}

TEST_CASE("generate obeys length, preservation, and determinism contracts") {
    Vocabulary vocab = test_vocab(20);
    DenoiserParams params = init_params(small_config(vocab.size()), 25);
    Rng rng(26);
    TokenSequence prompt = random_sequence(6, 6, vocab, rng);

    SamplerConfig cfg;
    cfg.gen_length = 0;
    GenerationResult empty = generate(params, prompt, cfg, vocab);
    CHECK(empty.sequence.tokens == prompt.tokens);
    CHECK(empty.trace.empty());

    cfg.gen_length = 8;
    cfg.steps = 1;
    GenerationResult one_shot = generate(params, prompt, cfg, vocab);
    CHECK(one_shot.trace.size() == 1);
    CHECK(one_shot.trace[0].positions.size() == 8);

    cfg.steps = 4;
    cfg.seed = 99;
    GenerationResult g1 = generate(params, prompt, cfg, vocab);
    GenerationResult g2 = generate(params, prompt, cfg, vocab);
    CHECK(g1.sequence.tokens == g2.sequence.tokens);
    REQUIRE(g1.sequence.size() == 14);
    for (size_t i = 0; i < 6; ++i) CHECK(g1.sequence.tokens[i] == prompt.tokens[i]);
    for (size_t i = 6; i < 14; ++i) CHECK(g1.sequence.tokens[i] != vocab.mask_id());

    cfg.gen_length = 100;
    CHECK_THROWS_AS(generate(params, prompt, cfg, vocab), std::invalid_argument);
}

TEST_CASE("mask monotonicity and conservation over a full run") {
    Vocabulary vocab = test_vocab(20);
    DenoiserParams params = init_params(small_config(vocab.size()), 35);
    Rng rng(36);

    for (int trial = 0; trial < 25; ++trial) {
        size_t len = 8 + rng.uniform_int(12);
        TokenSequence seq = random_sequence(len, 2, vocab, rng);
        std::vector<size_t> masks;
        for (size_t p = 0; p < len; ++p)
            if (rng.bernoulli(0.4)) masks.push_back(p);
        if (masks.empty()) masks.push_back(len / 2);
        NoisySequence tpl = masked_template(seq, masks, vocab);

        SamplerConfig cfg;
        cfg.steps = 3;
        cfg.seed = derive_seed(37, "trial", trial);
        GenerationResult res = infill(params, tpl, cfg, vocab);

        std::set<size_t> committed;
        for (const auto& step : res.trace)
            for (size_t p : step.positions) CHECK(committed.insert(p).second);  // never recommitted
        CHECK(committed == std::set<size_t>(masks.begin(), masks.end()));

        for (size_t i = 0; i < len; ++i) {
            if (committed.count(i)) {
                CHECK(res.sequence.tokens[i] != vocab.mask_id());
            } else {
                CHECK(res.sequence.tokens[i] == seq.tokens[i]);
            }
        }
    }
}

TEST_CASE("infill with zero masks is the identity") {
    Vocabulary vocab = test_vocab(20);
    DenoiserParams params = init_params(small_config(vocab.size()), 45);
    Rng rng(46);
    TokenSequence seq = random_sequence(9, 3, vocab, rng);
    NoisySequence tpl = masked_template(seq, {}, vocab);
    tpl.t = 0.0;

    SamplerConfig cfg;
    GenerationResult res = infill(params, tpl, cfg, vocab);
    CHECK(res.sequence.tokens == seq.tokens);
    CHECK(res.trace.empty());
}

TEST_CASE("prefix infilling conditioned on a clean suffix uses the stepped schedule") {
    Vocabulary vocab = test_vocab(20);
    DenoiserParams params = init_params(small_config(vocab.size()), 55);
    Rng rng(56);
    TokenSequence seq = random_sequence(16, 8, vocab, rng);
    std::vector<size_t> masks(8);
    std::iota(masks.begin(), masks.end(), size_t{0});
    NoisySequence tpl = masked_template(seq, masks, vocab);

    SamplerConfig cfg;
    cfg.steps = 3;
    GenerationResult res = infill(params, tpl, cfg, vocab);
    CHECK(res.trace.size() == 3);  // ceil(8/3) commits per call, <= steps calls
    size_t filled = 0;
    for (const auto& s : res.trace) filled += s.positions.size();
    CHECK(filled == 8);
    for (size_t i = 8; i < 16; ++i) CHECK(res.sequence.tokens[i] == seq.tokens[i]);
}

TEST_CASE("infill on an appended-mask template reproduces generate under a shared seed") {
    Vocabulary vocab = test_vocab(20);
    DenoiserParams params = init_params(small_config(vocab.size()), 65);
    Rng rng(66);
    TokenSequence prompt = random_sequence(7, 7, vocab, rng);

    SamplerConfig cfg;
    cfg.gen_length = 6;
    cfg.steps = 3;
    cfg.seed = 67;

    GenerationResult via_generate = generate(params, prompt, cfg, vocab);

    NoisySequence tpl;
    tpl.tokens = prompt.tokens;
    tpl.tokens.resize(13, vocab.mask_id());
    tpl.prompt_len = 7;
    for (size_t i = 7; i < 13; ++i) tpl.masked_positions.push_back(i);
    tpl.t = 1.0;
    GenerationResult via_infill = infill(params, tpl, cfg, vocab);

    CHECK(via_generate.sequence.tokens == via_infill.sequence.tokens);
    REQUIRE(via_generate.trace.size() == via_infill.trace.size());
    for (size_t s = 0; s < via_generate.trace.size(); ++s) {
        CHECK(via_generate.trace[s].positions == via_infill.trace[s].positions);
        CHECK(via_generate.trace[s].tokens == via_infill.trace[s].tokens);
    }
}

TEST_CASE("random strategy still partitions the mask set deterministically") {
    Vocabulary vocab = test_vocab(20);
    DenoiserParams params = init_params(small_config(vocab.size()), 75);
    Rng rng(76);
    TokenSequence seq = random_sequence(12, 4, vocab, rng);
    NoisySequence tpl = masked_template(seq, {0, 2, 5, 8, 9}, vocab);

    SamplerConfig cfg;
    cfg.strategy = UnmaskStrategy::Random;
    cfg.steps = 2;
    cfg.seed = 77;
    GenerationResult r1 = infill(params, tpl, cfg, vocab);
    GenerationResult r2 = infill(params, tpl, cfg, vocab);
    CHECK(r1.sequence.tokens == r2.sequence.tokens);

    std::set<size_t> committed;
    for (const auto& s : r1.trace)
        for (size_t p : s.positions) committed.insert(p);
    CHECK(committed == std::set<size_t>{0, 2, 5, 8, 9});
}
