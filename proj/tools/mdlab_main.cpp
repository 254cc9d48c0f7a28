// Command-line surface for the masked diffusion laboratory. All randomness
// derives from one --seed; reruns with identical inputs produce byte-identical
// machine-readable outputs. Exit codes: 0 success, 1 usage/config error,
// 2 runtime failure.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdlab/checkpoint.hpp"
#include "mdlab/dataset.hpp"
#include "mdlab/evalkit.hpp"
#include "mdlab/manifest.hpp"
#include "mdlab/pipeline.hpp"
#include "mdlab/sampler.hpp"
#include "mdlab/synth.hpp"
#include "mdlab/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mdlab;

namespace {

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw std::invalid_argument("config: bad JSON in " + path + ": " + e.what());
    }
}

// flags > config file > defaults
template <typename T>
void fill_from_config(const json& cfg, const char* key, const CLI::Option* opt, T& var) {
    if (opt->count() == 0 && cfg.contains(key)) var = cfg.at(key).get<T>();
}

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

void write_snapshot(const json& resolved, const fs::path& out_dir, const std::string& command) {
    std::ofstream snap(out_dir / ("resolved_" + command + ".json"));
    if (!snap) throw std::runtime_error("cannot write resolved-config snapshot");
    snap << resolved.dump(2) << "\n";
}

UnmaskStrategy strategy_from_name(const std::string& name) {
    if (name == "confidence") return UnmaskStrategy::Confidence;
    if (name == "random") return UnmaskStrategy::Random;
    throw std::invalid_argument("unknown unmask strategy '" + name + "'");
}

ScorerKind scorer_from_name(const std::string& name) {
    if (name == "exact-match") return ScorerKind::ExactMatch;
    if (name == "numeric") return ScorerKind::NumericAbsError;
    throw std::invalid_argument("unknown scorer '" + name + "'");
}

MaskSampler sampler_from_name(const std::string& name) {
    if (name == "fixed_count") return MaskSampler::FixedCount;
    if (name == "bernoulli") return MaskSampler::Bernoulli;
    throw std::invalid_argument("unknown mask sampler '" + name + "'");
}

MaskingPolicy region_from_name(const std::string& name) {
    if (name == "full") return MaskingPolicy::full_sequence();
    if (name == "response") return MaskingPolicy::response_only();
    throw std::invalid_argument("unknown region '" + name + "' (full or response)");
}

struct LoadedModel {
    Checkpoint ckpt;
    Vocabulary vocab;
};

LoadedModel load_model(const std::string& ckpt_path, const std::string& vocab_path) {
    LoadedModel m{load_checkpoint(ckpt_path), Vocabulary::load(vocab_path)};
    if (m.ckpt.vocab_hash != m.vocab.content_hash())
        throw std::runtime_error("vocabulary hash mismatch between " + ckpt_path + " and " +
                                 vocab_path);
    return m;
}

std::string strip_spaces(const std::string& s) {
    std::string out;
    for (char c : s)
        if (c != ' ') out += c;
    return out;
}

// ----------------------------------------------------------------- synth ---

struct SynthCmd {
    std::string config_path, task = "arithmetic", instruction, out;
    uint64_t size = 20000, held_out_cap = 512, seed = 0;

    void run() const {
        SynthTaskSpec spec;
        spec.kind = synth_task_from_name(task);
        spec.size = size;
        spec.held_out_cap = held_out_cap;
        spec.seed = seed;
        if (!instruction.empty()) {
            std::istringstream is(instruction);
            std::string w;
            while (is >> w) spec.instruction.push_back(w);
        }

        SynthDataset data = synth_task_generate(spec);  // validate before any writes
        fs::path dir = prepare_out_dir(out);
        write_snapshot({{"command", "synth"},
                        {"task", task},
                        {"size", size},
                        {"held_out_cap", held_out_cap},
                        {"seed", seed},
                        {"instruction", instruction},
                        {"out", out}},
                       dir, "synth");

        data.vocab.save((dir / "vocab.txt").string());
        save_records_jsonl(data.train, (dir / "train.jsonl").string());
        save_records_jsonl(data.held_out, (dir / "heldout.jsonl").string());

        std::cout << "task " << task << ": " << data.train.size() << " train / "
                  << data.held_out.size() << " held-out pairs, vocab " << data.vocab.size()
                  << " symbols -> " << dir.string() << "\n";
    }
};

// ----------------------------------------------------------------- train ---

struct TrainCmd {
    std::string config_path, vocab_path, data_path, out, stages = "FS", sampler = "fixed_count";
    std::string init_ckpt;
    uint64_t seed = 0;
    uint32_t fs_epochs = 0, ro_epochs = 0;  // 0 = stage defaults (8 / 4)
    uint32_t batch_size = 32, warmup = 50;
    double peak_lr = 3e-4;
    uint32_t d_model = 128, n_layers = 4, n_heads = 4, max_len = 256, ff_mult = 4;

    void run() const {
        Vocabulary vocab = Vocabulary::load(vocab_path);
        std::vector<TokenSequence> dataset = tokenize_records(load_records_jsonl(data_path), vocab);

        std::vector<StageSpec> specs;
        std::istringstream is(stages);
        std::string kind;
        while (std::getline(is, kind, ',')) {
            StageSpec spec;
            if (kind == "FS")
                spec.kind = StageKind::FullSequence;
            else if (kind == "RO")
                spec.kind = StageKind::ResponseOnly;
            else
                throw std::invalid_argument("unknown stage kind '" + kind + "' (FS or RO)");
            spec.sampler = sampler_from_name(sampler);
            spec.config.epochs = spec.kind == StageKind::FullSequence ? fs_epochs : ro_epochs;
            spec.config.batch_size = batch_size;
            spec.config.peak_lr = peak_lr;
            spec.config.warmup_steps = warmup;
            spec.config.validate();
            specs.push_back(spec);
        }
        if (specs.empty()) throw std::invalid_argument("train: no stages given");

        DenoiserConfig mc;
        mc.vocab_size = vocab.size();
        mc.d_model = d_model;
        mc.n_layers = n_layers;
        mc.n_heads = n_heads;
        mc.max_len = max_len;
        mc.ff_mult = ff_mult;
        mc.validate();
        size_t longest = 0;
        for (const auto& s : dataset) longest = std::max(longest, s.size());
        if (longest > mc.max_len)
            throw std::invalid_argument("train: dataset sequence length " + std::to_string(longest) +
                                        " exceeds max_len " + std::to_string(mc.max_len));

        DenoiserParams params;
        if (!init_ckpt.empty()) {
            Checkpoint start = load_checkpoint(init_ckpt);
            if (start.vocab_hash != vocab.content_hash())
                throw std::runtime_error("train: init checkpoint vocabulary mismatch");
            params = std::move(start.params);
        } else {
            params = init_params(mc, derive_seed(seed, "init"));
        }

        fs::path dir = prepare_out_dir(out);
        write_snapshot({{"command", "train"},
                        {"vocab", vocab_path},
                        {"data", data_path},
                        {"out", out},
                        {"stages", stages},
                        {"sampler", sampler},
                        {"seed", seed},
                        {"fs_epochs", fs_epochs},
                        {"ro_epochs", ro_epochs},
                        {"batch_size", batch_size},
                        {"peak_lr", peak_lr},
                        {"warmup", warmup},
                        {"d_model", d_model},
                        {"n_layers", n_layers},
                        {"n_heads", n_heads},
                        {"max_len", max_len},
                        {"ff_mult", ff_mult},
                        {"init_checkpoint", init_ckpt}},
                       dir, "train");

        TrainRunResult result =
            run_training_pipeline(std::move(params), dataset, vocab, specs, seed, dir.string());
        result.log.save((dir / "trainlog.tsv").string());

        ExperimentManifest manifest;
        manifest.datasets["train"] = data_path;
        manifest.reports["trainlog"] = (dir / "trainlog.tsv").string();
        for (const auto& [tag, path] : result.checkpoints) manifest.checkpoints[tag] = path;
        manifest.save((dir / "manifest.json").string());

        for (const auto& [tag, path] : result.checkpoints) {
            Checkpoint ck = load_checkpoint(path);
            std::cout << "stage " << tag << " -> " << path << " param_hash=0x" << std::hex
                      << ck.param_hash() << std::dec << "\n";
        }
        std::cout << "steps logged: " << result.log.entries.size() << ", final loss "
                  << (result.log.entries.empty() ? 0.0 : result.log.entries.back().loss) << "\n";
    }
};

// ------------------------------------------------------- generate / infill --

struct GenerateCmd {
    std::string config_path, ckpt_path, vocab_path, prompt, out, trace_path;
    uint32_t gen_length = 128, steps = 128;
    double temperature = 0.8;
    std::string strategy = "confidence";
    uint64_t seed = 0;

    void run() const {
        LoadedModel m = load_model(ckpt_path, vocab_path);
        TokenSequence p;
        p.tokens = m.vocab.encode(prompt);
        p.prompt_len = p.tokens.size();

        SamplerConfig cfg;
        cfg.gen_length = gen_length;
        cfg.steps = steps;
        cfg.temperature = temperature;
        cfg.strategy = strategy_from_name(strategy);
        cfg.seed = derive_seed(seed, "generate");

        fs::path dir = prepare_out_dir(out);
        write_snapshot({{"command", "generate"},
                        {"checkpoint", ckpt_path},
                        {"vocab", vocab_path},
                        {"prompt", prompt},
                        {"gen_length", gen_length},
                        {"steps", steps},
                        {"temperature", temperature},
                        {"strategy", strategy},
                        {"seed", seed},
                        {"out", out},
                        {"trace", trace_path}},
                       dir, "generate");

        GenerationResult res = generate(m.ckpt.params, p, cfg, m.vocab);
        std::string completion = m.vocab.decode(res.sequence.tokens);
        json rec = {{"prompt", prompt},
                    {"completion", completion},
                    {"answer", extract_answer(res.sequence, m.vocab)},
                    {"tokens", res.sequence.tokens}};
        std::ofstream(dir / "generation.json") << rec.dump(2) << "\n";
        if (!trace_path.empty()) write_trace_jsonl(res.trace, (dir / trace_path).string());
        std::cout << completion << "\n";
    }
};

struct InfillCmd {
    std::string config_path, ckpt_path, vocab_path, template_path, template_text, out, trace_path;
    uint32_t steps = 128;
    double temperature = 0.8;
    uint64_t seed = 0;

    void run() const {
        LoadedModel m = load_model(ckpt_path, vocab_path);
        PromptTemplate tpl = template_text.empty() ? PromptTemplate::load(template_path, m.vocab)
                                                   : PromptTemplate::parse(template_text, m.vocab);
        for (const auto& e : tpl.elements)
            if (e.kind == TemplateElement::Kind::Slot)
                throw std::invalid_argument(
                    "infill: template has substitution slots; use the pipeline command");

        NoisySequence state;
        for (const auto& e : tpl.elements) {
            if (e.token == m.vocab.mask_id()) state.masked_positions.push_back(state.tokens.size());
            state.tokens.push_back(e.token);
        }
        state.prompt_len = state.tokens.size();
        state.t = state.masked_positions.empty()
                      ? 0.0
                      : static_cast<double>(state.masked_positions.size()) /
                            static_cast<double>(state.tokens.size());

        SamplerConfig cfg;
        cfg.steps = steps;
        cfg.temperature = temperature;
        cfg.seed = derive_seed(seed, "infill");

        fs::path dir = prepare_out_dir(out);
        write_snapshot({{"command", "infill"},
                        {"checkpoint", ckpt_path},
                        {"vocab", vocab_path},
                        {"template", template_path},
                        {"template_text", template_text},
                        {"steps", steps},
                        {"temperature", temperature},
                        {"seed", seed},
                        {"out", out},
                        {"trace", trace_path}},
                       dir, "infill");

        GenerationResult res = infill(m.ckpt.params, state, cfg, m.vocab);
        std::string completed = m.vocab.decode(res.sequence.tokens);
        json rec = {{"template", tpl.render(m.vocab)},
                    {"completed", completed},
                    {"tokens", res.sequence.tokens}};
        std::ofstream(dir / "infill.json") << rec.dump(2) << "\n";
        if (!trace_path.empty()) write_trace_jsonl(res.trace, (dir / trace_path).string());
        std::cout << completed << "\n";
    }
};

// ------------------------------------------------- pipeline / sw-infill ----

struct PipelineCmd {
    std::string config_path, ckpt_path, vocab_path, template_path, examples_path, out;
    std::string scorer = "exact-match";
    uint64_t num_candidates = 8, seed = 0;
    uint32_t infill_steps = 128, val_steps = 32, val_gen_length = 8;
    double infill_temperature = 0.8, val_temperature = 0.8;

    PipelineConfig make_config() const {
        PipelineConfig cfg;
        cfg.num_candidates = num_candidates;
        cfg.seed = derive_seed(seed, "pipeline");
        cfg.infill_sampler.steps = infill_steps;
        cfg.infill_sampler.temperature = infill_temperature;
        cfg.infill_sampler.gen_length = 0;
        cfg.validation_sampler.steps = val_steps;
        cfg.validation_sampler.temperature = val_temperature;
        cfg.validation_sampler.gen_length = val_gen_length;
        cfg.scorer = scorer_from_name(scorer);
        return cfg;
    }

    void run() const {
        LoadedModel m = load_model(ckpt_path, vocab_path);
        PromptTemplate tpl = PromptTemplate::load(template_path, m.vocab);
        std::vector<FewShotExample> examples = load_examples_jsonl(examples_path);
        PipelineConfig cfg = make_config();

        fs::path dir = prepare_out_dir(out);
        write_snapshot({{"command", "pipeline"},
                        {"checkpoint", ckpt_path},
                        {"vocab", vocab_path},
                        {"template", template_path},
                        {"examples", examples_path},
                        {"num_candidates", num_candidates},
                        {"scorer", scorer},
                        {"seed", seed},
                        {"infill_steps", infill_steps},
                        {"infill_temperature", infill_temperature},
                        {"val_steps", val_steps},
                        {"val_gen_length", val_gen_length},
                        {"val_temperature", val_temperature},
                        {"out", out}},
                       dir, "pipeline");

        PipelineResult res = run_infill_pipeline(m.ckpt.params, tpl, examples, cfg, m.vocab);
        write_candidate_report(res.candidates, m.vocab, (dir / "candidate_report.jsonl").string());
        write_selected_prompt(res.best, m.vocab, (dir / "selected_prompt.json").string());

        for (const auto& c : res.candidates) {
            PromptTemplate view{c.elements};
            std::cout << "candidate " << c.provenance.candidate_index << " score " << *c.score
                      << ": " << view.render(m.vocab) << "\n";
        }
        PromptTemplate best_view{res.best.elements};
        std::cout << "selected candidate " << res.best.provenance.candidate_index << " (score "
                  << *res.best.score << ", " << res.infill_calls
                  << " infill calls): " << best_view.render(m.vocab) << "\n";
    }
};

struct SwInfillCmd {
    PipelineCmd base;  // shares model/template/example/sampler flags
    uint64_t window = 8, stride = 4, mask_size = 8;

    void run() const {
        LoadedModel m = load_model(base.ckpt_path, base.vocab_path);
        PromptTemplate tpl = PromptTemplate::load(base.template_path, m.vocab);
        std::vector<FewShotExample> examples = load_examples_jsonl(base.examples_path);
        PipelineConfig cfg = base.make_config();

        fs::path dir = prepare_out_dir(base.out);
        write_snapshot({{"command", "sw-infill"},
                        {"checkpoint", base.ckpt_path},
                        {"vocab", base.vocab_path},
                        {"template", base.template_path},
                        {"examples", base.examples_path},
                        {"window", window},
                        {"stride", stride},
                        {"mask_size", mask_size},
                        {"scorer", base.scorer},
                        {"seed", base.seed},
                        {"infill_steps", base.infill_steps},
                        {"infill_temperature", base.infill_temperature},
                        {"val_steps", base.val_steps},
                        {"val_gen_length", base.val_gen_length},
                        {"val_temperature", base.val_temperature},
                        {"out", base.out}},
                       dir, "sw-infill");

        SlidingWindowResult res = sliding_window_infill(m.ckpt.params, tpl, window, stride,
                                                        mask_size, examples, cfg, m.vocab);
        write_candidate_report(res.candidates, m.vocab, (dir / "sw_report.jsonl").string());
        write_selected_prompt(res.best, m.vocab, (dir / "selected_prompt.json").string());

        std::cout << res.window_offsets.size()
                  << " windows over the editable prefix; baseline score "
                  << *res.candidates[0].score << ", selected candidate "
                  << res.best.provenance.candidate_index << " score " << *res.best.score << "\n";
        PromptTemplate best_view{res.best.elements};
        std::cout << best_view.render(m.vocab) << "\n";
    }
};

// -------------------------------------------------------------- ppl / eval --

struct PplCmd {
    std::string config_path, ckpt_path, vocab_path, data_path, out, region = "full";
    uint64_t mc_samples = 2000, seed = 0, limit = 0;
    double sigma_max = 10.0;

    void run() const {
        LoadedModel m = load_model(ckpt_path, vocab_path);
        std::vector<SynthRecord> records = load_records_jsonl(data_path);
        if (limit > 0 && records.size() > limit) records.resize(limit);
        std::vector<TokenSequence> seqs = tokenize_records(records, m.vocab);
        MaskingPolicy policy = region_from_name(region);
        NoiseSchedule sched{sigma_max};

        fs::path dir = prepare_out_dir(out);
        write_snapshot({{"command", "ppl"},
                        {"checkpoint", ckpt_path},
                        {"vocab", vocab_path},
                        {"data", data_path},
                        {"mc_samples", mc_samples},
                        {"region", region},
                        {"sigma_max", sigma_max},
                        {"seed", seed},
                        {"limit", limit},
                        {"out", out}},
                       dir, "ppl");

        LogitsFn model = denoiser_logits_fn(m.ckpt.params);
        std::ofstream per_seq(dir / "ppl.jsonl");
        for (size_t i = 0; i < seqs.size(); ++i) {
            PPLEstimate e = diffusion_ppl(model, seqs[i], mc_samples, sched, policy, m.vocab,
                                          derive_seed(seed, "ppl-seq", i));
            json rec = {{"index", i},
                        {"ppl", e.ppl},
                        {"nelbo_per_token", e.nelbo_per_token},
                        {"mc_samples", e.mc_samples},
                        {"standard_error", e.standard_error}};
            per_seq << rec.dump() << "\n";
        }
        PPLEstimate pooled =
            diffusion_ppl_pooled(model, seqs, mc_samples, sched, policy, m.vocab, seed);
        pooled.save_kv((dir / "ppl_pooled.kv").string());
        json pooled_json = {{"ppl", pooled.ppl},
                            {"nelbo_per_token", pooled.nelbo_per_token},
                            {"mc_samples", pooled.mc_samples},
                            {"standard_error", pooled.standard_error},
                            {"sequences", seqs.size()}};
        std::ofstream(dir / "ppl_pooled.json") << pooled_json.dump(2) << "\n";

        std::cout << "stage " << m.ckpt.stage_tag << ", region " << region << ": pooled PPL "
                  << pooled.ppl << " (nelbo/token " << pooled.nelbo_per_token << " +- "
                  << pooled.standard_error << ", K=" << mc_samples << ", " << seqs.size()
                  << " sequences)\n";
    }
};

struct EvalCmd {
    std::string config_path, ckpt_path, vocab_path, data_path, out;
    uint32_t gen_length = 8, steps = 32;
    double temperature = 0.8;
    uint64_t seed = 0, limit = 0;

    void run() const {
        LoadedModel m = load_model(ckpt_path, vocab_path);
        std::vector<SynthRecord> records = load_records_jsonl(data_path);
        if (limit > 0 && records.size() > limit) records.resize(limit);

        fs::path dir = prepare_out_dir(out);
        write_snapshot({{"command", "eval"},
                        {"checkpoint", ckpt_path},
                        {"vocab", vocab_path},
                        {"data", data_path},
                        {"gen_length", gen_length},
                        {"steps", steps},
                        {"temperature", temperature},
                        {"seed", seed},
                        {"limit", limit},
                        {"out", out}},
                       dir, "eval");

        SamplerConfig cfg;
        cfg.gen_length = gen_length;
        cfg.steps = steps;
        cfg.temperature = temperature;

        MetricReport report;
        report.count = records.size();
        std::vector<double> predicted, reference;
        std::ofstream detail(dir / "eval_detail.jsonl");
        size_t hits = 0;
        for (size_t i = 0; i < records.size(); ++i) {
            TokenSequence prompt;
            prompt.tokens = m.vocab.encode(records[i].prompt);
            prompt.prompt_len = prompt.tokens.size();
            cfg.seed = derive_seed(seed, "eval", i);
            GenerationResult gen = generate(m.ckpt.params, prompt, cfg, m.vocab);

            std::string answer = extract_answer(gen.sequence, m.vocab);
            std::string ref_answer = extract_answer_text(records[i].response);
            int em = exact_match(answer, ref_answer);
            hits += static_cast<size_t>(em);

            json rec = {{"index", i}, {"answer", answer}, {"reference", ref_answer}, {"em", em}};
            detail << rec.dump() << "\n";

            // numeric answer pairs feed the correlation metrics
            try {
                size_t used_p = 0, used_r = 0;
                std::string ps = strip_spaces(answer), rs = strip_spaces(ref_answer);
                double pv = std::stod(ps, &used_p);
                double rv = std::stod(rs, &used_r);
                if (used_p == ps.size() && used_r == rs.size()) {
                    predicted.push_back(pv);
                    reference.push_back(rv);
                }
            } catch (const std::exception&) {
            }
        }
        report.em = records.empty() ? 0.0 : static_cast<double>(hits) / records.size();
        if (predicted.size() >= 2) {
            try {
                RankCorrelations rc = rank_correlations(predicted, reference);
                report.pearson = rc.pearson;
                report.spearman = rc.spearman;
                report.kendall = rc.kendall;
            } catch (const std::invalid_argument&) {
                // constant vectors: coefficients stay undefined
            }
        }
        report.save_kv((dir / "metrics.kv").string());
        std::ofstream(dir / "metrics.jsonl") << report.to_json() << "\n";
        std::cout << "stage " << m.ckpt.stage_tag << ": EM " << report.em << " over "
                  << report.count << " examples";
        if (report.spearman) std::cout << ", spearman " << *report.spearman;
        std::cout << "\n";
    }
};

struct InspectCmd {
    std::string ckpt_path;

    void run() const {
        Checkpoint ck = load_checkpoint(ckpt_path);
        const DenoiserConfig& c = ck.params.config;
        std::cout << "stage_tag:   " << ck.stage_tag << "\n"
                  << "config:      vocab=" << c.vocab_size << " d_model=" << c.d_model
                  << " layers=" << c.n_layers << " heads=" << c.n_heads << " max_len=" << c.max_len
                  << " ff_mult=" << c.ff_mult << "\n"
                  << "parameters:  " << ck.params.parameter_count() << "\n"
                  << "param_hash:  0x" << std::hex << ck.param_hash() << "\n"
                  << "vocab_hash:  0x" << ck.vocab_hash << std::dec << "\n"
                  << "rng_state:   " << ck.rng_state << "\n";
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mdlab: masked diffusion language-model laboratory"};
    app.require_subcommand(1);

    auto synth_cmd = std::make_shared<SynthCmd>();
    auto* synth_sc = app.add_subcommand("synth", "generate a synthetic task dataset");
    synth_sc->add_option("--config", synth_cmd->config_path, "JSON config file");
    auto* so_task = synth_sc->add_option("--task", synth_cmd->task, "arithmetic | template-recovery");
    auto* so_size = synth_sc->add_option("--size", synth_cmd->size, "training pairs");
    auto* so_cap =
        synth_sc->add_option("--held-out-cap", synth_cmd->held_out_cap, "max held-out pairs (0 = all)");
    auto* so_seed = synth_sc->add_option("--seed", synth_cmd->seed, "root seed");
    auto* so_instr = synth_sc->add_option("--instruction", synth_cmd->instruction,
                                          "instruction prefix tokens (space separated)");
    auto* so_out = synth_sc->add_option("--out", synth_cmd->out, "output directory");
    synth_sc->callback([=]() {
        json cfg = load_config_file(synth_cmd->config_path);
        fill_from_config(cfg, "task", so_task, synth_cmd->task);
        fill_from_config(cfg, "size", so_size, synth_cmd->size);
        fill_from_config(cfg, "held_out_cap", so_cap, synth_cmd->held_out_cap);
        fill_from_config(cfg, "seed", so_seed, synth_cmd->seed);
        fill_from_config(cfg, "instruction", so_instr, synth_cmd->instruction);
        fill_from_config(cfg, "out", so_out, synth_cmd->out);
        if (synth_cmd->out.empty()) throw std::invalid_argument("synth: --out is required");
        synth_cmd->run();
    });

    auto train_cmd = std::make_shared<TrainCmd>();
    auto* train_sc = app.add_subcommand("train", "run the staged fine-tuning pipeline");
    train_sc->add_option("--config", train_cmd->config_path, "JSON config file");
    auto* to_vocab = train_sc->add_option("--vocab", train_cmd->vocab_path, "vocabulary file");
    auto* to_data = train_sc->add_option("--data", train_cmd->data_path, "training JSONL");
    auto* to_out = train_sc->add_option("--out", train_cmd->out, "output directory");
    auto* to_stages = train_sc->add_option("--stages", train_cmd->stages, "comma list of FS,RO");
    auto* to_sampler =
        train_sc->add_option("--mask-sampler", train_cmd->sampler, "fixed_count | bernoulli");
    auto* to_seed = train_sc->add_option("--seed", train_cmd->seed, "root seed");
    auto* to_fse = train_sc->add_option("--fs-epochs", train_cmd->fs_epochs, "0 = default 8");
    auto* to_roe = train_sc->add_option("--ro-epochs", train_cmd->ro_epochs, "0 = default 4");
    auto* to_bs = train_sc->add_option("--batch-size", train_cmd->batch_size, "");
    auto* to_lr = train_sc->add_option("--peak-lr", train_cmd->peak_lr, "");
    auto* to_wu = train_sc->add_option("--warmup", train_cmd->warmup, "warmup steps");
    auto* to_dm = train_sc->add_option("--d-model", train_cmd->d_model, "");
    auto* to_nl = train_sc->add_option("--n-layers", train_cmd->n_layers, "");
    auto* to_nh = train_sc->add_option("--n-heads", train_cmd->n_heads, "");
    auto* to_ml = train_sc->add_option("--max-len", train_cmd->max_len, "");
    auto* to_ff = train_sc->add_option("--ff-mult", train_cmd->ff_mult, "");
    auto* to_init = train_sc->add_option("--init-checkpoint", train_cmd->init_ckpt,
                                         "start from an existing checkpoint");
    train_sc->callback([=]() {
        json cfg = load_config_file(train_cmd->config_path);
        fill_from_config(cfg, "vocab", to_vocab, train_cmd->vocab_path);
        fill_from_config(cfg, "data", to_data, train_cmd->data_path);
        fill_from_config(cfg, "out", to_out, train_cmd->out);
        fill_from_config(cfg, "stages", to_stages, train_cmd->stages);
        fill_from_config(cfg, "sampler", to_sampler, train_cmd->sampler);
        fill_from_config(cfg, "seed", to_seed, train_cmd->seed);
        fill_from_config(cfg, "fs_epochs", to_fse, train_cmd->fs_epochs);
        fill_from_config(cfg, "ro_epochs", to_roe, train_cmd->ro_epochs);
        fill_from_config(cfg, "batch_size", to_bs, train_cmd->batch_size);
        fill_from_config(cfg, "peak_lr", to_lr, train_cmd->peak_lr);
        fill_from_config(cfg, "warmup", to_wu, train_cmd->warmup);
        fill_from_config(cfg, "d_model", to_dm, train_cmd->d_model);
        fill_from_config(cfg, "n_layers", to_nl, train_cmd->n_layers);
        fill_from_config(cfg, "n_heads", to_nh, train_cmd->n_heads);
        fill_from_config(cfg, "max_len", to_ml, train_cmd->max_len);
        fill_from_config(cfg, "ff_mult", to_ff, train_cmd->ff_mult);
        fill_from_config(cfg, "init_checkpoint", to_init, train_cmd->init_ckpt);
        if (train_cmd->vocab_path.empty() || train_cmd->data_path.empty() || train_cmd->out.empty())
            throw std::invalid_argument("train: --vocab, --data and --out are required");
        train_cmd->run();
    });

    auto gen_cmd = std::make_shared<GenerateCmd>();
    auto* gen_sc = app.add_subcommand("generate", "denoise a response after a clean prompt");
    gen_sc->add_option("--config", gen_cmd->config_path, "JSON config file");
    auto* go_ck = gen_sc->add_option("--checkpoint", gen_cmd->ckpt_path, "");
    auto* go_v = gen_sc->add_option("--vocab", gen_cmd->vocab_path, "");
    auto* go_p = gen_sc->add_option("--prompt", gen_cmd->prompt, "prompt text");
    auto* go_gl = gen_sc->add_option("--gen-length", gen_cmd->gen_length, "");
    auto* go_st = gen_sc->add_option("--steps", gen_cmd->steps, "");
    auto* go_t = gen_sc->add_option("--temperature", gen_cmd->temperature, "");
    auto* go_sg = gen_sc->add_option("--strategy", gen_cmd->strategy, "confidence | random");
    auto* go_sd = gen_sc->add_option("--seed", gen_cmd->seed, "");
    auto* go_out = gen_sc->add_option("--out", gen_cmd->out, "");
    auto* go_tr = gen_sc->add_option("--trace", gen_cmd->trace_path, "per-step trace JSONL name");
    gen_sc->callback([=]() {
        json cfg = load_config_file(gen_cmd->config_path);
        fill_from_config(cfg, "checkpoint", go_ck, gen_cmd->ckpt_path);
        fill_from_config(cfg, "vocab", go_v, gen_cmd->vocab_path);
        fill_from_config(cfg, "prompt", go_p, gen_cmd->prompt);
        fill_from_config(cfg, "gen_length", go_gl, gen_cmd->gen_length);
        fill_from_config(cfg, "steps", go_st, gen_cmd->steps);
        fill_from_config(cfg, "temperature", go_t, gen_cmd->temperature);
        fill_from_config(cfg, "strategy", go_sg, gen_cmd->strategy);
        fill_from_config(cfg, "seed", go_sd, gen_cmd->seed);
        fill_from_config(cfg, "out", go_out, gen_cmd->out);
        fill_from_config(cfg, "trace", go_tr, gen_cmd->trace_path);
        if (gen_cmd->ckpt_path.empty() || gen_cmd->vocab_path.empty() || gen_cmd->out.empty())
            throw std::invalid_argument("generate: --checkpoint, --vocab and --out are required");
        gen_cmd->run();
    });

    auto inf_cmd = std::make_shared<InfillCmd>();
    auto* inf_sc = app.add_subcommand("infill", "fill the masked spans of a template");
    inf_sc->add_option("--config", inf_cmd->config_path, "JSON config file");
    auto* io_ck = inf_sc->add_option("--checkpoint", inf_cmd->ckpt_path, "");
    auto* io_v = inf_sc->add_option("--vocab", inf_cmd->vocab_path, "");
    auto* io_tpl = inf_sc->add_option("--template", inf_cmd->template_path, "template file");
    auto* io_txt = inf_sc->add_option("--template-text", inf_cmd->template_text, "inline template");
    auto* io_st = inf_sc->add_option("--steps", inf_cmd->steps, "");
    auto* io_t = inf_sc->add_option("--temperature", inf_cmd->temperature, "");
    auto* io_sd = inf_sc->add_option("--seed", inf_cmd->seed, "");
    auto* io_out = inf_sc->add_option("--out", inf_cmd->out, "");
    auto* io_tr = inf_sc->add_option("--trace", inf_cmd->trace_path, "");
    inf_sc->callback([=]() {
        json cfg = load_config_file(inf_cmd->config_path);
        fill_from_config(cfg, "checkpoint", io_ck, inf_cmd->ckpt_path);
        fill_from_config(cfg, "vocab", io_v, inf_cmd->vocab_path);
        fill_from_config(cfg, "template", io_tpl, inf_cmd->template_path);
        fill_from_config(cfg, "template_text", io_txt, inf_cmd->template_text);
        fill_from_config(cfg, "steps", io_st, inf_cmd->steps);
        fill_from_config(cfg, "temperature", io_t, inf_cmd->temperature);
        fill_from_config(cfg, "seed", io_sd, inf_cmd->seed);
        fill_from_config(cfg, "out", io_out, inf_cmd->out);
        fill_from_config(cfg, "trace", io_tr, inf_cmd->trace_path);
        if (inf_cmd->ckpt_path.empty() || inf_cmd->vocab_path.empty() || inf_cmd->out.empty())
            throw std::invalid_argument("infill: --checkpoint, --vocab and --out are required");
        if (inf_cmd->template_path.empty() && inf_cmd->template_text.empty())
            throw std::invalid_argument("infill: --template or --template-text is required");
        inf_cmd->run();
    });

    auto pipe_cmd = std::make_shared<PipelineCmd>();
    auto* pipe_sc = app.add_subcommand("pipeline", "propose, validate, and select infilled prompts");
    pipe_sc->add_option("--config", pipe_cmd->config_path, "JSON config file");
    auto* po_ck = pipe_sc->add_option("--checkpoint", pipe_cmd->ckpt_path, "");
    auto* po_v = pipe_sc->add_option("--vocab", pipe_cmd->vocab_path, "");
    auto* po_tpl = pipe_sc->add_option("--template", pipe_cmd->template_path, "");
    auto* po_ex = pipe_sc->add_option("--examples", pipe_cmd->examples_path, "few-shot JSONL");
    auto* po_n = pipe_sc->add_option("--num-candidates", pipe_cmd->num_candidates, "");
    auto* po_scr = pipe_sc->add_option("--scorer", pipe_cmd->scorer, "exact-match | numeric");
    auto* po_sd = pipe_sc->add_option("--seed", pipe_cmd->seed, "");
    auto* po_is = pipe_sc->add_option("--infill-steps", pipe_cmd->infill_steps, "");
    auto* po_it = pipe_sc->add_option("--infill-temperature", pipe_cmd->infill_temperature, "");
    auto* po_vs = pipe_sc->add_option("--val-steps", pipe_cmd->val_steps, "");
    auto* po_vg = pipe_sc->add_option("--val-gen-length", pipe_cmd->val_gen_length, "");
    auto* po_vt = pipe_sc->add_option("--val-temperature", pipe_cmd->val_temperature, "");
    auto* po_out = pipe_sc->add_option("--out", pipe_cmd->out, "");
    pipe_sc->callback([=]() {
        json cfg = load_config_file(pipe_cmd->config_path);
        fill_from_config(cfg, "checkpoint", po_ck, pipe_cmd->ckpt_path);
        fill_from_config(cfg, "vocab", po_v, pipe_cmd->vocab_path);
        fill_from_config(cfg, "template", po_tpl, pipe_cmd->template_path);
        fill_from_config(cfg, "examples", po_ex, pipe_cmd->examples_path);
        fill_from_config(cfg, "num_candidates", po_n, pipe_cmd->num_candidates);
        fill_from_config(cfg, "scorer", po_scr, pipe_cmd->scorer);
        fill_from_config(cfg, "seed", po_sd, pipe_cmd->seed);
        fill_from_config(cfg, "infill_steps", po_is, pipe_cmd->infill_steps);
        fill_from_config(cfg, "infill_temperature", po_it, pipe_cmd->infill_temperature);
        fill_from_config(cfg, "val_steps", po_vs, pipe_cmd->val_steps);
        fill_from_config(cfg, "val_gen_length", po_vg, pipe_cmd->val_gen_length);
        fill_from_config(cfg, "val_temperature", po_vt, pipe_cmd->val_temperature);
        fill_from_config(cfg, "out", po_out, pipe_cmd->out);
        if (pipe_cmd->ckpt_path.empty() || pipe_cmd->vocab_path.empty() ||
            pipe_cmd->template_path.empty() || pipe_cmd->examples_path.empty() ||
            pipe_cmd->out.empty())
            throw std::invalid_argument(
                "pipeline: --checkpoint, --vocab, --template, --examples and --out are required");
        pipe_cmd->run();
    });

    auto sw_cmd = std::make_shared<SwInfillCmd>();
    auto* sw_sc = app.add_subcommand("sw-infill", "sliding-window refinement of an existing prompt");
    sw_sc->add_option("--config", sw_cmd->base.config_path, "JSON config file");
    auto* wo_ck = sw_sc->add_option("--checkpoint", sw_cmd->base.ckpt_path, "");
    auto* wo_v = sw_sc->add_option("--vocab", sw_cmd->base.vocab_path, "");
    auto* wo_tpl = sw_sc->add_option("--template", sw_cmd->base.template_path, "");
    auto* wo_ex = sw_sc->add_option("--examples", sw_cmd->base.examples_path, "");
    auto* wo_w = sw_sc->add_option("--window", sw_cmd->window, "");
    auto* wo_s = sw_sc->add_option("--stride", sw_cmd->stride, "");
    auto* wo_m = sw_sc->add_option("--mask", sw_cmd->mask_size, "");
    auto* wo_scr = sw_sc->add_option("--scorer", sw_cmd->base.scorer, "");
    auto* wo_sd = sw_sc->add_option("--seed", sw_cmd->base.seed, "");
    auto* wo_is = sw_sc->add_option("--infill-steps", sw_cmd->base.infill_steps, "");
    auto* wo_vs = sw_sc->add_option("--val-steps", sw_cmd->base.val_steps, "");
    auto* wo_vg = sw_sc->add_option("--val-gen-length", sw_cmd->base.val_gen_length, "");
    auto* wo_vt = sw_sc->add_option("--val-temperature", sw_cmd->base.val_temperature, "");
    auto* wo_out = sw_sc->add_option("--out", sw_cmd->base.out, "");
    sw_sc->callback([=]() {
        json cfg = load_config_file(sw_cmd->base.config_path);
        fill_from_config(cfg, "checkpoint", wo_ck, sw_cmd->base.ckpt_path);
        fill_from_config(cfg, "vocab", wo_v, sw_cmd->base.vocab_path);
        fill_from_config(cfg, "template", wo_tpl, sw_cmd->base.template_path);
        fill_from_config(cfg, "examples", wo_ex, sw_cmd->base.examples_path);
        fill_from_config(cfg, "window", wo_w, sw_cmd->window);
        fill_from_config(cfg, "stride", wo_s, sw_cmd->stride);
        fill_from_config(cfg, "mask_size", wo_m, sw_cmd->mask_size);
        fill_from_config(cfg, "scorer", wo_scr, sw_cmd->base.scorer);
        fill_from_config(cfg, "seed", wo_sd, sw_cmd->base.seed);
        fill_from_config(cfg, "infill_steps", wo_is, sw_cmd->base.infill_steps);
        fill_from_config(cfg, "val_steps", wo_vs, sw_cmd->base.val_steps);
        fill_from_config(cfg, "val_gen_length", wo_vg, sw_cmd->base.val_gen_length);
        fill_from_config(cfg, "val_temperature", wo_vt, sw_cmd->base.val_temperature);
        fill_from_config(cfg, "out", wo_out, sw_cmd->base.out);
        if (sw_cmd->base.ckpt_path.empty() || sw_cmd->base.vocab_path.empty() ||
            sw_cmd->base.template_path.empty() || sw_cmd->base.examples_path.empty() ||
            sw_cmd->base.out.empty())
            throw std::invalid_argument(
                "sw-infill: --checkpoint, --vocab, --template, --examples and --out are required");
        sw_cmd->run();
    });

    auto ppl_cmd = std::make_shared<PplCmd>();
    auto* ppl_sc = app.add_subcommand("ppl", "Monte-Carlo diffusion perplexity");
    ppl_sc->add_option("--config", ppl_cmd->config_path, "JSON config file");
    auto* lo_ck = ppl_sc->add_option("--checkpoint", ppl_cmd->ckpt_path, "");
    auto* lo_v = ppl_sc->add_option("--vocab", ppl_cmd->vocab_path, "");
    auto* lo_d = ppl_sc->add_option("--data", ppl_cmd->data_path, "sequences JSONL");
    auto* lo_k = ppl_sc->add_option("--mc-samples", ppl_cmd->mc_samples, "");
    auto* lo_r = ppl_sc->add_option("--region", ppl_cmd->region, "full | response");
    auto* lo_sm = ppl_sc->add_option("--sigma-max", ppl_cmd->sigma_max, "");
    auto* lo_sd = ppl_sc->add_option("--seed", ppl_cmd->seed, "");
    auto* lo_li = ppl_sc->add_option("--limit", ppl_cmd->limit, "max sequences (0 = all)");
    auto* lo_out = ppl_sc->add_option("--out", ppl_cmd->out, "");
    ppl_sc->callback([=]() {
        json cfg = load_config_file(ppl_cmd->config_path);
        fill_from_config(cfg, "checkpoint", lo_ck, ppl_cmd->ckpt_path);
        fill_from_config(cfg, "vocab", lo_v, ppl_cmd->vocab_path);
        fill_from_config(cfg, "data", lo_d, ppl_cmd->data_path);
        fill_from_config(cfg, "mc_samples", lo_k, ppl_cmd->mc_samples);
        fill_from_config(cfg, "region", lo_r, ppl_cmd->region);
        fill_from_config(cfg, "sigma_max", lo_sm, ppl_cmd->sigma_max);
        fill_from_config(cfg, "seed", lo_sd, ppl_cmd->seed);
        fill_from_config(cfg, "limit", lo_li, ppl_cmd->limit);
        fill_from_config(cfg, "out", lo_out, ppl_cmd->out);
        if (ppl_cmd->ckpt_path.empty() || ppl_cmd->vocab_path.empty() ||
            ppl_cmd->data_path.empty() || ppl_cmd->out.empty())
            throw std::invalid_argument("ppl: --checkpoint, --vocab, --data and --out are required");
        ppl_cmd->run();
    });

    auto eval_cmd = std::make_shared<EvalCmd>();
    auto* eval_sc = app.add_subcommand("eval", "exact match and rank correlations on held-out data");
    eval_sc->add_option("--config", eval_cmd->config_path, "JSON config file");
    auto* eo_ck = eval_sc->add_option("--checkpoint", eval_cmd->ckpt_path, "");
    auto* eo_v = eval_sc->add_option("--vocab", eval_cmd->vocab_path, "");
    auto* eo_d = eval_sc->add_option("--data", eval_cmd->data_path, "");
    auto* eo_gl = eval_sc->add_option("--gen-length", eval_cmd->gen_length, "");
    auto* eo_st = eval_sc->add_option("--steps", eval_cmd->steps, "");
    auto* eo_t = eval_sc->add_option("--temperature", eval_cmd->temperature, "");
    auto* eo_sd = eval_sc->add_option("--seed", eval_cmd->seed, "");
    auto* eo_li = eval_sc->add_option("--limit", eval_cmd->limit, "");
    auto* eo_out = eval_sc->add_option("--out", eval_cmd->out, "");
    eval_sc->callback([=]() {
        json cfg = load_config_file(eval_cmd->config_path);
        fill_from_config(cfg, "checkpoint", eo_ck, eval_cmd->ckpt_path);
        fill_from_config(cfg, "vocab", eo_v, eval_cmd->vocab_path);
        fill_from_config(cfg, "data", eo_d, eval_cmd->data_path);
        fill_from_config(cfg, "gen_length", eo_gl, eval_cmd->gen_length);
        fill_from_config(cfg, "steps", eo_st, eval_cmd->steps);
        fill_from_config(cfg, "temperature", eo_t, eval_cmd->temperature);
        fill_from_config(cfg, "seed", eo_sd, eval_cmd->seed);
        fill_from_config(cfg, "limit", eo_li, eval_cmd->limit);
        fill_from_config(cfg, "out", eo_out, eval_cmd->out);
        if (eval_cmd->ckpt_path.empty() || eval_cmd->vocab_path.empty() ||
            eval_cmd->data_path.empty() || eval_cmd->out.empty())
            throw std::invalid_argument("eval: --checkpoint, --vocab, --data and --out are required");
        eval_cmd->run();
    });

    auto inspect_cmd = std::make_shared<InspectCmd>();
    auto* inspect_sc =
        app.add_subcommand("inspect", "print a checkpoint's config, stage, and hashes");
    inspect_sc->add_option("--checkpoint", inspect_cmd->ckpt_path, "")->required();
    inspect_sc->callback([=]() { inspect_cmd->run(); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
