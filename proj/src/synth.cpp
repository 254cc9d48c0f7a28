#include "mdlab/synth.hpp"

#include <algorithm>
#include <stdexcept>

#include "mdlab/rng.hpp"

namespace mdlab {

namespace {

constexpr uint32_t kArithmeticOperandRange = 110;  // operands 0..109, results fit 3 digits
constexpr uint32_t kQueryLetters = 4;

std::string render_digits3(uint32_t v) {
    std::string out;
    out += static_cast<char>('0' + v / 100 % 10);
    out += ' ';
    out += static_cast<char>('0' + v / 10 % 10);
    out += ' ';
    out += static_cast<char>('0' + v % 10);
    return out;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

std::string pad_tail(size_t pads) {
    std::string out = Vocabulary::kEosSymbol;
    for (size_t i = 0; i < pads; ++i) out += std::string(" ") + Vocabulary::kPadSymbol;
    return out;
}

std::vector<std::string> build_vocab_symbols(SynthTaskKind kind,
                                             const std::vector<std::string>& instruction) {
    std::vector<std::string> symbols = {Vocabulary::kMaskSymbol, Vocabulary::kEosSymbol,
                                        Vocabulary::kPadSymbol};
    for (char c = '0'; c <= '9'; ++c) symbols.emplace_back(1, c);
    if (kind == SynthTaskKind::Arithmetic) {
        symbols.emplace_back("+");
        symbols.emplace_back("-");
        symbols.emplace_back("=");
    } else {
        for (char c = 'a'; c <= 'z'; ++c) symbols.emplace_back(1, c);
    }
    for (const auto& w : instruction) {
        if (std::find(symbols.begin(), symbols.end(), w) == symbols.end()) symbols.push_back(w);
    }
    return symbols;
}

}  // namespace

const char* synth_task_name(SynthTaskKind kind) {
    return kind == SynthTaskKind::Arithmetic ? "arithmetic" : "template-recovery";
}

SynthTaskKind synth_task_from_name(const std::string& name) {
    if (name == "arithmetic") return SynthTaskKind::Arithmetic;
    if (name == "template-recovery") return SynthTaskKind::TemplateRecovery;
    throw std::invalid_argument("unknown synthetic task '" + name + "'");
}

SynthDataset synth_task_generate(const SynthTaskSpec& spec) {
    std::vector<std::string> instruction = spec.instruction;
    if (instruction.empty()) {
        instruction = spec.kind == SynthTaskKind::Arithmetic
                          ? std::vector<std::string>{"compute", "the", "answer", ":"}
                          : std::vector<std::string>{"repeat", "in", "reverse", ":"};
    }

    SynthDataset out{Vocabulary(build_vocab_symbols(spec.kind, instruction)), {}, {}, instruction};
    const std::string prefix = join(instruction);

    uint64_t combo_count;
    if (spec.kind == SynthTaskKind::Arithmetic) {
        combo_count = 2ull * kArithmeticOperandRange * kArithmeticOperandRange;
    } else {
        combo_count = 1;
        for (uint32_t i = 0; i < kQueryLetters; ++i) combo_count *= 26;
    }

    std::vector<uint64_t> train_ids, held_ids;
    for (uint64_t id = 0; id < combo_count; ++id) {
        bool held = derive_seed(spec.seed, "split", id) % 8 == 0;
        (held ? held_ids : train_ids).push_back(id);
    }
    if (spec.size > train_ids.size())
        throw std::invalid_argument("synth: size " + std::to_string(spec.size) +
                                    " exceeds the " + std::to_string(train_ids.size()) +
                                    " training combinations");

    auto shuffle = [](std::vector<uint64_t>& v, Rng& rng) {
        for (size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[static_cast<size_t>(rng.uniform_int(i))]);
    };
    Rng train_rng(derive_seed(spec.seed, "train-shuffle"));
    Rng held_rng(derive_seed(spec.seed, "held-shuffle"));
    shuffle(train_ids, train_rng);
    shuffle(held_ids, held_rng);
    train_ids.resize(spec.size);
    if (spec.held_out_cap > 0 && held_ids.size() > spec.held_out_cap)
        held_ids.resize(spec.held_out_cap);

    auto render = [&](uint64_t id) {
        SynthRecord rec;
        if (spec.kind == SynthTaskKind::Arithmetic) {
            uint32_t b = static_cast<uint32_t>(id % kArithmeticOperandRange);
            uint32_t a = static_cast<uint32_t>(id / kArithmeticOperandRange % kArithmeticOperandRange);
            bool plus = id / (kArithmeticOperandRange * kArithmeticOperandRange) == 0;
            uint32_t result = plus ? a + b : (a >= b ? a - b : b - a);
            rec.prompt = prefix + " " + render_digits3(a) + (plus ? " + " : " - ") +
                         render_digits3(b) + " =";
            rec.response = render_digits3(result) + " " + pad_tail(4);
        } else {
            std::string query, reversed;
            uint64_t rest = id;
            for (uint32_t i = 0; i < kQueryLetters; ++i) {
                char c = static_cast<char>('a' + rest % 26);
                rest /= 26;
                if (!query.empty()) query = query + " ";
                query += c;
                reversed = reversed.empty() ? std::string(1, c) : std::string(1, c) + " " + reversed;
            }
            rec.prompt = prefix + " " + query;
            rec.response = reversed + " " + pad_tail(3);
        }
        return rec;
    };

    out.train.reserve(train_ids.size());
    for (uint64_t id : train_ids) out.train.push_back(render(id));
    out.held_out.reserve(held_ids.size());
    for (uint64_t id : held_ids) out.held_out.push_back(render(id));
    return out;
}

}  // namespace mdlab
