#pragma once

#include <string>
#include <vector>

#include "mdlab/vocab.hpp"

namespace mdlab {

enum class SynthTaskKind { Arithmetic, TemplateRecovery };

// Desk-scale instruction-following tasks. Arithmetic: "I a op b =" with a
// fixed instruction prefix I, op in {+, -} (minus is absolute difference so
// every answer stays a plain 3-digit rendering), zero-padded digit tokens.
// TemplateRecovery: fixed instruction prefix plus a 4-letter query; the
// response is the query reversed. Responses carry an explicit <eos> and <pad>
// tail so sequences in a task have one fixed width.
struct SynthTaskSpec {
    SynthTaskKind kind = SynthTaskKind::Arithmetic;
    std::vector<std::string> instruction;  // empty = task default prefix
    size_t size = 20000;                   // training pairs, drawn without repetition
    size_t held_out_cap = 512;             // most held-out combos kept (0 = all)
    uint64_t seed = 0;
};

struct SynthRecord {
    std::string prompt;
    std::string response;
};

struct SynthDataset {
    Vocabulary vocab;
    std::vector<SynthRecord> train;
    std::vector<SynthRecord> held_out;
    std::vector<std::string> instruction;  // resolved instruction prefix
};

// Deterministic per seed. Train and held-out splits are disjoint by
// construction: every (operation, operand) / query combination hashes into
// exactly one split. Throws if size exceeds the training-side combinations.
SynthDataset synth_task_generate(const SynthTaskSpec& spec);

const char* synth_task_name(SynthTaskKind kind);
SynthTaskKind synth_task_from_name(const std::string& name);

}  // namespace mdlab
