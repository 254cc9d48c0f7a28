#pragma once

#include <string>
#include <vector>

#include "mdlab/sequence.hpp"
#include "mdlab/synth.hpp"

namespace mdlab {

// Training data interchange: JSON lines, one {"prompt": ..., "response": ...}
// record per line.
std::vector<SynthRecord> load_records_jsonl(const std::string& path);
void save_records_jsonl(const std::vector<SynthRecord>& records, const std::string& path);

// Whitespace tokenization of both fields; prompt_len = prompt token count.
TokenSequence tokenize_record(const SynthRecord& record, const Vocabulary& vocab);
std::vector<TokenSequence> tokenize_records(const std::vector<SynthRecord>& records,
                                            const Vocabulary& vocab);

}  // namespace mdlab
