#include "mdlab/dataset.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mdlab {

std::vector<SynthRecord> load_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("dataset: cannot open " + path);
    std::vector<SynthRecord> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("dataset: bad JSON at " + path + ":" + std::to_string(line_no) +
                                     ": " + e.what());
        }
        out.push_back({j.at("prompt").get<std::string>(), j.at("response").get<std::string>()});
    }
    if (out.empty()) throw std::runtime_error("dataset: no records in " + path);
    return out;
}

void save_records_jsonl(const std::vector<SynthRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("dataset: cannot write " + path);
    for (const auto& r : records) {
        nlohmann::json j;
        j["prompt"] = r.prompt;
        j["response"] = r.response;
        out << j.dump() << "\n";
    }
    if (!out) throw std::runtime_error("dataset: write failed for " + path);
}

TokenSequence tokenize_record(const SynthRecord& record, const Vocabulary& vocab) {
    TokenSequence seq;
    seq.tokens = vocab.encode(record.prompt);
    seq.prompt_len = seq.tokens.size();
    std::vector<TokenId> response = vocab.encode(record.response);
    seq.tokens.insert(seq.tokens.end(), response.begin(), response.end());
    seq.validate(vocab);
    return seq;
}

std::vector<TokenSequence> tokenize_records(const std::vector<SynthRecord>& records,
                                            const Vocabulary& vocab) {
    std::vector<TokenSequence> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(tokenize_record(r, vocab));
    return out;
}

}  // namespace mdlab
