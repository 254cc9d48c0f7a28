#include "mdlab/vocab.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mdlab {

Vocabulary::Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    if (symbols_.empty()) throw std::invalid_argument("vocabulary: empty symbol list");
    index_.reserve(symbols_.size());
    for (size_t i = 0; i < symbols_.size(); ++i) {
        const std::string& s = symbols_[i];
        if (s.empty()) throw std::invalid_argument("vocabulary: empty symbol at id " + std::to_string(i));
        for (char c : s) {
            if (std::isspace(static_cast<unsigned char>(c)))
                throw std::invalid_argument("vocabulary: symbol contains whitespace: '" + s + "'");
        }
        auto [it, inserted] = index_.emplace(s, static_cast<TokenId>(i));
        if (!inserted) throw std::invalid_argument("vocabulary: duplicate symbol '" + s + "'");
    }
    auto find_reserved = [&](const char* sym) {
        auto it = index_.find(sym);
        if (it == index_.end())
            throw std::invalid_argument(std::string("vocabulary: missing reserved symbol ") + sym);
        return it->second;
    };
    mask_id_ = find_reserved(kMaskSymbol);
    eos_id_ = find_reserved(kEosSymbol);
    pad_id_ = find_reserved(kPadSymbol);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("vocabulary: cannot open " + path);
    std::vector<std::string> symbols;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        symbols.push_back(line);
    }
    return Vocabulary(std::move(symbols));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("vocabulary: cannot write " + path);
    for (const auto& s : symbols_) out << s << "\n";
    if (!out) throw std::runtime_error("vocabulary: write failed for " + path);
}

const std::string& Vocabulary::symbol(TokenId id) const {
    if (id >= symbols_.size())
        throw std::out_of_range("vocabulary: token id " + std::to_string(id) + " out of range");
    return symbols_[id];
}

TokenId Vocabulary::id_of(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) throw std::invalid_argument("vocabulary: unknown symbol '" + symbol + "'");
    return it->second;
}

std::vector<TokenId> Vocabulary::encode(const std::string& text) const {
    std::vector<TokenId> out;
    std::istringstream is(text);
    std::string word;
    while (is >> word) out.push_back(id_of(word));
    return out;
}

std::string Vocabulary::decode(const std::vector<TokenId>& tokens) const {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += symbol(tokens[i]);
    }
    return out;
}

uint64_t Vocabulary::content_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : symbols_) {
        for (char c : s) {
            h ^= static_cast<uint8_t>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= static_cast<uint8_t>('\n');
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace mdlab
