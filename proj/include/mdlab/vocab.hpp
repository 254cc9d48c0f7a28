#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace mdlab {

using TokenId = uint32_t;

// Token id space with the three reserved symbols every sequence format relies
// on. Serialized as a text file, one printable symbol per line, line number =
// token id; "<mask>", "<eos>" and "<pad>" must appear somewhere in the file.
class Vocabulary {
  public:
    static constexpr const char* kMaskSymbol = "<mask>";
    static constexpr const char* kEosSymbol = "<eos>";
    static constexpr const char* kPadSymbol = "<pad>";

    // symbols[i] becomes token id i; throws if reserved symbols are missing,
    // duplicated, or any symbol contains whitespace.
    explicit Vocabulary(std::vector<std::string> symbols);

    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    uint32_t size() const { return static_cast<uint32_t>(symbols_.size()); }
    TokenId mask_id() const { return mask_id_; }
    TokenId eos_id() const { return eos_id_; }
    TokenId pad_id() const { return pad_id_; }

    const std::string& symbol(TokenId id) const;
    TokenId id_of(const std::string& symbol) const;  // throws on unknown symbol
    bool contains(const std::string& symbol) const { return index_.count(symbol) > 0; }

    // whitespace tokenization against the symbol table
    std::vector<TokenId> encode(const std::string& text) const;
    std::string decode(const std::vector<TokenId>& tokens) const;

    // FNV-1a over the serialized symbol list; identifies the vocabulary in
    // checkpoints.
    uint64_t content_hash() const;

  private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, TokenId> index_;
    TokenId mask_id_ = 0;
    TokenId eos_id_ = 0;
    TokenId pad_id_ = 0;
};

}  // namespace mdlab
