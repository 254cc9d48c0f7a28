#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdlab/sequence.hpp"
#include "mdlab/vocab.hpp"

namespace mdlab {

// A template element is either a fixed token (possibly MASK) or a named slot
// substituted per example.
struct TemplateElement {
    enum class Kind { Literal, Slot };
    Kind kind = Kind::Literal;
    TokenId token = 0;
    std::string slot_name;

    static TemplateElement literal(TokenId t) { return {Kind::Literal, t, {}}; }
    static TemplateElement slot(std::string name) { return {Kind::Slot, 0, std::move(name)}; }
};

// Prompt template with designated mask spans and substitution slots. The text
// form is whitespace-separated: literal symbols, "{slot_name}" markers, and
// "<mask*k>" for k consecutive masks (plain "<mask>" is one).
struct PromptTemplate {
    std::vector<TemplateElement> elements;

    size_t size() const { return elements.size(); }
    bool has_masks(const Vocabulary& vocab) const;
    // maximal runs of MASK literals as [start, end) element ranges
    std::vector<std::pair<size_t, size_t>> mask_spans(const Vocabulary& vocab) const;
    size_t leading_literal_run(const Vocabulary& vocab) const;  // stops at the first slot

    static PromptTemplate parse(const std::string& text, const Vocabulary& vocab);
    static PromptTemplate load(const std::string& path, const Vocabulary& vocab);
    std::string render(const Vocabulary& vocab) const;
};

// Task inputs plus the reference response that conditions infilling.
struct FewShotExample {
    std::map<std::string, std::string> slots;
    std::string reference;
};

FewShotExample parse_example_json(const std::string& line);
std::vector<FewShotExample> load_examples_jsonl(const std::string& path);

// Template with one example's slot values substituted, before infilling.
// mask_positions (token space) align one-to-one with mask_elements (element
// space) so infilled tokens can be written back into the template.
struct SubstitutedTemplate {
    std::vector<TokenId> tokens;
    std::vector<size_t> mask_positions;
    std::vector<size_t> mask_elements;
};

// Throws if a slot value is missing or a slot value tokenizes to MASK.
SubstitutedTemplate substitute_slots(const std::vector<TemplateElement>& elements,
                                     const FewShotExample& example, const Vocabulary& vocab);

}  // namespace mdlab
