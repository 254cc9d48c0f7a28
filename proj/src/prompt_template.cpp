#include "mdlab/prompt_template.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mdlab {

bool PromptTemplate::has_masks(const Vocabulary& vocab) const {
    for (const auto& e : elements)
        if (e.kind == TemplateElement::Kind::Literal && e.token == vocab.mask_id()) return true;
    return false;
}

std::vector<std::pair<size_t, size_t>> PromptTemplate::mask_spans(const Vocabulary& vocab) const {
    std::vector<std::pair<size_t, size_t>> spans;
    size_t i = 0;
    while (i < elements.size()) {
        bool is_mask = elements[i].kind == TemplateElement::Kind::Literal &&
                       elements[i].token == vocab.mask_id();
        if (!is_mask) {
            ++i;
            continue;
        }
        size_t start = i;
        while (i < elements.size() && elements[i].kind == TemplateElement::Kind::Literal &&
               elements[i].token == vocab.mask_id())
            ++i;
        spans.emplace_back(start, i);
    }
    return spans;
}

size_t PromptTemplate::leading_literal_run(const Vocabulary&) const {
    size_t n = 0;
    while (n < elements.size() && elements[n].kind == TemplateElement::Kind::Literal) ++n;
    return n;
}

PromptTemplate PromptTemplate::parse(const std::string& text, const Vocabulary& vocab) {
    PromptTemplate tpl;
    std::istringstream is(text);
    std::string word;
    while (is >> word) {
        if (word.size() > 2 && word.front() == '{' && word.back() == '}') {
            std::string name = word.substr(1, word.size() - 2);
            if (name.empty()) throw std::invalid_argument("template: empty slot name");
            tpl.elements.push_back(TemplateElement::slot(name));
        } else if (word.rfind("<mask*", 0) == 0 && word.back() == '>') {
            std::string count_str = word.substr(6, word.size() - 7);
            size_t count = 0;
            try {
                count = std::stoul(count_str);
            } catch (const std::exception&) {
                throw std::invalid_argument("template: bad mask marker '" + word + "'");
            }
            if (count == 0) throw std::invalid_argument("template: mask count must be >= 1");
            for (size_t i = 0; i < count; ++i)
                tpl.elements.push_back(TemplateElement::literal(vocab.mask_id()));
        } else {
            tpl.elements.push_back(TemplateElement::literal(vocab.id_of(word)));
        }
    }
    if (tpl.elements.empty()) throw std::invalid_argument("template: empty");
    return tpl;
}

PromptTemplate PromptTemplate::load(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("template: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), vocab);
}

std::string PromptTemplate::render(const Vocabulary& vocab) const {
    std::string out;
    for (size_t i = 0; i < elements.size(); ++i) {
        if (i) out += ' ';
        if (elements[i].kind == TemplateElement::Kind::Slot)
            out += "{" + elements[i].slot_name + "}";
        else
            out += vocab.symbol(elements[i].token);
    }
    return out;
}

FewShotExample parse_example_json(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    FewShotExample ex;
    if (j.contains("slots"))
        for (const auto& [k, v] : j.at("slots").items()) ex.slots[k] = v.get<std::string>();
    ex.reference = j.at("reference").get<std::string>();
    if (ex.reference.empty()) throw std::invalid_argument("example: empty reference response");
    return ex;
}

std::vector<FewShotExample> load_examples_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("examples: cannot open " + path);
    std::vector<FewShotExample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_example_json(line));
    }
    if (out.empty()) throw std::runtime_error("examples: no records in " + path);
    return out;
}

SubstitutedTemplate substitute_slots(const std::vector<TemplateElement>& elements,
                                     const FewShotExample& example, const Vocabulary& vocab) {
    SubstitutedTemplate out;
    for (size_t e = 0; e < elements.size(); ++e) {
        const auto& el = elements[e];
        if (el.kind == TemplateElement::Kind::Literal) {
            if (el.token == vocab.mask_id()) {
                out.mask_positions.push_back(out.tokens.size());
                out.mask_elements.push_back(e);
            }
            out.tokens.push_back(el.token);
        } else {
            auto it = example.slots.find(el.slot_name);
            if (it == example.slots.end())
                throw std::invalid_argument("template: missing slot value for '" + el.slot_name + "'");
            std::vector<TokenId> ids = vocab.encode(it->second);
            if (ids.empty())
                throw std::invalid_argument("template: slot '" + el.slot_name + "' is empty");
            for (TokenId id : ids) {
                if (id == vocab.mask_id())
                    throw std::invalid_argument("template: slot value contains the mask symbol");
                out.tokens.push_back(id);
            }
        }
    }
    return out;
}

}  // namespace mdlab
