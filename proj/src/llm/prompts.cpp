#include "synesthete/llm/prompts.hpp"

namespace synesthete::llm {

namespace {

constexpr std::string_view kSlot = "{abc}";

const std::vector<PromptTemplate> kTemplates = {
    {TemplateId::features,
     "What musical features can you extract from the following musical piece written in ABC Notation? {abc}", 512},
    {TemplateId::emotion, "What emotion can you infer from this musical piece written in ABC Notation? {abc}", 256},
    {TemplateId::emotion3,
     "What emotion can you infer from this musical piece written in ABC Notation? Answer this question using only "
     "three words. {abc}",
     16},
    {TemplateId::imagery,
     "Based on the perceived emotion of the following musical piece written in ABC notation, and melodic "
     "structure/contour, describe a visual imagery people may see when hearing this music. Answer this question "
     "only with the text description of the image within 80 token. {abc}",
     80},
};

}  // namespace

const char* to_string(TemplateId id)
{
    switch (id) {
    case TemplateId::features: return "features";
    case TemplateId::emotion: return "emotion";
    case TemplateId::emotion3: return "emotion3";
    case TemplateId::imagery: return "imagery";
    }
    return "imagery";
}

TemplateId template_from_string(std::string_view name)
{
    for (const auto& t : kTemplates) {
        if (name == to_string(t.id)) return t.id;
    }
    throw std::invalid_argument("unknown prompt template '" + std::string(name) + "'");
}

const std::vector<PromptTemplate>& prompt_templates() { return kTemplates; }

const PromptTemplate& prompt_template(TemplateId id)
{
    for (const auto& t : kTemplates) {
        if (t.id == id) return t;
    }
    throw std::invalid_argument("unknown prompt template");
}

std::string build_prompt(TemplateId id, std::string_view abc)
{
    if (abc.empty()) throw std::invalid_argument("prompt needs non-empty ABC text");
    const std::string_view text = prompt_template(id).text;
    const auto slot = text.find(kSlot);
    std::string out;
    out.reserve(text.size() + abc.size());
    out.append(text.substr(0, slot));
    out.append(abc);
    out.append(text.substr(slot + kSlot.size()));
    return out;
}

std::string build_prompt(std::string_view id, std::string_view abc)
{
    return build_prompt(template_from_string(id), abc);
}

std::string abc_from_prompt(std::string_view prompt, TemplateId* id)
{
    // Longest prefix first: emotion3 extends emotion.
    const PromptTemplate* best = nullptr;
    std::size_t best_len = 0;
    for (const auto& t : kTemplates) {
        const auto prefix = t.text.substr(0, t.text.find(kSlot));
        const auto suffix = t.text.substr(t.text.find(kSlot) + kSlot.size());
        if (prompt.starts_with(prefix) && prompt.ends_with(suffix) && prefix.size() > best_len
            && prompt.size() >= prefix.size() + suffix.size()) {
            best = &t;
            best_len = prefix.size();
        }
    }
    if (best == nullptr) return {};
    if (id != nullptr) *id = best->id;
    const auto suffix_len = best->text.size() - best->text.find(kSlot) - kSlot.size();
    return std::string(prompt.substr(best_len, prompt.size() - best_len - suffix_len));
}

}  // namespace synesthete::llm
