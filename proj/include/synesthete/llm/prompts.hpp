#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace synesthete::llm {

enum class TemplateId { features, emotion, emotion3, imagery };

const char* to_string(TemplateId id);

/// Throws std::invalid_argument for an unknown id.
TemplateId template_from_string(std::string_view name);

struct PromptTemplate {
    TemplateId id;
    std::string_view text;  // contains exactly one "{abc}"
    int token_budget;       // max output tokens requested from the backend
};

const PromptTemplate& prompt_template(TemplateId id);
const std::vector<PromptTemplate>& prompt_templates();

/// Substitutes the ABC text into the template. Throws std::invalid_argument
/// when `abc` is empty.
std::string build_prompt(TemplateId id, std::string_view abc);
std::string build_prompt(std::string_view id, std::string_view abc);

/// Recovers the ABC payload from a rendered prompt, or an empty string when
/// the prompt was not built from a known template.
std::string abc_from_prompt(std::string_view prompt, TemplateId* id = nullptr);

}  // namespace synesthete::llm
