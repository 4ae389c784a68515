#pragma once

#include <string>
#include <string_view>

namespace eka {

enum class PromptTemplate { Eka, Baseline };

std::string_view prompt_template_name(PromptTemplate t);  // "eka" / "baseline"
PromptTemplate prompt_template_from_name(const std::string& name);

// Template text with {question} / {knowledge} placeholders. The baseline
// template is the same text minus the initial-knowledge sentence, the
// "relied on the initial knowledge" clause, and the knowledge block: the
// minimal ablation of the early-knowledge injection. Copies of both live
// under assets/prompts/ and are asserted byte-identical by tests.
std::string_view prompt_template_text(PromptTemplate t);

// Splices question and knowledge into the template. Placeholder-shaped
// substrings inside the inputs are left alone. The knowledge argument is the
// newline-joined passage text without delimiters (the template carries them);
// it is ignored by the baseline template.
std::string render_prompt(PromptTemplate t, const std::string& question, const std::string& knowledge);

// Environment feedback injected in strict query mode when a query payload is
// not a JSON object with a "query" field.
inline constexpr std::string_view kInvalidQueryFeedback =
    "Invalid tool call format. Please use <query>{ \"query\": \"statement\" }</query> format.";

}  // namespace eka
