#include "eka/prompts.hpp"

#include "eka/common.hpp"

namespace eka {

namespace {

constexpr std::string_view kEkaTemplate =
    "Answer the given question. You can query from knowledge base provided to you to answer the "
    "question. You can query knowledge as many times as you want. The initial knowledge you need "
    "for the first think is between <knowledge>...</knowledge>. You must first conduct reasoning "
    "inside <think>...</think> relied on the initial knowledge. If you need to query knowledge, "
    "you can set a query statement between <query>...</query> to query from knowledge base after "
    "<think>...</think>. When you have the final answer, you can output the answer inside "
    "<answer>...</answer>. Question: {question}. <knowledge>{knowledge}</knowledge>. Assistant: ";

constexpr std::string_view kBaselineTemplate =
    "Answer the given question. You can query from knowledge base provided to you to answer the "
    "question. You can query knowledge as many times as you want. You must first conduct "
    "reasoning inside <think>...</think>. If you need to query knowledge, you can set a query "
    "statement between <query>...</query> to query from knowledge base after <think>...</think>. "
    "When you have the final answer, you can output the answer inside <answer>...</answer>. "
    "Question: {question}. Assistant: ";

constexpr std::string_view kQuestionSlot = "{question}";
constexpr std::string_view kKnowledgeSlot = "{knowledge}";

}  // namespace

std::string_view prompt_template_name(PromptTemplate t) {
    return t == PromptTemplate::Eka ? "eka" : "baseline";
}

PromptTemplate prompt_template_from_name(const std::string& name) {
    if (name == "eka") return PromptTemplate::Eka;
    if (name == "baseline") return PromptTemplate::Baseline;
    throw ConfigError("unknown prompt template: " + name);
}

std::string_view prompt_template_text(PromptTemplate t) {
    return t == PromptTemplate::Eka ? kEkaTemplate : kBaselineTemplate;
}

std::string render_prompt(PromptTemplate t, const std::string& question, const std::string& knowledge) {
    const std::string_view tpl = prompt_template_text(t);
    std::string out;
    out.reserve(tpl.size() + question.size() + knowledge.size());
    size_t i = 0;
    while (i < tpl.size()) {
        if (tpl.compare(i, kQuestionSlot.size(), kQuestionSlot) == 0) {
            out += question;
            i += kQuestionSlot.size();
        } else if (tpl.compare(i, kKnowledgeSlot.size(), kKnowledgeSlot) == 0) {
            out += knowledge;
            i += kKnowledgeSlot.size();
        } else {
            out += tpl[i++];
        }
    }
    return out;
}

}  // namespace eka
