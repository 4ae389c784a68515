#include "eka/eval_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "eka/common.hpp"
#include "eka/metrics.hpp"
#include "json.hpp"

namespace eka {

double renormalized_entropy(const std::vector<std::pair<std::string, double>>& alternatives) {
    if (alternatives.empty()) throw UserError("renormalized_entropy: no alternatives");
    // Stabilized softmax over logprobs; exact for a full distribution, a
    // renormalized approximation for a top-n slice.
    double max_lp = alternatives.front().second;
    for (const auto& [text, lp] : alternatives) max_lp = std::max(max_lp, lp);
    double z = 0.0;
    for (const auto& [text, lp] : alternatives) z += std::exp(lp - max_lp);
    double h = 0.0;
    for (const auto& [text, lp] : alternatives) {
        const double p = std::exp(lp - max_lp) / z;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

namespace {

struct EntropyPool {
    double sum = 0.0;
    size_t count = 0;
    size_t max_alternatives = 0;

    void add(const TokenRecord& token) {
        if (token.top_alternatives.empty()) return;
        sum += renormalized_entropy(token.top_alternatives);
        ++count;
        max_alternatives = std::max(max_alternatives, token.top_alternatives.size());
    }
};

std::string approximation_note(size_t max_alternatives) {
    return "top-" + std::to_string(max_alternatives) + " renormalized";
}

void pool_region_tokens(const Trajectory& trajectory, TagKind region, EntropyPool& pool) {
    for (const auto& segment : trajectory.segments) {
        if (segment.kind != region || !segment.token_span) continue;
        for (size_t i = segment.token_span->first; i < segment.token_span->second; ++i) {
            pool.add(trajectory.tokens[i]);
        }
    }
}

std::string format_double(double value) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.12g", value);
    return buffer;
}

constexpr TagKind kReportRegions[] = {TagKind::Think, TagKind::Query, TagKind::Answer};

}  // namespace

std::optional<RegionEntropy> region_entropy(const Trajectory& trajectory, TagKind region) {
    EntropyPool pool;
    pool_region_tokens(trajectory, region, pool);
    if (pool.count == 0) return std::nullopt;
    RegionEntropy out;
    out.region = region;
    out.mean_entropy = pool.sum / static_cast<double>(pool.count);
    out.token_count = pool.count;
    out.approximation_note = approximation_note(pool.max_alternatives);
    return out;
}

namespace {

std::string retrieved_text(const Trajectory& trajectory, const Corpus& corpus,
                           bool include_early) {
    std::vector<const RetrievedPassage*> passages;
    if (include_early) {
        for (const auto& p : trajectory.early_knowledge) passages.push_back(&p);
    }
    for (const auto& turn : trajectory.turns) {
        for (const auto& p : turn.passages) passages.push_back(&p);
    }
    std::string joined;
    for (const RetrievedPassage* passage : passages) {
        const Chunk* chunk = corpus.find_chunk(passage->chunk_id);
        if (chunk == nullptr) {
            throw UserError("report: unknown chunk id: " + passage->chunk_id);
        }
        if (!joined.empty()) joined += '\n';
        joined += chunk->text;
    }
    return joined;
}

}  // namespace

EvalReport assemble_report(const std::vector<Trajectory>& trajectories,
                           const std::vector<DatasetItem>& items, const ReportMeta& meta,
                           const Corpus& corpus, Embedder& embedder) {
    if (trajectories.size() != items.size()) {
        throw UserError("report: " + std::to_string(trajectories.size()) + " trajectories vs " +
                        std::to_string(items.size()) + " dataset items");
    }
    if (trajectories.empty()) throw UserError("report: nothing to report");

    EvalReport report;
    report.config_fingerprint = meta.config_fingerprint;
    report.dataset_fingerprint = meta.dataset_fingerprint;
    report.eka_enabled = meta.eka_enabled;

    double rs_sum = 0.0, rs_late_sum = 0.0;
    size_t rs_count = 0, rs_late_count = 0;
    std::map<TagKind, EntropyPool> pools;

    for (size_t i = 0; i < trajectories.size(); ++i) {
        const Trajectory& traj = trajectories[i];
        const DatasetItem& item = items[i];

        QuestionEval entry;
        entry.question = item.question;
        entry.answer = traj.final_answer;
        entry.turns = traj.turn_count;
        entry.termination = std::string(termination_name(traj.termination));
        const std::string answer_text = traj.final_answer.value_or("");
        entry.em = exact_match(answer_text, item.golden_answers);
        entry.f1 = f1(answer_text, item.golden_answers);

        if (item.gold_context) {
            const std::string all_text = retrieved_text(traj, corpus, true);
            if (!all_text.empty()) {
                entry.retrieval_similarity =
                    retrieval_similarity(all_text, *item.gold_context, embedder);
                rs_sum += *entry.retrieval_similarity;
                ++rs_count;
            }
            const std::string late_text = retrieved_text(traj, corpus, false);
            if (!late_text.empty()) {
                entry.retrieval_similarity_late =
                    retrieval_similarity(late_text, *item.gold_context, embedder);
                rs_late_sum += *entry.retrieval_similarity_late;
                ++rs_late_count;
            }
        }
        report.per_question.push_back(std::move(entry));

        for (const TagKind region : kReportRegions) {
            pool_region_tokens(traj, region, pools[region]);
        }
    }

    const double n = static_cast<double>(report.per_question.size());
    for (const auto& entry : report.per_question) {
        report.em += entry.em / n;
        report.f1 += entry.f1 / n;
        report.average_turns += entry.turns / n;
    }
    if (rs_count > 0) report.retrieval_similarity = rs_sum / static_cast<double>(rs_count);
    if (rs_late_count > 0) {
        report.retrieval_similarity_late = rs_late_sum / static_cast<double>(rs_late_count);
    }
    for (const TagKind region : kReportRegions) {
        const EntropyPool& pool = pools[region];
        if (pool.count == 0) continue;
        RegionEntropy entry;
        entry.region = region;
        entry.mean_entropy = pool.sum / static_cast<double>(pool.count);
        entry.token_count = pool.count;
        entry.approximation_note = approximation_note(pool.max_alternatives);
        report.region_entropies.push_back(std::move(entry));
    }
    return report;
}

namespace {

nlohmann::json optional_to_json(const std::optional<double>& value) {
    return value ? nlohmann::json(*value) : nlohmann::json();
}

std::optional<double> optional_from_json(const nlohmann::json& value) {
    if (value.is_null()) return std::nullopt;
    return value.get<double>();
}

}  // namespace

std::string report_to_jsonl(const EvalReport& report) {
    std::string out;
    for (const auto& entry : report.per_question) {
        nlohmann::json doc{{"type", "question"},
                           {"question", entry.question},
                           {"em", entry.em},
                           {"f1", entry.f1},
                           {"turns", entry.turns},
                           {"termination", entry.termination}};
        doc["answer"] = entry.answer ? nlohmann::json(*entry.answer) : nlohmann::json();
        doc["retrieval_similarity"] = optional_to_json(entry.retrieval_similarity);
        doc["retrieval_similarity_late"] = optional_to_json(entry.retrieval_similarity_late);
        out += doc.dump();
        out += '\n';
    }
    nlohmann::json aggregate{{"type", "aggregate"},
                             {"config_fingerprint", report.config_fingerprint},
                             {"dataset_fingerprint", report.dataset_fingerprint},
                             {"eka_enabled", report.eka_enabled},
                             {"questions", report.per_question.size()},
                             {"em", report.em},
                             {"f1", report.f1},
                             {"average_turns", report.average_turns}};
    aggregate["retrieval_similarity"] = optional_to_json(report.retrieval_similarity);
    aggregate["retrieval_similarity_late"] = optional_to_json(report.retrieval_similarity_late);
    nlohmann::json entropies = nlohmann::json::array();
    for (const auto& entry : report.region_entropies) {
        entropies.push_back({{"region", std::string(kind_name(entry.region))},
                             {"mean_entropy", entry.mean_entropy},
                             {"token_count", entry.token_count},
                             {"approximation_note", entry.approximation_note}});
    }
    aggregate["region_entropies"] = std::move(entropies);
    out += aggregate.dump();
    out += '\n';
    return out;
}

EvalReport report_from_jsonl(const std::string& text) {
    EvalReport report;
    bool saw_aggregate = false;
    std::istringstream in(text);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object() || !doc.contains("type")) {
            throw UserError("report line " + std::to_string(line_no) + ": not a typed record");
        }
        try {
            const std::string type = doc["type"].get<std::string>();
            if (type == "question") {
                QuestionEval entry;
                entry.question = doc.at("question").get<std::string>();
                entry.em = doc.at("em").get<double>();
                entry.f1 = doc.at("f1").get<double>();
                entry.turns = doc.at("turns").get<int>();
                entry.termination = doc.at("termination").get<std::string>();
                if (!doc.at("answer").is_null()) entry.answer = doc.at("answer").get<std::string>();
                entry.retrieval_similarity = optional_from_json(doc.at("retrieval_similarity"));
                entry.retrieval_similarity_late =
                    optional_from_json(doc.at("retrieval_similarity_late"));
                report.per_question.push_back(std::move(entry));
            } else if (type == "aggregate") {
                saw_aggregate = true;
                report.config_fingerprint = doc.at("config_fingerprint").get<std::string>();
                report.dataset_fingerprint = doc.at("dataset_fingerprint").get<std::string>();
                report.eka_enabled = doc.at("eka_enabled").get<bool>();
                report.em = doc.at("em").get<double>();
                report.f1 = doc.at("f1").get<double>();
                report.average_turns = doc.at("average_turns").get<double>();
                report.retrieval_similarity = optional_from_json(doc.at("retrieval_similarity"));
                report.retrieval_similarity_late =
                    optional_from_json(doc.at("retrieval_similarity_late"));
                for (const auto& item : doc.at("region_entropies")) {
                    RegionEntropy entry;
                    const std::string region = item.at("region").get<std::string>();
                    if (region == "think") {
                        entry.region = TagKind::Think;
                    } else if (region == "query") {
                        entry.region = TagKind::Query;
                    } else if (region == "answer") {
                        entry.region = TagKind::Answer;
                    } else {
                        throw UserError("report: unknown entropy region " + region);
                    }
                    entry.mean_entropy = item.at("mean_entropy").get<double>();
                    entry.token_count = item.at("token_count").get<size_t>();
                    entry.approximation_note = item.at("approximation_note").get<std::string>();
                    report.region_entropies.push_back(std::move(entry));
                }
            } else {
                throw UserError("report line " + std::to_string(line_no) + ": unknown type " + type);
            }
        } catch (const nlohmann::json::exception& e) {
            throw UserError("report line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!saw_aggregate) throw UserError("report has no aggregate record");
    return report;
}

void save_report(const EvalReport& report, const std::string& path) {
    write_file_atomic(path, report_to_jsonl(report));
}

EvalReport load_report(const std::string& path) { return report_from_jsonl(read_file(path)); }

std::string report_table(const EvalReport& report) {
    std::ostringstream out;
    char row[256];
    std::snprintf(row, sizeof(row), "%-4s  %-6s  %-6s  %-5s  %-16s  %s\n", "#", "EM", "F1",
                  "turns", "termination", "answer");
    out << row;
    for (size_t i = 0; i < report.per_question.size(); ++i) {
        const QuestionEval& entry = report.per_question[i];
        std::snprintf(row, sizeof(row), "%-4zu  %-6.4f  %-6.4f  %-5d  %-16s  %s\n", i + 1, entry.em,
                      entry.f1, entry.turns, entry.termination.c_str(),
                      entry.answer.value_or("-").c_str());
        out << row;
    }
    std::snprintf(row, sizeof(row), "%-4s  %-6.4f  %-6.4f  %-5.2f\n", "mean", report.em, report.f1,
                  report.average_turns);
    out << row;
    if (report.retrieval_similarity) {
        out << "retrieval similarity: " << format_double(*report.retrieval_similarity) << "\n";
    }
    if (report.retrieval_similarity_late) {
        out << "retrieval similarity (excluding early knowledge): "
            << format_double(*report.retrieval_similarity_late) << "\n";
    }
    for (const auto& entry : report.region_entropies) {
        out << "entropy[" << kind_name(entry.region) << "]: " << format_double(entry.mean_entropy)
            << " nats over " << entry.token_count << " tokens (" << entry.approximation_note
            << ")\n";
    }
    return out.str();
}

std::string entropy_csv(const std::vector<Trajectory>& trajectories) {
    // (turn, region) -> pooled entropy over every matching generated token
    std::map<std::pair<int, std::string>, EntropyPool> cells;
    for (const auto& traj : trajectories) {
        for (const auto& segment : traj.segments) {
            if (segment.kind == TagKind::Knowledge || !segment.token_span) continue;
            for (size_t i = segment.token_span->first; i < segment.token_span->second; ++i) {
                const TokenRecord& token = traj.tokens[i];
                if (token.top_alternatives.empty()) continue;
                cells[{token.turn, std::string(kind_name(segment.kind))}].add(token);
            }
        }
    }
    std::string csv = "step,region,mean_entropy,token_count\n";
    for (const auto& [key, pool] : cells) {
        csv += std::to_string(key.first) + "," + key.second + "," +
               format_double(pool.sum / static_cast<double>(pool.count)) + "," +
               std::to_string(pool.count) + "\n";
    }
    return csv;
}

ReportDelta compare_reports(const EvalReport& first, const EvalReport& second) {
    if (first.dataset_fingerprint != second.dataset_fingerprint) {
        throw UserError("compare: dataset fingerprints differ (" + first.dataset_fingerprint +
                        " vs " + second.dataset_fingerprint + ")");
    }
    ReportDelta delta;
    delta.em = second.em - first.em;
    delta.f1 = second.f1 - first.f1;
    delta.average_turns = second.average_turns - first.average_turns;
    if (first.retrieval_similarity && second.retrieval_similarity) {
        delta.retrieval_similarity = *second.retrieval_similarity - *first.retrieval_similarity;
    }
    if (first.retrieval_similarity_late && second.retrieval_similarity_late) {
        delta.retrieval_similarity_late =
            *second.retrieval_similarity_late - *first.retrieval_similarity_late;
    }
    for (const auto& a : first.region_entropies) {
        for (const auto& b : second.region_entropies) {
            if (a.region == b.region) {
                delta.region_entropy.emplace_back(std::string(kind_name(a.region)),
                                                  b.mean_entropy - a.mean_entropy);
            }
        }
    }
    return delta;
}

}  // namespace eka
