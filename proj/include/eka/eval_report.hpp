#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eka/rollout.hpp"

namespace eka {

struct RegionEntropy {
    TagKind region = TagKind::Think;
    double mean_entropy = 0.0;  // nats; <= ln(n) under n renormalized alternatives
    size_t token_count = 0;
    std::string approximation_note;  // e.g. "top-5 renormalized"
};

// Entropy in nats of the renormalized alternative probabilities.
double renormalized_entropy(const std::vector<std::pair<std::string, double>>& alternatives);

// Mean renormalized entropy over generated tokens inside content spans of
// `region` segments. Delimiter tokens are outside every content span, and
// knowledge injections carry no generated tokens, so neither contributes.
// Tokens recorded without alternatives are skipped. Absent when no token
// qualifies (absent, not zero).
std::optional<RegionEntropy> region_entropy(const Trajectory& trajectory, TagKind region);

struct QuestionEval {
    std::string question;
    double em = 0.0;
    double f1 = 0.0;
    // Cosine against the gold context over all retrieved text / over in-loop
    // retrievals only (the pre-rollout block dropped). Absent without a gold
    // context or without any retrieved text.
    std::optional<double> retrieval_similarity;
    std::optional<double> retrieval_similarity_late;
    int turns = 0;
    std::string termination;
    std::optional<std::string> answer;
};

struct EvalReport {
    std::string config_fingerprint;
    std::string dataset_fingerprint;
    bool eka_enabled = false;
    std::vector<QuestionEval> per_question;
    // Aggregates are means of the per-question values; R-S means skip absent
    // entries. Region entropies pool tokens across the whole dataset.
    double em = 0.0;
    double f1 = 0.0;
    double average_turns = 0.0;
    std::optional<double> retrieval_similarity;
    std::optional<double> retrieval_similarity_late;
    std::vector<RegionEntropy> region_entropies;
};

struct ReportMeta {
    std::string config_fingerprint;
    std::string dataset_fingerprint;
    bool eka_enabled = false;
};

// Pairs trajectories with dataset items (equal order and length) and computes
// every report field. Chunk ids resolve against the corpus for the R-S text.
EvalReport assemble_report(const std::vector<Trajectory>& trajectories,
                           const std::vector<DatasetItem>& items, const ReportMeta& meta,
                           const Corpus& corpus, Embedder& embedder);

// Line-delimited: one {"type":"question",...} record per question, then a
// single {"type":"aggregate",...} record. Byte-stable for equal reports.
std::string report_to_jsonl(const EvalReport& report);
EvalReport report_from_jsonl(const std::string& text);

void save_report(const EvalReport& report, const std::string& path);
EvalReport load_report(const std::string& path);

// Column-aligned terminal summary.
std::string report_table(const EvalReport& report);

// step,region,mean_entropy,token_count pooled over the trajectories; step is
// the generating turn. Rows sorted by step then region name.
std::string entropy_csv(const std::vector<Trajectory>& trajectories);

struct ReportDelta {
    double em = 0.0;
    double f1 = 0.0;
    double average_turns = 0.0;
    std::optional<double> retrieval_similarity;
    std::optional<double> retrieval_similarity_late;
    // region name -> mean-entropy delta, for regions present in both reports
    std::vector<std::pair<std::string, double>> region_entropy;
};

// second minus first. Reports over different datasets do not compare: a
// dataset fingerprint mismatch is an error.
ReportDelta compare_reports(const EvalReport& first, const EvalReport& second);

}  // namespace eka
