#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "eka/llm_backend.hpp"
#include "eka/prompts.hpp"
#include "eka/retrieval.hpp"
#include "eka/rl_math.hpp"
#include "eka/tag_protocol.hpp"

namespace eka {

enum class RewardKind { ExactMatch, F1 };

std::string_view reward_kind_name(RewardKind kind);  // "em" / "f1"
RewardKind reward_kind_from_name(const std::string& name);

struct RolloutConfig {
    int max_turns = 8;  // B
    bool eka_enabled = true;
    bool strict_query_format = false;
    RewardKind reward_kind = RewardKind::ExactMatch;
    PromptTemplate prompt_template = PromptTemplate::Eka;
    RetrieverConfig retriever;
    BackendConfig backend;
    int max_tokens_per_segment = 1024;
    int total_token_budget = 4096;
    double temperature = 0.0;
    int top_logprobs = 5;
    uint64_t seed = 0;

    // eka_enabled requires the eka template; budgets must be positive.
    void validate() const;
};

// Short stable digest of the behavior-relevant config fields; reports refuse
// to compare across differing fingerprints.
std::string config_fingerprint(const RolloutConfig& config);

enum class Termination { Answered, BudgetExhausted, Malformed };

std::string_view termination_name(Termination t);
Termination termination_from_name(const std::string& name);

// One generated token with its byte span in the raw rollout text and the turn
// that produced it. Knowledge injections are environment text and carry no
// token records.
struct TokenRecord {
    std::string text;
    double logprob = 0.0;
    std::vector<std::pair<std::string, double>> top_alternatives;
    size_t begin = 0;
    size_t end = 0;
    int turn = 0;
};

struct TurnRecord {
    int index = 0;          // b, 1-based
    std::string generated;  // y_b, exactly as emitted
    std::string stop;       // "</query>", "</answer>", "eos", or "length"
    std::optional<std::string> query;     // raw query content (Search turns)
    bool invalid_query = false;           // strict mode rejected the payload
    std::vector<RetrievedPassage> passages;
    std::optional<std::string> injected;  // knowledge content fed back, unwrapped
};

struct Trajectory {
    std::string question;
    bool eka_enabled = false;
    std::string prompt;  // fully rendered, knowledge included when eka
    std::vector<RetrievedPassage> early_knowledge;
    std::string raw_text;  // generated text + injected knowledge blocks
    std::vector<TaggedSegment> segments;
    std::vector<Action> actions;  // leading implicit Search when eka
    std::vector<TokenRecord> tokens;
    std::vector<TurnRecord> turns;
    std::vector<std::string> malformed;
    int turn_count = 0;  // loop iterations; the implicit early Search is not one
    std::optional<std::string> final_answer;
    Termination termination = Termination::Malformed;
    uint64_t seed = 0;
    std::string config_fingerprint;
};

// Backend failure mid-rollout; carries whatever was recorded before it.
class RolloutError : public std::runtime_error {
public:
    RolloutError(const std::string& message, Trajectory partial)
        : std::runtime_error(message), partial_(std::move(partial)) {}

    const Trajectory& partial() const { return partial_; }

private:
    Trajectory partial_;
};

// Runs the iterative retrieve/think/search/answer loop against one question.
// With eka_enabled the prompt carries the early retrieval inside knowledge
// delimiters before the first generation; otherwise the baseline template.
// Shares the immutable index; one engine per concurrent rollout.
class RolloutEngine {
public:
    RolloutEngine(const Index& index, std::shared_ptr<Backend> backend, RolloutConfig config);

    Trajectory run(const std::string& question);

private:
    const Index& index_;
    std::shared_ptr<Backend> backend_;
    RolloutConfig config_;
    std::string fingerprint_;
};

// Reward gate: the configured text metric against the golds when the rollout
// answered AND its pipeline is grammatical; 0 otherwise.
double reward(const Trajectory& trajectory, const std::vector<std::string>& golds,
              RewardKind kind);

struct GroupMember {
    Trajectory trajectory;  // partial when failed
    double reward = 0.0;
    double advantage = 0.0;
    bool failed = false;
    std::string error;
};

struct GroupRollout {
    std::vector<GroupMember> members;  // slot order
    std::vector<double> rewards;
    AdvantageVector advantages;
};

// Per-slot backend supplier; slot i gets seed config.seed + i.
using BackendFactory = std::function<std::shared_ptr<Backend>(int slot)>;

// G rollouts of the same question scored against the golds. A failed slot
// (backend transport failure) is flagged with reward 0; every slot failing is
// an error.
GroupRollout run_group(const Index& index, const BackendFactory& factory,
                       const RolloutConfig& config, const std::string& question,
                       const std::vector<std::string>& golds, int group_size);

double average_turns(const std::vector<Trajectory>& trajectories);

struct DatasetItem {
    std::string question;
    std::vector<std::string> golden_answers;
    std::optional<std::string> gold_context;  // enables retrieval-similarity reporting
};

// Line-delimited {"question", "golden_answers", "gold_context"?}. Errors name
// the offending line; an empty dataset is an error.
std::vector<DatasetItem> load_dataset(const std::string& path);

// One-line JSON with stable field names; keys sorted, so byte-identical for
// equal trajectories. trajectory_from_json_line inverts it exactly.
std::string trajectory_to_json_line(const Trajectory& trajectory);
Trajectory trajectory_from_json_line(const std::string& line);

void dump_trajectory(const Trajectory& trajectory, const std::string& path);
Trajectory load_trajectory(const std::string& path);

}  // namespace eka
