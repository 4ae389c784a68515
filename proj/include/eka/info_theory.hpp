#pragma once

#include <optional>
#include <string>
#include <vector>

namespace eka {

struct WorldVariable {
    std::string name;
    int states = 0;
};

struct EvidencePolicy {
    std::string name;
    int budget = 1;
    // grounded_first: spend the first unit on the designated retrieval
    // variable, then greedily maximize conditional information gain given the
    // question realization. Otherwise follow `order` blindly.
    bool grounded_first = false;
    std::vector<std::string> order;
};

// A finite joint distribution over a question variable, an answer variable,
// and evidence variables, stored as a flat row-major table in declared
// variable order. Immutable after construction.
class DiscreteWorld {
public:
    DiscreteWorld(std::string name, std::vector<WorldVariable> variables, std::vector<double> joint,
                  std::string question, std::string answer, std::string retrieval = {});

    // File format: {"name", "question", "answer", "retrieval"?, "variables":
    // [{"name","states"}...], "table": [...] | "probs": [{"assign": {var:
    // state...}, "p": ...}...], "policies"?: {"grounded": {"budget"},
    // "ungrounded": {"budget", "order"}}, "expect_strict_improvement"?: bool}.
    // Probabilities must be nonnegative and sum to 1 within 1e-9; the answer
    // variable needs at least two states.
    static DiscreteWorld load(const std::string& path);

    const std::string& name() const { return name_; }
    const std::vector<WorldVariable>& variables() const { return variables_; }
    const std::vector<double>& joint() const { return joint_; }
    const std::string& question() const { return question_; }
    const std::string& answer() const { return answer_; }
    const std::string& retrieval() const { return retrieval_; }  // empty when undeclared

    int index_of(const std::string& variable) const;  // unknown name is an error
    int states_of(const std::string& variable) const;
    size_t table_size() const { return joint_.size(); }
    int state_at(size_t flat_index, int variable_index) const;

    // Evidence variables (everything except question and answer) in declared
    // order.
    std::vector<std::string> evidence_variables() const;

    const std::optional<EvidencePolicy>& grounded_policy() const { return grounded_; }
    const std::optional<EvidencePolicy>& ungrounded_policy() const { return ungrounded_; }
    bool expect_strict_improvement() const { return expect_strict_; }

private:
    void validate_() const;

    std::string name_;
    std::vector<WorldVariable> variables_;
    std::vector<double> joint_;
    std::string question_;
    std::string answer_;
    std::string retrieval_;
    std::optional<EvidencePolicy> grounded_;
    std::optional<EvidencePolicy> ungrounded_;
    bool expect_strict_ = false;
};

// H(target | conditioning) in nats, exact from the joint table.
double conditional_entropy(const DiscreteWorld& world, const std::string& target,
                           const std::vector<std::string>& conditioning);

// I(target; evidence | conditioning) = H(target | conditioning) -
// H(target | conditioning + evidence). Nonnegative up to rounding.
double mutual_information(const DiscreteWorld& world, const std::string& target,
                          const std::vector<std::string>& evidence,
                          const std::vector<std::string>& conditioning);

struct PotentialTrace {
    // potentials[t] = H(answer | question, history[0..t)); gains[t] =
    // potentials[t] - potentials[t+1], one per revealed variable.
    std::vector<double> potentials;
    std::vector<double> gains;
};

PotentialTrace potential_trace(const DiscreteWorld& world, const std::vector<std::string>& history);

// (first potential - last potential) / budget.
double efficiency_ratio(const PotentialTrace& trace, double budget);

// (residual_entropy + 1) / log_alphabet: the bound with the residual already
// substituted, for callers that work with abstract alphabet sizes.
double fano_bound_value(double residual_entropy, double log_alphabet);

// (H(answer|question) - I(answer; history|question) + 1) / ln(answer states).
double fano_bound(const DiscreteWorld& world, const std::vector<std::string>& history);

// Exact minimal error probability of guessing the answer from the question
// plus the revealed history, by enumeration.
double exact_bayes_error(const DiscreteWorld& world, const std::vector<std::string>& history);

struct PolicyComparison {
    std::string world;
    double grounded_gain = 0.0;    // E_q[ I(answer; selected | question=q) ]
    double ungrounded_gain = 0.0;
    double delta = 0.0;
    bool strict_improvement = false;
};

// Expected cumulative information gain of both policies under equal budget,
// by exact enumeration over question realizations (no sampling). A budget
// mismatch is an error.
PolicyComparison compare_policies(const DiscreteWorld& world, const EvidencePolicy& grounded,
                                  const EvidencePolicy& ungrounded);

struct WorldCheck {
    std::string world;
    bool ok = true;
    std::vector<std::string> failures;
    std::optional<PolicyComparison> comparison;
};

// Runs the full invariant suite on one world: chain rule over the declared
// evidence order, monotone potentials, Fano bound vs exact Bayes error on
// every history prefix, and the policy comparison when the world declares
// policies (strict improvement where expected).
WorldCheck verify_world(const DiscreteWorld& world);

}  // namespace eka
