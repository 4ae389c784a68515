#include "eka/info_theory.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "eka/common.hpp"
#include "json.hpp"

namespace eka {

DiscreteWorld::DiscreteWorld(std::string name, std::vector<WorldVariable> variables,
                             std::vector<double> joint, std::string question, std::string answer,
                             std::string retrieval)
    : name_(std::move(name)),
      variables_(std::move(variables)),
      joint_(std::move(joint)),
      question_(std::move(question)),
      answer_(std::move(answer)),
      retrieval_(std::move(retrieval)) {
    validate_();
}

void DiscreteWorld::validate_() const {
    if (variables_.empty()) throw UserError("world " + name_ + ": no variables");
    std::set<std::string> seen;
    size_t expected = 1;
    for (const auto& variable : variables_) {
        if (variable.name.empty()) throw UserError("world " + name_ + ": variable with empty name");
        if (!seen.insert(variable.name).second) {
            throw UserError("world " + name_ + ": duplicate variable " + variable.name);
        }
        if (variable.states < 1) {
            throw UserError("world " + name_ + ": variable " + variable.name + " needs >= 1 state");
        }
        expected *= static_cast<size_t>(variable.states);
    }
    if (joint_.size() != expected) {
        throw UserError("world " + name_ + ": joint table holds " + std::to_string(joint_.size()) +
                        " entries, expected " + std::to_string(expected));
    }
    double sum = 0.0;
    for (const double p : joint_) {
        if (p < 0.0) throw UserError("world " + name_ + ": negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw UserError("world " + name_ + ": probabilities sum to " + std::to_string(sum) +
                        ", expected 1");
    }
    if (!seen.count(question_)) throw UserError("world " + name_ + ": unknown question variable");
    if (!seen.count(answer_)) throw UserError("world " + name_ + ": unknown answer variable");
    if (!retrieval_.empty() && !seen.count(retrieval_)) {
        throw UserError("world " + name_ + ": unknown retrieval variable " + retrieval_);
    }
    if (states_of(answer_) < 2) {
        throw UserError("world " + name_ + ": answer alphabet needs >= 2 states");
    }
}

int DiscreteWorld::index_of(const std::string& variable) const {
    for (size_t i = 0; i < variables_.size(); ++i) {
        if (variables_[i].name == variable) return static_cast<int>(i);
    }
    throw UserError("world " + name_ + ": unknown variable " + variable);
}

int DiscreteWorld::states_of(const std::string& variable) const {
    return variables_[static_cast<size_t>(index_of(variable))].states;
}

int DiscreteWorld::state_at(size_t flat_index, int variable_index) const {
    size_t stride = 1;
    for (size_t i = variables_.size(); i-- > static_cast<size_t>(variable_index) + 1;) {
        stride *= static_cast<size_t>(variables_[i].states);
    }
    return static_cast<int>(flat_index / stride %
                            static_cast<size_t>(variables_[static_cast<size_t>(variable_index)].states));
}

std::vector<std::string> DiscreteWorld::evidence_variables() const {
    std::vector<std::string> out;
    for (const auto& variable : variables_) {
        if (variable.name != question_ && variable.name != answer_) out.push_back(variable.name);
    }
    return out;
}

namespace {

EvidencePolicy parse_policy(const nlohmann::json& doc, const std::string& name, bool grounded) {
    EvidencePolicy policy;
    policy.name = name;
    policy.grounded_first = grounded;
    policy.budget = doc.value("budget", 1);
    if (doc.contains("order")) policy.order = doc["order"].get<std::vector<std::string>>();
    return policy;
}

}  // namespace

DiscreteWorld DiscreteWorld::load(const std::string& path) {
    nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw UserError(path + ": not a JSON object");

    std::vector<WorldVariable> variables;
    for (const auto& item : doc.at("variables")) {
        variables.push_back({item.at("name").get<std::string>(), item.at("states").get<int>()});
    }
    size_t table_size = 1;
    for (const auto& variable : variables) table_size *= static_cast<size_t>(variable.states);

    std::vector<double> joint;
    if (doc.contains("table")) {
        joint = doc["table"].get<std::vector<double>>();
    } else if (doc.contains("probs")) {
        joint.assign(table_size, 0.0);
        for (const auto& entry : doc["probs"]) {
            const auto& assign = entry.at("assign");
            size_t flat = 0;
            for (const auto& variable : variables) {
                if (!assign.contains(variable.name)) {
                    throw UserError(path + ": probs entry missing variable " + variable.name);
                }
                const int state = assign[variable.name].get<int>();
                if (state < 0 || state >= variable.states) {
                    throw UserError(path + ": state out of range for " + variable.name);
                }
                flat = flat * static_cast<size_t>(variable.states) + static_cast<size_t>(state);
            }
            joint[flat] += entry.at("p").get<double>();
        }
    } else {
        throw UserError(path + ": world needs a \"table\" or \"probs\" field");
    }

    DiscreteWorld world(doc.value("name", path), std::move(variables), std::move(joint),
                        doc.at("question").get<std::string>(), doc.at("answer").get<std::string>(),
                        doc.value("retrieval", std::string()));
    if (doc.contains("policies")) {
        const auto& policies = doc["policies"];
        if (policies.contains("grounded")) {
            world.grounded_ = parse_policy(policies["grounded"], "grounded-first", true);
        }
        if (policies.contains("ungrounded")) {
            world.ungrounded_ = parse_policy(policies["ungrounded"], "ungrounded", false);
        }
    }
    world.expect_strict_ = doc.value("expect_strict_improvement", false);
    return world;
}

namespace {

// Mixed-radix key of a variable subset's assignment at a flat joint index.
size_t subset_key(const DiscreteWorld& world, size_t flat, const std::vector<int>& subset) {
    size_t key = 0;
    for (const int v : subset) {
        key = key * static_cast<size_t>(world.variables()[static_cast<size_t>(v)].states) +
              static_cast<size_t>(world.state_at(flat, v));
    }
    return key;
}

std::vector<int> resolve(const DiscreteWorld& world, const std::vector<std::string>& names) {
    std::vector<int> out;
    out.reserve(names.size());
    for (const auto& name : names) out.push_back(world.index_of(name));
    return out;
}

// H(target | cond) restricted to fixed == state when fixed >= 0, i.e. under
// the conditional measure p(. | fixed). Returns 0 when the slice has no mass.
double entropy_under(const DiscreteWorld& world, int target, std::vector<int> cond, int fixed,
                     int fixed_state) {
    if (fixed >= 0) cond.push_back(fixed);
    std::unordered_map<size_t, double> p_cond;
    std::unordered_map<size_t, double> p_joint;
    const std::vector<int> with_target = [&] {
        std::vector<int> v = cond;
        v.push_back(target);
        return v;
    }();
    double slice_mass = 0.0;
    for (size_t flat = 0; flat < world.table_size(); ++flat) {
        const double p = world.joint()[flat];
        if (p <= 0.0) continue;
        if (fixed >= 0 && world.state_at(flat, fixed) != fixed_state) continue;
        slice_mass += p;
        p_cond[subset_key(world, flat, cond)] += p;
        p_joint[subset_key(world, flat, with_target)] += p;
    }
    if (slice_mass <= 0.0) return 0.0;
    // H = -sum p(t,c) ln(p(t,c)/p(c)); the slice normalization cancels inside
    // the log, so only the outer weights need it.
    double h = 0.0;
    for (const auto& [key, p_tc] : p_joint) {
        const size_t cond_key = key / static_cast<size_t>(world.variables()[static_cast<size_t>(target)].states);
        const double p_c = p_cond.at(cond_key);
        h -= (p_tc / slice_mass) * std::log(p_tc / p_c);
    }
    return h;
}

double marginal_probability(const DiscreteWorld& world, int variable, int state) {
    double p = 0.0;
    for (size_t flat = 0; flat < world.table_size(); ++flat) {
        if (world.state_at(flat, variable) == state) p += world.joint()[flat];
    }
    return p;
}

}  // namespace

double conditional_entropy(const DiscreteWorld& world, const std::string& target,
                           const std::vector<std::string>& conditioning) {
    return entropy_under(world, world.index_of(target), resolve(world, conditioning), -1, 0);
}

double mutual_information(const DiscreteWorld& world, const std::string& target,
                          const std::vector<std::string>& evidence,
                          const std::vector<std::string>& conditioning) {
    std::vector<std::string> with_evidence = conditioning;
    with_evidence.insert(with_evidence.end(), evidence.begin(), evidence.end());
    return conditional_entropy(world, target, conditioning) -
           conditional_entropy(world, target, with_evidence);
}

PotentialTrace potential_trace(const DiscreteWorld& world, const std::vector<std::string>& history) {
    PotentialTrace trace;
    std::vector<std::string> conditioning = {world.question()};
    trace.potentials.push_back(conditional_entropy(world, world.answer(), conditioning));
    for (const auto& revealed : history) {
        conditioning.push_back(revealed);
        trace.potentials.push_back(conditional_entropy(world, world.answer(), conditioning));
        const size_t t = trace.potentials.size() - 1;
        trace.gains.push_back(trace.potentials[t - 1] - trace.potentials[t]);
    }
    return trace;
}

double efficiency_ratio(const PotentialTrace& trace, double budget) {
    if (budget <= 0.0) throw UserError("efficiency_ratio: budget must be positive");
    if (trace.potentials.empty()) throw UserError("efficiency_ratio: empty trace");
    return (trace.potentials.front() - trace.potentials.back()) / budget;
}

double fano_bound_value(double residual_entropy, double log_alphabet) {
    if (log_alphabet <= 0.0) throw UserError("fano_bound_value: log_alphabet must be positive");
    return (residual_entropy + 1.0) / log_alphabet;
}

double fano_bound(const DiscreteWorld& world, const std::vector<std::string>& history) {
    std::vector<std::string> conditioning = {world.question()};
    conditioning.insert(conditioning.end(), history.begin(), history.end());
    const double residual = conditional_entropy(world, world.answer(), conditioning);
    return fano_bound_value(residual, std::log(static_cast<double>(world.states_of(world.answer()))));
}

double exact_bayes_error(const DiscreteWorld& world, const std::vector<std::string>& history) {
    std::vector<std::string> names = {world.question()};
    names.insert(names.end(), history.begin(), history.end());
    const std::vector<int> cond = resolve(world, names);
    const int answer = world.index_of(world.answer());

    // p(context) and per-context answer distribution; error = sum over
    // contexts of p(context) - max_a p(a, context).
    std::unordered_map<size_t, double> context_mass;
    std::unordered_map<size_t, double> best_answer;
    std::unordered_map<size_t, std::unordered_map<int, double>> answer_mass;
    for (size_t flat = 0; flat < world.table_size(); ++flat) {
        const double p = world.joint()[flat];
        if (p <= 0.0) continue;
        const size_t key = subset_key(world, flat, cond);
        context_mass[key] += p;
        answer_mass[key][world.state_at(flat, answer)] += p;
    }
    double error = 0.0;
    for (const auto& [key, mass] : context_mass) {
        double best = 0.0;
        for (const auto& [state, p] : answer_mass[key]) best = std::max(best, p);
        error += mass - best;
    }
    return error;
}

namespace {

double expected_policy_gain(const DiscreteWorld& world, const EvidencePolicy& policy) {
    const int question = world.index_of(world.question());
    const int answer = world.index_of(world.answer());
    const std::vector<std::string> evidence_names = world.evidence_variables();

    for (const auto& name : policy.order) {
        if (name == world.question() || name == world.answer()) {
            throw UserError("policy " + policy.name + " selects non-evidence variable " + name);
        }
        world.index_of(name);  // unknown name check
    }
    if (policy.grounded_first && world.retrieval().empty()) {
        throw UserError("world " + world.name() + " declares no retrieval variable");
    }

    double gain = 0.0;
    for (int q = 0; q < world.states_of(world.question()); ++q) {
        const double pq = marginal_probability(world, question, q);
        if (pq <= 0.0) continue;

        std::vector<int> selected;
        auto pick = [&](const std::string& name) { selected.push_back(world.index_of(name)); };
        if (policy.grounded_first) {
            pick(world.retrieval());
            while (static_cast<int>(selected.size()) < policy.budget) {
                int best = -1;
                double best_gain = -1.0;
                for (const auto& name : evidence_names) {
                    const int candidate = world.index_of(name);
                    if (std::find(selected.begin(), selected.end(), candidate) != selected.end()) {
                        continue;
                    }
                    std::vector<int> with = selected;
                    with.push_back(candidate);
                    const double g = entropy_under(world, answer, selected, question, q) -
                                     entropy_under(world, answer, with, question, q);
                    if (g > best_gain + 1e-15) {
                        best_gain = g;
                        best = candidate;
                    }
                }
                if (best < 0) break;  // evidence pool exhausted
                selected.push_back(best);
            }
        } else {
            if (static_cast<int>(policy.order.size()) < policy.budget) {
                throw UserError("policy " + policy.name + " declares fewer variables than its budget");
            }
            for (int i = 0; i < policy.budget; ++i) pick(policy.order[static_cast<size_t>(i)]);
        }
        if (static_cast<int>(selected.size()) > policy.budget) {
            throw UserError("policy " + policy.name + " exceeded its budget");
        }

        const double h0 = entropy_under(world, answer, {}, question, q);
        const double ht = entropy_under(world, answer, selected, question, q);
        gain += pq * (h0 - ht);
    }
    return gain;
}

}  // namespace

PolicyComparison compare_policies(const DiscreteWorld& world, const EvidencePolicy& grounded,
                                  const EvidencePolicy& ungrounded) {
    if (grounded.budget != ungrounded.budget) {
        throw UserError("compare_policies: budgets differ (" + std::to_string(grounded.budget) +
                        " vs " + std::to_string(ungrounded.budget) + ")");
    }
    PolicyComparison comparison;
    comparison.world = world.name();
    comparison.grounded_gain = expected_policy_gain(world, grounded);
    comparison.ungrounded_gain = expected_policy_gain(world, ungrounded);
    comparison.delta = comparison.grounded_gain - comparison.ungrounded_gain;
    comparison.strict_improvement = comparison.delta > 1e-12;
    return comparison;
}

WorldCheck verify_world(const DiscreteWorld& world) {
    WorldCheck check;
    check.world = world.name();
    auto fail = [&](const std::string& detail) {
        check.ok = false;
        check.failures.push_back(detail);
    };

    const std::vector<std::string> history = world.evidence_variables();
    const PotentialTrace trace = potential_trace(world, history);

    double gain_sum = 0.0;
    for (const double g : trace.gains) {
        gain_sum += g;
        if (g < -1e-12) fail("potential increased along the trace");
    }
    const double total = mutual_information(world, world.answer(), history, {world.question()});
    if (std::abs(gain_sum - total) > 1e-12) {
        fail("chain rule violated: gains sum " + std::to_string(gain_sum) + " vs information " +
             std::to_string(total));
    }

    std::vector<std::string> prefix;
    for (size_t t = 0; t <= history.size(); ++t) {
        if (t > 0) prefix.push_back(history[t - 1]);
        const double bound = fano_bound(world, prefix);
        const double error = exact_bayes_error(world, prefix);
        if (bound < error - 1e-12) {
            fail("Fano bound " + std::to_string(bound) + " below exact error " +
                 std::to_string(error) + " at prefix length " + std::to_string(t));
        }
    }

    if (world.grounded_policy() && world.ungrounded_policy()) {
        const PolicyComparison comparison =
            compare_policies(world, *world.grounded_policy(), *world.ungrounded_policy());
        if (comparison.delta < -1e-12) fail("grounded-first policy gained less information");
        if (world.expect_strict_improvement() && !comparison.strict_improvement) {
            fail("expected a strict grounded-first improvement");
        }
        check.comparison = comparison;
    }
    return check;
}

}  // namespace eka
