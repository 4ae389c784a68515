#include "eka/rl_math.hpp"

#include <algorithm>
#include <cmath>

#include "eka/common.hpp"

namespace eka {

AdvantageVector grpo_advantages(const std::vector<double>& rewards, double epsilon_std) {
    if (rewards.empty()) throw UserError("grpo_advantages: empty reward list");
    AdvantageVector out;
    // A genuinely constant group is exactly zero advantage; going through the
    // mean would leak accumulation noise past the epsilon guard.
    if (std::all_of(rewards.begin(), rewards.end(),
                    [&](double r) { return r == rewards.front(); })) {
        out.values.assign(rewards.size(), 0.0);
        return out;
    }
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (const double r : rewards) mean += r;
    mean /= n;
    double variance = 0.0;
    for (const double r : rewards) variance += (r - mean) * (r - mean);
    variance /= n;
    const double denom = std::max(std::sqrt(variance), epsilon_std);
    out.values.reserve(rewards.size());
    for (const double r : rewards) out.values.push_back((r - mean) / denom);
    return out;
}

double clipped_term(double ratio, double advantage, double epsilon_clip) {
    const double clipped = std::clamp(ratio, 1.0 - epsilon_clip, 1.0 + epsilon_clip);
    return std::min(ratio * advantage, clipped * advantage);
}

double kl_penalty_term(const TokenProbRecord& record) {
    if (!record.logprob_ref) throw UserError("kl_penalty_term: record carries no reference logprob");
    const double log_rho = *record.logprob_ref - record.logprob_current;
    return std::max(0.0, std::exp(log_rho) - log_rho - 1.0);
}

namespace {

struct TokenTerm {
    double clipped;
    bool clip_active;
};

TokenTerm token_term(const TokenProbRecord& record, double advantage, double epsilon_clip) {
    const double ratio = std::exp(record.logprob_current - record.logprob_old);
    const double raw = ratio * advantage;
    const double clipped = std::clamp(ratio, 1.0 - epsilon_clip, 1.0 + epsilon_clip) * advantage;
    return {std::min(raw, clipped), clipped < raw};
}

}  // namespace

ObjectiveBreakdown grpo_objective(const std::vector<std::vector<TokenProbRecord>>& members,
                                  const AdvantageVector& advantages, double epsilon_clip,
                                  double beta) {
    if (members.empty()) throw UserError("grpo_objective: empty group");
    if (members.size() != advantages.values.size()) {
        throw UserError("grpo_objective: group size does not match the advantage vector");
    }
    ObjectiveBreakdown out;
    size_t total_tokens = 0;
    size_t clipped_tokens = 0;
    double sum_over_members = 0.0;
    for (size_t i = 0; i < members.size(); ++i) {
        const auto& tokens = members[i];
        if (tokens.empty()) {
            throw UserError("grpo_objective: member " + std::to_string(i) + " has no token records");
        }
        double clipped_sum = 0.0;
        double kl_sum = 0.0;
        for (const auto& record : tokens) {
            const TokenTerm term = token_term(record, advantages.values[i], epsilon_clip);
            clipped_sum += term.clipped;
            if (term.clip_active) ++clipped_tokens;
            if (beta != 0.0) kl_sum += kl_penalty_term(record);
        }
        total_tokens += tokens.size();
        const double inv = 1.0 / static_cast<double>(tokens.size());
        MemberBreakdown member{clipped_sum * inv, kl_sum * inv};
        sum_over_members += member.clipped_term_mean - beta * member.kl_term_mean;
        out.per_member.push_back(member);
    }
    out.total = sum_over_members / static_cast<double>(members.size());
    out.clip_fraction =
        total_tokens == 0 ? 0.0 : static_cast<double>(clipped_tokens) / static_cast<double>(total_tokens);
    return out;
}

ObjectiveBreakdown ppo_objective(const std::vector<TokenProbRecord>& tokens,
                                 const std::vector<double>& advantages, double epsilon_clip) {
    if (tokens.empty()) throw UserError("ppo_objective: no token records");
    if (tokens.size() != advantages.size()) {
        throw UserError("ppo_objective: one advantage per token record is required");
    }
    double clipped_sum = 0.0;
    size_t clipped_tokens = 0;
    for (size_t t = 0; t < tokens.size(); ++t) {
        const TokenTerm term = token_term(tokens[t], advantages[t], epsilon_clip);
        clipped_sum += term.clipped;
        if (term.clip_active) ++clipped_tokens;
    }
    ObjectiveBreakdown out;
    const double inv = 1.0 / static_cast<double>(tokens.size());
    out.per_member.push_back({clipped_sum * inv, 0.0});
    out.total = clipped_sum * inv;
    out.clip_fraction = static_cast<double>(clipped_tokens) / static_cast<double>(tokens.size());
    return out;
}

}  // namespace eka
