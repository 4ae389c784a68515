#pragma once

#include <optional>
#include <vector>

namespace eka {

struct TokenProbRecord {
    double logprob_current = 0.0;            // log pi_theta(token), <= 0
    double logprob_old = 0.0;                // log pi_theta_old(token), <= 0
    std::optional<double> logprob_ref;       // log pi_ref(token); required for the KL term
};

struct AdvantageVector {
    std::vector<double> values;  // one per group member, constant across that member's tokens
};

struct MemberBreakdown {
    double clipped_term_mean = 0.0;
    double kl_term_mean = 0.0;  // unscaled k3 mean; the objective subtracts beta times this
};

struct ObjectiveBreakdown {
    double total = 0.0;
    std::vector<MemberBreakdown> per_member;
    // Fraction of tokens where the clipped branch was strictly the smaller
    // term, i.e. clip(ratio) * A < ratio * A.
    double clip_fraction = 0.0;
};

// Group-relative advantages: (r_i - mean(r)) / max(popstd(r), epsilon_std).
// Population std; a zero-variance group collapses to ~0 advantages through the
// epsilon guard. Empty input is an error.
AdvantageVector grpo_advantages(const std::vector<double>& rewards, double epsilon_std = 1e-8);

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A). Requires ratio > 0.
double clipped_term(double ratio, double advantage, double epsilon_clip);

// Per-token k3 KL estimator: rho - log(rho) - 1 with
// rho = exp(logprob_ref - logprob_current). Nonnegative, zero iff rho == 1.
// Missing reference logprob is an error.
double kl_penalty_term(const TokenProbRecord& record);

// Token-mean then group-mean surrogate:
// (1/G) sum_i (1/|o_i|) sum_t [clipped_term(r_it, A_i) - beta * k3_it],
// with r_it = exp(logprob_current - logprob_old). When beta != 0 every record
// needs logprob_ref. Member/advantage length mismatch or an empty member is
// an error.
ObjectiveBreakdown grpo_objective(const std::vector<std::vector<TokenProbRecord>>& members,
                                  const AdvantageVector& advantages, double epsilon_clip = 0.2,
                                  double beta = 0.001);

// Clipped surrogate with externally supplied per-token advantages and the
// 1/|o| token mean; no KL term. One advantage per token record.
ObjectiveBreakdown ppo_objective(const std::vector<TokenProbRecord>& tokens,
                                 const std::vector<double>& advantages, double epsilon_clip = 0.2);

}  // namespace eka
