#pragma once

#include <string>
#include <vector>

namespace eka {

class Embedder;

/// Answer text after lowercasing, punctuation removal, and whitespace
/// standardization, applied in that order. Articles are kept.
struct NormalizedAnswer {
    std::vector<std::string> tokens;

    bool operator==(const NormalizedAnswer& other) const { return tokens == other.tokens; }
};

NormalizedAnswer normalize(const std::string& text);

/// 1 iff the normalized prediction equals some normalized gold, else 0.
int exact_match(const std::string& pred, const std::vector<std::string>& golds);

/// Token-multiset overlap F1, maximized over golds. Both sides empty after
/// normalization scores 1.0; exactly one side empty scores 0.0.
double f1(const std::string& pred, const std::vector<std::string>& golds);

/// Cosine similarity between the embeddings of the retrieved text and the
/// gold context. Throws UserError when either embedding has zero norm.
double retrieval_similarity(const std::string& retrieved, const std::string& gold_context,
                            Embedder& embedder);

/// Cosine over raw vectors; exposed for hand-set-vector checks.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace eka
