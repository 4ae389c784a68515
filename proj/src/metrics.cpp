#include "eka/metrics.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "eka/common.hpp"
#include "eka/retrieval.hpp"

namespace eka {

namespace {

// Multi-byte punctuation that shows up in scraped QA text. Full Unicode
// coverage would need a table library; these are the sequences the corpora
// actually contain.
const char* kTypographicPunctuation[] = {
    "‘", "’", "“", "”",  // curly quotes
    "–", "—", "―",            // en/em/horizontal dashes
    "…",                                // ellipsis
    "«", "»",                      // guillemets
    "¡", "¿",                      // inverted ! ?
    "′", "″",                      // prime marks
};

// Length of the typographic punctuation sequence starting at text[i], or 0.
size_t punctuation_run(const std::string& text, size_t i) {
    for (const char* mark : kTypographicPunctuation) {
        const size_t len = std::char_traits<char>::length(mark);
        if (text.compare(i, len, mark) == 0) return len;
    }
    return 0;
}

std::map<std::string, int> token_counts(const NormalizedAnswer& answer) {
    std::map<std::string, int> counts;
    for (const auto& token : answer.tokens) ++counts[token];
    return counts;
}

}  // namespace

NormalizedAnswer normalize(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (size_t i = 0; i < text.size();) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            if (std::isspace(c)) {
                cleaned.push_back(' ');
            } else if (!std::ispunct(c)) {
                cleaned.push_back(static_cast<char>(std::tolower(c)));
            }
            ++i;
            continue;
        }
        if (const size_t run = punctuation_run(text, i)) {
            i += run;
            continue;
        }
        cleaned.push_back(text[i]);
        ++i;
    }
    return {whitespace_tokens(cleaned)};
}

int exact_match(const std::string& pred, const std::vector<std::string>& golds) {
    const NormalizedAnswer normalized = normalize(pred);
    for (const auto& gold : golds) {
        if (normalize(gold) == normalized) return 1;
    }
    return 0;
}

double f1(const std::string& pred, const std::vector<std::string>& golds) {
    const NormalizedAnswer pred_norm = normalize(pred);
    const std::map<std::string, int> pred_counts = token_counts(pred_norm);
    double best = 0.0;
    for (const auto& gold : golds) {
        const NormalizedAnswer gold_norm = normalize(gold);
        if (pred_norm.tokens.empty() && gold_norm.tokens.empty()) {
            best = 1.0;
            continue;
        }
        if (pred_norm.tokens.empty() || gold_norm.tokens.empty()) continue;
        int overlap = 0;
        const std::map<std::string, int> gold_counts = token_counts(gold_norm);
        for (const auto& [token, count] : gold_counts) {
            const auto it = pred_counts.find(token);
            if (it != pred_counts.end()) overlap += std::min(count, it->second);
        }
        if (overlap == 0) continue;
        best = std::max(best, 2.0 * overlap /
                                  static_cast<double>(pred_norm.tokens.size() + gold_norm.tokens.size()));
    }
    return best;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw UserError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
    }
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        norm_a += a[i] * a[i];
        norm_b += b[i] * b[i];
    }
    if (norm_a == 0.0 || norm_b == 0.0) throw UserError("cosine_similarity: zero-norm embedding");
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

double retrieval_similarity(const std::string& retrieved, const std::string& gold_context,
                            Embedder& embedder) {
    const std::vector<std::vector<double>> vectors = embedder.embed({retrieved, gold_context});
    return cosine_similarity(vectors[0], vectors[1]);
}

}  // namespace eka
