#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "eka/corpus.hpp"

namespace eka {

enum class RetrieverBackend { Lexical, EmbeddingEndpoint };

struct RetrieverConfig {
    RetrieverBackend backend = RetrieverBackend::Lexical;
    int k = 5;
    double k1 = 1.2;
    double b = 0.75;
    std::string endpoint;  // embedding-endpoint backend only
    std::string model;
    // Overrides config.k for the pre-rollout retrieval when set.
    std::optional<int> early_k;

    void validate() const;
};

struct RetrievedPassage {
    std::string chunk_id;
    double score = 0.0;
    int rank = 0;  // 1-based
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& inputs) = 0;
    virtual std::string describe() const = 0;
};

// Deterministic token feature-hashing embedder. Offline stand-in for a
// semantic endpoint; used by tests and by offline report runs.
class HashedEmbedder : public Embedder {
public:
    explicit HashedEmbedder(int dim = 64);
    std::vector<std::vector<double>> embed(const std::vector<std::string>& inputs) override;
    std::string describe() const override;

private:
    int dim_;
};

// OpenAI-compatible embeddings endpoint: POST {model, input:[..]} and read
// back {data:[{index, embedding:[..]}]}.
class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(std::string endpoint, std::string model, int timeout_seconds = 30);
    std::vector<std::vector<double>> embed(const std::vector<std::string>& inputs) override;
    std::string describe() const override;

private:
    std::string endpoint_;
    std::string model_;
    int timeout_seconds_;
};

struct LexicalStats {
    // term -> (chunk ordinal, term frequency), ordinals ascending
    std::unordered_map<std::string, std::vector<std::pair<int, int>>> postings;
    std::vector<int> chunk_term_counts;
    double avg_chunk_term_count = 0.0;

    size_t term_count() const { return postings.size(); }
};

// Immutable after build; safe for concurrent readers.
struct Index {
    Corpus corpus;
    RetrieverConfig config;
    LexicalStats lexical;                       // lexical backend
    std::vector<std::vector<double>> vectors;   // embedding backend, one per chunk
    std::shared_ptr<Embedder> embedder;         // embedding backend
};

Index build_index(Corpus corpus, const RetrieverConfig& config,
                  std::shared_ptr<Embedder> embedder = nullptr);

// Top-k by score descending, ties by ascending chunk_id. Lexical scoring is
// BM25 with idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)); only chunks sharing
// at least one query term are candidates.
std::vector<RetrievedPassage> retrieve(const Index& index, const std::string& query, int k);

// The pre-rollout retrieval injected before the first reasoning step.
// Same contract as retrieve() with k = config.early_k or config.k.
std::vector<RetrievedPassage> early_knowledge(const Index& index, const std::string& question,
                                              const RetrieverConfig& config);

void save_index(const Index& index, const std::string& path);
Index load_index(const std::string& path, std::shared_ptr<Embedder> embedder = nullptr);

}  // namespace eka
