#include "eka/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eka/common.hpp"
#include "httplib.h"
#include "json.hpp"

namespace eka {

void RetrieverConfig::validate() const {
    if (k < 1) throw ConfigError("retriever.k must be >= 1");
    if (k1 <= 0.0) throw ConfigError("retriever.k1 must be > 0");
    if (b < 0.0 || b > 1.0) throw ConfigError("retriever.b must lie in [0, 1]");
    if (early_k && *early_k < 1) throw ConfigError("retriever.early_k must be >= 1");
    // The embedding backend needs no endpoint here: an injected embedder may
    // serve it offline. HttpEmbedder enforces its own endpoint.
}

HashedEmbedder::HashedEmbedder(int dim) : dim_(dim) {
    if (dim < 2) throw ConfigError("hashed embedder dimension must be >= 2");
}

std::vector<std::vector<double>> HashedEmbedder::embed(const std::vector<std::string>& inputs) {
    std::vector<std::vector<double>> out;
    out.reserve(inputs.size());
    for (const auto& text : inputs) {
        std::vector<double> vec(static_cast<size_t>(dim_), 0.0);
        for (const auto& term : analyze_terms(text)) {
            const uint64_t h = fnv1a(term);
            vec[h % static_cast<uint64_t>(dim_)] += ((h >> 32) & 1) ? -1.0 : 1.0;
        }
        out.push_back(std::move(vec));
    }
    return out;
}

std::string HashedEmbedder::describe() const {
    return "hashed-" + std::to_string(dim_);
}

HttpEmbedder::HttpEmbedder(std::string endpoint, std::string model, int timeout_seconds)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), timeout_seconds_(timeout_seconds) {
    if (endpoint_.empty()) throw ConfigError("embeddings endpoint URL required");
}

namespace {

// "http://host:port/path" -> (host-with-scheme-and-port, path)
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = endpoint.find('/', host_start);
    if (path_start == std::string::npos) {
        return {endpoint, "/"};
    }
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

std::vector<std::vector<double>> HttpEmbedder::embed(const std::vector<std::string>& inputs) {
    auto [base, path] = split_endpoint(endpoint_);
    httplib::Client client(base);
    client.set_connection_timeout(timeout_seconds_);
    client.set_read_timeout(timeout_seconds_);

    nlohmann::json body;
    body["model"] = model_;
    body["input"] = inputs;
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
        throw TransportError("embedding endpoint unreachable: " + endpoint_ + " (" +
                             httplib::to_string(res.error()) + ")");
    }
    if (res->status != 200) {
        throw TransportError("embedding endpoint returned status " + std::to_string(res->status) +
                             " for " + endpoint_);
    }
    nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("data") || !parsed["data"].is_array()) {
        throw ProtocolError("embedding endpoint response missing data array");
    }
    std::vector<std::vector<double>> out(inputs.size());
    for (const auto& item : parsed["data"]) {
        if (!item.contains("index") || !item.contains("embedding")) {
            throw ProtocolError("embedding endpoint item missing index/embedding");
        }
        const size_t idx = item["index"].get<size_t>();
        if (idx >= out.size()) {
            throw ProtocolError("embedding endpoint returned out-of-range index");
        }
        out[idx] = item["embedding"].get<std::vector<double>>();
    }
    for (const auto& vec : out) {
        if (vec.empty()) throw ProtocolError("embedding endpoint returned incomplete batch");
    }
    return out;
}

std::string HttpEmbedder::describe() const {
    return "endpoint:" + endpoint_ + ":" + model_;
}

namespace {

LexicalStats build_lexical_stats(const Corpus& corpus) {
    LexicalStats stats;
    stats.chunk_term_counts.reserve(corpus.chunks.size());
    double total_terms = 0.0;
    for (size_t i = 0; i < corpus.chunks.size(); ++i) {
        const auto terms = analyze_terms(corpus.chunks[i].text);
        stats.chunk_term_counts.push_back(static_cast<int>(terms.size()));
        total_terms += static_cast<double>(terms.size());
        std::unordered_map<std::string, int> tf;
        for (const auto& term : terms) ++tf[term];
        for (const auto& [term, count] : tf) {
            stats.postings[term].emplace_back(static_cast<int>(i), count);
        }
    }
    stats.avg_chunk_term_count =
        corpus.chunks.empty() ? 0.0 : total_terms / static_cast<double>(corpus.chunks.size());
    return stats;
}

}  // namespace

Index build_index(Corpus corpus, const RetrieverConfig& config, std::shared_ptr<Embedder> embedder) {
    config.validate();
    Index index;
    index.config = config;
    index.corpus = std::move(corpus);
    if (config.backend == RetrieverBackend::Lexical) {
        if (index.corpus.empty()) {
            throw IndexError("empty corpus");
        }
        index.lexical = build_lexical_stats(index.corpus);
    } else {
        if (!embedder) {
            embedder = std::make_shared<HttpEmbedder>(config.endpoint, config.model);
        }
        index.embedder = std::move(embedder);
        std::vector<std::string> texts;
        texts.reserve(index.corpus.chunks.size());
        for (const auto& chunk : index.corpus.chunks) texts.push_back(chunk.text);
        if (!texts.empty()) {
            try {
                index.vectors = index.embedder->embed(texts);
            } catch (const TransportError& e) {
                throw IndexError(std::string("indexing failed: ") + e.what());
            }
        }
    }
    return index;
}

namespace {

std::vector<RetrievedPassage> rank_and_truncate(std::vector<std::pair<double, const Chunk*>> scored,
                                                int k) {
    std::sort(scored.begin(), scored.end(), [](const auto& lhs, const auto& rhs) {
        if (lhs.first != rhs.first) return lhs.first > rhs.first;
        return lhs.second->chunk_id < rhs.second->chunk_id;
    });
    if (static_cast<size_t>(k) < scored.size()) {
        scored.resize(static_cast<size_t>(k));
    }
    std::vector<RetrievedPassage> out;
    out.reserve(scored.size());
    for (size_t i = 0; i < scored.size(); ++i) {
        out.push_back({scored[i].second->chunk_id, scored[i].first, static_cast<int>(i) + 1});
    }
    return out;
}

std::vector<RetrievedPassage> retrieve_lexical(const Index& index, const std::string& query, int k) {
    auto terms = analyze_terms(query);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    const double n_chunks = static_cast<double>(index.corpus.chunks.size());
    std::unordered_map<int, double> scores;
    for (const auto& term : terms) {
        auto it = index.lexical.postings.find(term);
        if (it == index.lexical.postings.end()) continue;
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log(1.0 + (n_chunks - df + 0.5) / (df + 0.5));
        for (const auto& [ordinal, tf] : it->second) {
            const double len = static_cast<double>(index.lexical.chunk_term_counts[static_cast<size_t>(ordinal)]);
            const double norm = 1.0 - index.config.b + index.config.b * len / index.lexical.avg_chunk_term_count;
            const double tf_part = (static_cast<double>(tf) * (index.config.k1 + 1.0)) /
                                   (static_cast<double>(tf) + index.config.k1 * norm);
            scores[ordinal] += idf * tf_part;
        }
    }
    std::vector<std::pair<double, const Chunk*>> scored;
    scored.reserve(scores.size());
    for (const auto& [ordinal, score] : scores) {
        scored.emplace_back(score, &index.corpus.chunks[static_cast<size_t>(ordinal)]);
    }
    return rank_and_truncate(std::move(scored), k);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    const size_t n = std::min(a.size(), b.size());
    for (size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<RetrievedPassage> retrieve_embedding(const Index& index, const std::string& query, int k) {
    const auto query_vecs = index.embedder->embed({query});
    std::vector<std::pair<double, const Chunk*>> scored;
    scored.reserve(index.vectors.size());
    for (size_t i = 0; i < index.vectors.size(); ++i) {
        scored.emplace_back(cosine(query_vecs[0], index.vectors[i]), &index.corpus.chunks[i]);
    }
    return rank_and_truncate(std::move(scored), k);
}

}  // namespace

std::vector<RetrievedPassage> retrieve(const Index& index, const std::string& query, int k) {
    if (k < 1) throw UserError("k must be >= 1");
    if (query.empty()) throw UserError("empty query");
    if (index.config.backend == RetrieverBackend::Lexical) {
        return retrieve_lexical(index, query, k);
    }
    return retrieve_embedding(index, query, k);
}

std::vector<RetrievedPassage> early_knowledge(const Index& index, const std::string& question,
                                              const RetrieverConfig& config) {
    if (question.empty()) throw UserError("empty question");
    return retrieve(index, question, config.early_k.value_or(config.k));
}

void save_index(const Index& index, const std::string& path) {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["backend"] = index.config.backend == RetrieverBackend::Lexical ? "lexical" : "embedding-endpoint";
    doc["k"] = index.config.k;
    doc["k1"] = index.config.k1;
    doc["b"] = index.config.b;
    doc["endpoint"] = index.config.endpoint;
    doc["model"] = index.config.model;
    nlohmann::json docs = nlohmann::json::array();
    for (const auto& d : index.corpus.documents) {
        docs.push_back({{"id", d.id}, {"title", d.title}, {"text", d.text}});
    }
    doc["documents"] = std::move(docs);
    nlohmann::json chunks = nlohmann::json::array();
    for (const auto& c : index.corpus.chunks) {
        chunks.push_back({{"chunk_id", c.chunk_id},
                          {"doc_id", c.doc_id},
                          {"text", c.text},
                          {"token_count", c.token_count}});
    }
    doc["chunks"] = std::move(chunks);
    if (!index.vectors.empty()) {
        doc["vectors"] = index.vectors;
    }
    write_file_atomic(path, doc.dump() + "\n");
}

Index load_index(const std::string& path, std::shared_ptr<Embedder> embedder) {
    nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || doc.value("version", 0) != 1) {
        throw IndexError("unrecognized index file: " + path);
    }
    Index index;
    index.config.backend = doc.value("backend", std::string("lexical")) == "lexical"
                               ? RetrieverBackend::Lexical
                               : RetrieverBackend::EmbeddingEndpoint;
    index.config.k = doc.value("k", 5);
    index.config.k1 = doc.value("k1", 1.2);
    index.config.b = doc.value("b", 0.75);
    index.config.endpoint = doc.value("endpoint", std::string());
    index.config.model = doc.value("model", std::string());
    for (const auto& d : doc["documents"]) {
        index.corpus.documents.push_back(
            {d["id"].get<std::string>(), d.value("title", std::string()), d["text"].get<std::string>()});
    }
    for (const auto& c : doc["chunks"]) {
        index.corpus.chunks.push_back({c["chunk_id"].get<std::string>(), c["doc_id"].get<std::string>(),
                                       c["text"].get<std::string>(), c["token_count"].get<int>()});
    }
    if (index.config.backend == RetrieverBackend::Lexical) {
        index.lexical = build_lexical_stats(index.corpus);
    } else {
        if (doc.contains("vectors")) {
            index.vectors = doc["vectors"].get<std::vector<std::vector<double>>>();
        }
        index.embedder = embedder ? std::move(embedder)
                                  : std::make_shared<HttpEmbedder>(index.config.endpoint, index.config.model);
    }
    return index;
}

}  // namespace eka
