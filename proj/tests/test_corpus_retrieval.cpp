#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "eka/common.hpp"
#include "eka/corpus.hpp"
#include "eka/retrieval.hpp"

using namespace eka;

namespace {

const std::string kFilms = std::string(EKA_FIXTURES_DIR) + "/corpus_films.jsonl";
const std::string kTiny = std::string(EKA_FIXTURES_DIR) + "/corpus_tiny.jsonl";

// Brute-force scorer, written against the published formula rather than the
// index structures: per-chunk loops, no postings.
std::vector<RetrievedPassage> brute_force_bm25(const Corpus& corpus, const std::string& query,
                                               int k, double k1, double b) {
    auto terms = analyze_terms(query);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    const size_t n = corpus.chunks.size();
    std::vector<std::map<std::string, int>> tf(n);
    double total_len = 0.0;
    for (size_t c = 0; c < n; ++c) {
        for (const auto& term : analyze_terms(corpus.chunks[c].text)) ++tf[c][term];
        for (const auto& [term, count] : tf[c]) total_len += count;
    }
    const double avg = total_len / static_cast<double>(n);

    std::vector<RetrievedPassage> hits;
    for (size_t c = 0; c < n; ++c) {
        double score = 0.0;
        bool candidate = false;
        double len = 0.0;
        for (const auto& [term, count] : tf[c]) len += count;
        for (const auto& term : terms) {
            const auto it = tf[c].find(term);
            if (it == tf[c].end()) continue;
            candidate = true;
            double df = 0.0;
            for (size_t other = 0; other < n; ++other) df += tf[other].count(term) ? 1.0 : 0.0;
            const double idf =
                std::log(1.0 + (static_cast<double>(n) - df + 0.5) / (df + 0.5));
            const double freq = static_cast<double>(it->second);
            const double norm = 1.0 - b + b * len / avg;
            score += idf * freq * (k1 + 1.0) / (freq + k1 * norm);
        }
        if (candidate) hits.push_back({corpus.chunks[c].chunk_id, score, 0});
    }
    std::sort(hits.begin(), hits.end(), [](const auto& x, const auto& y) {
        if (x.score != y.score) return x.score > y.score;
        return x.chunk_id < y.chunk_id;
    });
    if (static_cast<int>(hits.size()) > k) hits.resize(static_cast<size_t>(k));
    for (size_t i = 0; i < hits.size(); ++i) hits[i].rank = static_cast<int>(i) + 1;
    return hits;
}

}  // namespace

TEST_CASE("chunking splits on token windows and preserves bytes") {
    Document doc{"d1", "t", "alpha beta  gamma delta epsilon"};
    const auto chunks = chunk_document(doc, 2, 1);
    REQUIRE(chunks.size() == 4);
    CHECK(chunks[0].chunk_id == "d1#0000");
    CHECK(chunks[0].text == "alpha beta");
    CHECK(chunks[1].text == "beta  gamma");  // double space survives
    CHECK(chunks[3].text == "delta epsilon");
    for (const auto& chunk : chunks) CHECK(chunk.token_count == 2);

    CHECK(chunk_document(doc, 40, 0).size() == 1);
    CHECK(chunk_document({"d2", "", ""}, 4, 0).empty());
    CHECK_THROWS_AS(chunk_document(doc, 2, 2), IngestError);
    CHECK_THROWS_AS(chunk_document(doc, 0, 0), IngestError);
}

TEST_CASE("ingest validates records and addresses chunks") {
    const Corpus corpus = ingest_corpus(kTiny, 128, 32);
    REQUIRE(corpus.documents.size() == 2);
    REQUIRE(corpus.chunks.size() == 2);
    CHECK(corpus.find_chunk("c1#0000") != nullptr);
    CHECK(corpus.find_chunk("c1#0000")->text == "the cat sat");
    CHECK(corpus.find_chunk("missing#0000") == nullptr);

    const std::string dir = std::string(EKA_FIXTURES_DIR) + "/..";
    auto write_tmp = [](const std::string& name, const std::string& content) {
        const std::string path = "/tmp/" + name;
        write_file_atomic(path, content);
        return path;
    };
    CHECK_THROWS_AS(ingest_corpus(write_tmp("bad1.jsonl", "{\"text\": \"x\"}\n"), 8, 0),
                    IngestError);
    CHECK_THROWS_AS(ingest_corpus(write_tmp("bad2.jsonl", "not json\n"), 8, 0), IngestError);
    CHECK_THROWS_AS(
        ingest_corpus(write_tmp("bad3.jsonl",
                                "{\"id\": \"a\", \"text\": \"x\"}\n{\"id\": \"a\", \"text\": \"y\"}\n"),
                      8, 0),
        IngestError);
    try {
        ingest_corpus(write_tmp("bad4.jsonl", "{\"id\": \"a\", \"text\": \"x\"}\n{}\n"), 8, 0);
        FAIL("expected IngestError");
    } catch (const IngestError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK(ingest_corpus(write_tmp("ok.jsonl", "{\"id\": \"a\", \"text\": \"x\"}\n\n"), 8, 0)
              .documents.size() == 1);

    CHECK_THROWS_AS(ingest_corpus("/tmp/definitely-not-here.jsonl", 8, 0), UserError);
}

TEST_CASE("lexical ranking equals brute force on the fixture corpora") {
    const RetrieverConfig config;
    const std::vector<std::string> queries = {
        "Leslie Goodwins birth year",
        "Gil Portes birth year",
        "Which film has the director born later, I'll Tell The World or Saranggola?",
        "Saranggola director",
        "Who directed I'll Tell the World?",
        "Spanish drama film",
        "born",
        "cat",
        "the cat dogs",
        "nothing matches this zz",
    };
    for (const std::string& path : {kFilms, kTiny}) {
        const Index index = build_index(ingest_corpus(path, 128, 32), config);
        for (const auto& query : queries) {
            for (int k : {1, 3, 5, 20}) {
                const auto want = brute_force_bm25(index.corpus, query, k, config.k1, config.b);
                const auto got = retrieve(index, query, k);
                REQUIRE(got.size() == want.size());
                for (size_t i = 0; i < got.size(); ++i) {
                    CHECK(got[i].chunk_id == want[i].chunk_id);
                    CHECK(got[i].rank == want[i].rank);
                    CHECK(std::fabs(got[i].score - want[i].score) < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("single term scoring lands on the closed form") {
    const Index index = build_index(ingest_corpus(kTiny, 128, 32), RetrieverConfig{});
    const auto hits = retrieve(index, "cat", 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].chunk_id == "c1#0000");
    CHECK(hits[0].rank == 1);
    // N=2, df=1, tf=1, len=avg: idf*tf_part = ln(2) * 1.
    CHECK(hits[0].score == doctest::Approx(0.6931471805599453).epsilon(1e-15));
}

TEST_CASE("ties break toward the ascending chunk id") {
    const Index index = build_index(ingest_corpus(kTiny, 128, 32), RetrieverConfig{});
    const auto hits = retrieve(index, "cat dogs", 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].score == hits[1].score);
    CHECK(hits[0].chunk_id == "c1#0000");
    CHECK(hits[1].chunk_id == "c2#0000");
}

TEST_CASE("retrieve argument validation") {
    const Index index = build_index(ingest_corpus(kTiny, 128, 32), RetrieverConfig{});
    CHECK_THROWS_AS(retrieve(index, "", 3), UserError);
    CHECK_THROWS_AS(retrieve(index, "cat", 0), UserError);
    CHECK(retrieve(index, "zz unknown terms", 3).empty());
    CHECK_THROWS_AS(build_index(Corpus{}, RetrieverConfig{}), IndexError);
    RetrieverConfig bad;
    bad.k = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = RetrieverConfig{};
    bad.b = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("early_knowledge puts both director passages in the top five") {
    const Index index = build_index(ingest_corpus(kFilms, 128, 32), RetrieverConfig{});
    RetrieverConfig config;
    const auto passages = early_knowledge(
        index, "Which film has the director born later, I'll Tell The World or Saranggola?",
        config);
    REQUIRE(passages.size() == 5);
    std::vector<std::string> ids;
    for (const auto& p : passages) ids.push_back(p.chunk_id);
    CHECK(std::find(ids.begin(), ids.end(), "f04#0000") != ids.end());
    CHECK(std::find(ids.begin(), ids.end(), "f08#0000") != ids.end());

    config.early_k = 2;
    CHECK(early_knowledge(index, "Saranggola", config).size() <= 2);
    CHECK_THROWS_AS(early_knowledge(index, "", config), UserError);
}

TEST_CASE("index save and load round trip") {
    const std::string path = "/tmp/roundtrip.idx";
    const Index index = build_index(ingest_corpus(kFilms, 128, 32), RetrieverConfig{});
    save_index(index, path);
    const Index loaded = load_index(path);
    CHECK(loaded.corpus.chunks.size() == index.corpus.chunks.size());
    CHECK(loaded.lexical.term_count() == index.lexical.term_count());
    const auto before = retrieve(index, "Leslie Goodwins birth year", 5);
    const auto after = retrieve(loaded, "Leslie Goodwins birth year", 5);
    REQUIRE(before.size() == after.size());
    for (size_t i = 0; i < before.size(); ++i) {
        CHECK(before[i].chunk_id == after[i].chunk_id);
        CHECK(before[i].score == after[i].score);
    }
    CHECK_THROWS_AS(load_index("/tmp/definitely-not-here.idx"), UserError);
}

TEST_CASE("hashed embedder is deterministic and the embedding index ranks by cosine") {
    HashedEmbedder embedder(32);
    const auto once = embedder.embed({"the cat sat", "dogs bark loudly"});
    const auto twice = embedder.embed({"the cat sat", "dogs bark loudly"});
    CHECK(once == twice);
    REQUIRE(once.size() == 2);
    CHECK(once[0].size() == 32);
    CHECK(once[0] != once[1]);
    CHECK_THROWS_AS(HashedEmbedder(1), ConfigError);

    RetrieverConfig config;
    config.backend = RetrieverBackend::EmbeddingEndpoint;
    const Index index = build_index(ingest_corpus(kTiny, 128, 32), config,
                                    std::make_shared<HashedEmbedder>(32));
    const auto hits = retrieve(index, "the cat sat", 2);
    REQUIRE(!hits.empty());
    CHECK(hits[0].chunk_id == "c1#0000");  // identical text embeds identically
    CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-12));

    const std::string path = "/tmp/roundtrip_embed.idx";
    save_index(index, path);
    const Index loaded = load_index(path, std::make_shared<HashedEmbedder>(32));
    const auto again = retrieve(loaded, "the cat sat", 2);
    REQUIRE(!again.empty());
    CHECK(again[0].chunk_id == hits[0].chunk_id);
}
