#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "eka/common.hpp"
#include "eka/llm_backend.hpp"
#include "eka/tag_protocol.hpp"

using namespace eka;

namespace {

std::string join(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) out += t;
    return out;
}

std::string random_text(std::mt19937_64& rng) {
    static const std::vector<std::string> pieces = {
        "<think>", "</think>", "<query>", "</query>", "<answer>",  "</answer>",
        "word",    " two",     "\nline",  "  gap",    "{\"a\":1}", "?!",
    };
    std::uniform_int_distribution<size_t> len(0, 12);
    std::uniform_int_distribution<size_t> pick(0, pieces.size() - 1);
    std::string out;
    const size_t n = len(rng);
    for (size_t i = 0; i < n; ++i) out += pieces[pick(rng)];
    return out;
}

GenerationRequest plain_request(std::vector<std::string> stops = {}) {
    GenerationRequest request;
    request.prompt = "Question: anything\nAssistant: ";
    request.stop_sequences = std::move(stops);
    return request;
}

}  // namespace

TEST_CASE("mock_tokenize keeps delimiters standalone and is lossless") {
    const auto tokens = mock_tokenize("<think>so, two words</think>\n<answer>x</answer>");
    REQUIRE(tokens.size() == 9);
    CHECK(tokens[0] == "<think>");
    CHECK(tokens[1] == "so,");
    CHECK(tokens[2] == " two");
    CHECK(tokens[3] == " words");
    CHECK(tokens[4] == "</think>");
    CHECK(tokens[5] == "\n");
    CHECK(tokens[6] == "<answer>");
    CHECK(tokens[7] == "x");
    CHECK(tokens[8] == "</answer>");

    CHECK(mock_tokenize("").empty());
    CHECK(mock_tokenize("   ") == std::vector<std::string>{"   "});

    std::mt19937_64 rng(20240817);
    for (int trial = 0; trial < 300; ++trial) {
        const std::string text = random_text(rng);
        const auto pieces = mock_tokenize(text);
        CHECK(join(pieces) == text);
        for (const auto& piece : pieces) {
            // A delimiter never hides inside a longer token.
            if (piece.size() > 1 && piece.find('<') != std::string::npos) {
                for (const char* delim : {"<think>", "</think>", "<query>", "</query>",
                                          "<answer>", "</answer>"}) {
                    if (piece == delim) continue;
                    CHECK(piece.find(delim) == std::string::npos);
                }
            }
        }
    }
}

TEST_CASE("scripted turns stop at the stop sequence and report finish kinds") {
    std::vector<ScriptTurn> turns(3);
    turns[0].emit = "<think>a</think><query>{ \"query\": \"q\" }</query> trailing junk";
    turns[1].emit = "one two three four five";
    turns[2].emit = "short";
    ScriptedMockBackend backend(turns);

    auto stopped = backend.generate(plain_request({"</query>", "</answer>"}));
    CHECK(stopped.finish.kind == FinishKind::StopSequence);
    CHECK(stopped.finish.stop_sequence == "</query>");
    // Never extends past the triggered stop.
    CHECK(stopped.text == "<think>a</think><query>{ \"query\": \"q\" }</query>");
    CHECK(stopped.text.find("trailing") == std::string::npos);

    auto request = plain_request();
    request.max_tokens = 2;
    auto truncated = backend.generate(request);
    CHECK(truncated.finish.kind == FinishKind::Length);
    CHECK(truncated.chunks.size() == 2);
    CHECK(truncated.text == "one two");

    auto finished = backend.generate(plain_request({"</answer>"}));
    CHECK(finished.finish.kind == FinishKind::EndOfSequence);
    CHECK(finished.finish.stop_sequence.empty());
    CHECK(finished.text == "short");

    CHECK_THROWS_AS(backend.generate(plain_request()), FixtureError);
    try {
        ScriptedMockBackend fresh(turns);
        auto r = plain_request();
        fresh.generate(r);
        fresh.generate(r);
        fresh.generate(r);
        fresh.generate(r);
        FAIL("expected exhaustion");
    } catch (const FixtureError& e) {
        CHECK(std::string(e.what()) == "script exhausted at turn 4");
    }
}

TEST_CASE("expect_substring gates each scripted turn") {
    std::vector<ScriptTurn> turns(1);
    turns[0].expect_substring = "magic phrase";
    turns[0].emit = "ok";
    ScriptedMockBackend backend(turns);
    auto request = plain_request();
    CHECK_THROWS_AS(backend.generate(request), FixtureError);

    ScriptedMockBackend fresh(turns);
    request.prompt = "prefix magic phrase suffix";
    CHECK(fresh.generate(request).text == "ok");
}

TEST_CASE("uniform alternatives pin the per-token distribution") {
    std::vector<ScriptTurn> turns(1);
    turns[0].emit = "a b c";
    turns[0].uniform_alternatives = 5;
    ScriptedMockBackend backend(turns);

    auto request = plain_request();
    request.top_logprobs = 3;
    const auto result = backend.generate(request);
    REQUIRE(result.chunks.size() == 3);
    for (const auto& chunk : result.chunks) {
        CHECK(chunk.logprob == doctest::Approx(std::log(0.2)).epsilon(1e-15));
        REQUIRE(chunk.top_alternatives.size() == 3);  // min(n, top_logprobs)
        CHECK(chunk.top_alternatives[0].first == chunk.token_text);
        for (const auto& [text, lp] : chunk.top_alternatives) {
            CHECK(lp == doctest::Approx(std::log(0.2)).epsilon(1e-15));
        }
    }

    turns[0].uniform_alternatives = 2;
    ScriptedMockBackend wide(turns);
    request.top_logprobs = 5;
    const auto narrow = wide.generate(request);
    CHECK(narrow.chunks[0].top_alternatives.size() == 2);
}

TEST_CASE("explicit logprobs ride along one per token") {
    std::vector<ScriptTurn> turns(1);
    turns[0].emit = "x y";
    turns[0].logprobs = std::vector<double>{-0.25, -1.5};
    ScriptedMockBackend backend(turns);
    const auto result = backend.generate(plain_request());
    REQUIRE(result.chunks.size() == 2);
    CHECK(result.chunks[0].logprob == -0.25);
    CHECK(result.chunks[1].logprob == -1.5);

    turns[0].logprobs = std::vector<double>{-0.25};
    ScriptedMockBackend bad(turns);
    CHECK_THROWS_AS(bad.generate(plain_request()), FixtureError);
}

TEST_CASE("chunk callback observes the same chunks the result holds") {
    std::vector<ScriptTurn> turns(1);
    turns[0].emit = "one two three";
    ScriptedMockBackend backend(turns);
    std::vector<std::string> seen;
    const auto result = backend.generate(
        plain_request(), [&](const GenerationChunk& chunk) { seen.push_back(chunk.token_text); });
    REQUIRE(seen.size() == result.chunks.size());
    for (size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == result.chunks[i].token_text);
}

TEST_CASE("load_script reports fixture problems with line numbers") {
    auto write_tmp = [](const std::string& name, const std::string& content) {
        const std::string path = "/tmp/" + name;
        write_file_atomic(path, content);
        return path;
    };
    const auto ok = load_script(write_tmp(
        "script_ok.jsonl",
        "{\"expect_substring\": \"Q\", \"emit\": \"hi\", \"uniform_alternatives\": 4}\n"
        "\n"
        "{\"emit\": \"x y\", \"logprobs\": [-1.0, -2.0]}\n"));
    REQUIRE(ok.size() == 2);
    CHECK(ok[0].expect_substring == "Q");
    CHECK(ok[0].uniform_alternatives == 4);
    CHECK(ok[1].expect_substring.empty());
    REQUIRE(ok[1].logprobs.has_value());
    CHECK(ok[1].logprobs->size() == 2);

    auto check_error = [&](const std::string& name, const std::string& content,
                           const std::string& needle) {
        const auto path = write_tmp(name, content);
        try {
            load_script(path);
            FAIL("expected FixtureError for ", name);
        } catch (const FixtureError& e) {
            const std::string what = e.what();
            CHECK(what.find(needle) != std::string::npos);
            CHECK(what.find(path) != std::string::npos);
        }
    };
    check_error("script_bad1.jsonl", "[]\n", ":1: not a JSON object");
    check_error("script_bad2.jsonl", "{\"emit\": \"a\"}\n{\"expect_substring\": \"x\"}\n",
                ":2: missing \"emit\" string");
    check_error("script_bad3.jsonl", "{\"emit\": \"a b\", \"logprobs\": [-1.0]}\n",
                ":1: logprobs length does not match");
    check_error("script_bad4.jsonl", "{\"emit\": \"a\", \"uniform_alternatives\": 0}\n",
                "uniform_alternatives must be >= 1");
    CHECK_THROWS_AS(load_script("/tmp/definitely-not-here.jsonl"), UserError);
}

TEST_CASE("policy specs validate and the simulated policy fills gaps in order") {
    const std::string spec_path = std::string(EKA_FIXTURES_DIR) + "/policy/two_hop_directors.json";
    const PolicySpec spec = load_policy_spec(spec_path);
    CHECK(spec.answer == "Saranggola");
    REQUIRE(spec.evidence.size() == 4);

    SimulatedPolicyBackend policy(spec);
    auto request = plain_request({"</query>", "</answer>"});
    auto first = policy.generate(request);
    CHECK(first.finish.stop_sequence == "</query>");
    const auto open = first.text.find(kQueryOpen);
    const auto close = first.text.find(kQueryClose);
    REQUIRE(open != std::string::npos);
    REQUIRE(close != std::string::npos);
    TaggedSegment segment;
    segment.kind = TagKind::Query;
    segment.content = first.text.substr(open + std::string(kQueryOpen).size(),
                                        close - open - std::string(kQueryOpen).size());
    CHECK(is_structured_query(segment.content));
    CHECK(extract_query(segment) == spec.evidence[0].query);

    // Prompt carrying every needle flips the policy to answering.
    for (const auto& evidence : spec.evidence) request.prompt += "\n" + evidence.needle;
    auto done = policy.generate(request);
    CHECK(done.finish.stop_sequence == "</answer>");
    CHECK(done.text.find(std::string(kAnswerOpen) + spec.answer + std::string(kAnswerClose)) !=
          std::string::npos);

    // Partial context: the first missing needle drives the query choice.
    auto partial = plain_request({"</query>", "</answer>"});
    partial.prompt += "\n" + spec.evidence[0].needle;
    auto second = policy.generate(partial);
    CHECK(second.text.find(spec.evidence[1].query) != std::string::npos);

    auto write_tmp = [](const std::string& name, const std::string& content) {
        const std::string path = "/tmp/" + name;
        write_file_atomic(path, content);
        return path;
    };
    CHECK_THROWS_AS(load_policy_spec(write_tmp("spec_bad1.json", "[]")), FixtureError);
    CHECK_THROWS_AS(load_policy_spec(write_tmp("spec_bad2.json", "{\"answer\": \"a\"}")),
                    FixtureError);
    CHECK_THROWS_AS(
        load_policy_spec(write_tmp("spec_bad3.json",
                                   "{\"answer\": \"a\", \"evidence\": [{\"needle\": \"n\"}]}")),
        FixtureError);
    CHECK_THROWS_AS(
        load_policy_spec(write_tmp(
            "spec_bad4.json",
            "{\"answer\": \"a\", \"evidence\": [{\"needle\": \"\", \"query\": \"q\"}]}")),
        FixtureError);
}

TEST_CASE("request and config validation bounds") {
    GenerationRequest request;
    CHECK_THROWS_AS(request.validate(), UserError);  // empty prompt
    request.prompt = "p";
    request.max_tokens = 0;
    CHECK_THROWS_AS(request.validate(), UserError);
    request.max_tokens = 1;
    request.top_logprobs = 21;
    CHECK_THROWS_AS(request.validate(), UserError);
    request.top_logprobs = 0;
    request.temperature = -0.1;
    CHECK_THROWS_AS(request.validate(), UserError);
    request.temperature = 0.0;
    CHECK_NOTHROW(request.validate());

    BackendConfig config;
    config.kind = BackendKind::ScriptedMock;
    CHECK_THROWS_AS(config.validate(), ConfigError);  // script path missing
    config.script = "s.jsonl";
    CHECK_NOTHROW(config.validate());
    config.kind = BackendKind::HttpEndpoint;
    config.endpoint.clear();
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.endpoint = "http://localhost:1";
    config.model = "m";
    CHECK_NOTHROW(config.validate());
    config.timeout_seconds = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);

    CHECK(backend_kind_from_name("scripted-mock") == BackendKind::ScriptedMock);
    CHECK(backend_kind_name(BackendKind::PolicySim) == "policy-sim");
    CHECK_THROWS_AS(backend_kind_from_name("magic"), ConfigError);

    BackendConfig mock;
    mock.kind = BackendKind::ScriptedMock;
    mock.script = std::string(EKA_FIXTURES_DIR) + "/scripts/eka_case.jsonl";
    const auto backend = make_backend(mock);
    CHECK(backend->describe() == "scripted-mock(3 turns)");
    CHECK_FALSE(backend->full_distribution());
}
