#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace eka {

struct GenerationRequest {
    std::string prompt;
    std::vector<std::string> stop_sequences;  // subset of {"</query>", "</answer>"}
    int max_tokens = 1024;
    double temperature = 0.0;
    int top_logprobs = 5;  // in [0, 20]

    void validate() const;
};

struct GenerationChunk {
    std::string token_text;
    double logprob = 0.0;  // of the chosen token, <= 0
    // (token_text, logprob) sorted by logprob descending, length <= top_logprobs.
    std::vector<std::pair<std::string, double>> top_alternatives;
};

enum class FinishKind { StopSequence, Length, EndOfSequence };

struct FinishReason {
    FinishKind kind = FinishKind::EndOfSequence;
    std::string stop_sequence;  // set iff kind == StopSequence
};

struct GenerationResult {
    std::vector<GenerationChunk> chunks;
    std::string text;  // concatenation of chunk texts; never extends past the first stop
    FinishReason finish;
};

using ChunkCallback = std::function<void(const GenerationChunk&)>;

enum class BackendKind { HttpEndpoint, ScriptedMock, PolicySim };

struct BackendConfig {
    BackendKind kind = BackendKind::ScriptedMock;
    std::string endpoint;
    std::string model;
    std::string api_key_env = "EKA_API_KEY";
    int timeout_seconds = 60;
    int max_retries = 3;
    // ScriptedMock: path to a line-delimited turn script.
    // PolicySim: path to a policy spec file.
    std::string script;
    uint64_t seed = 0;

    void validate() const;
};

BackendKind backend_kind_from_name(const std::string& name);
std::string backend_kind_name(BackendKind kind);

class Backend {
public:
    virtual ~Backend() = default;
    // Generates until a stop sequence, the token limit, or end of sequence.
    // on_chunk (optional) observes each chunk as it is produced; the same
    // chunks are returned in the result.
    virtual GenerationResult generate(const GenerationRequest& request,
                                      const ChunkCallback& on_chunk = nullptr) = 0;
    virtual std::string describe() const = 0;
    // Remote endpoints expose only top-n logprobs, so downstream entropy is a
    // renormalized approximation; no backend here sees full distributions.
    virtual bool full_distribution() const { return false; }
};

// Deterministic tokenization used by the offline backends: each protocol
// delimiter is its own token; otherwise maximal runs of leading-whitespace +
// non-whitespace. Concatenating the tokens reproduces the input exactly.
std::vector<std::string> mock_tokenize(const std::string& text);

struct ScriptTurn {
    std::string expect_substring;  // live prompt must contain this
    std::string emit;
    // Exactly one token per emitted token when present.
    std::optional<std::vector<double>> logprobs;
    // When set to n: every token gets logprob ln(1/n) and n equal-probability
    // alternatives (entropy ln n under renormalization).
    std::optional<int> uniform_alternatives;
};

// Loads a line-delimited script: {"expect_substring": ..., "emit": ...,
// "logprobs": [...]?, "uniform_alternatives": n?}. Errors name the line.
std::vector<ScriptTurn> load_script(const std::string& path);

// Replays a fixed script, one turn per generate() call. Turn i answers only
// when the live prompt contains turn i's expected substring; mismatches and
// exhaustion are fixture errors. Turn matching is serialized internally.
class ScriptedMockBackend : public Backend {
public:
    explicit ScriptedMockBackend(std::vector<ScriptTurn> turns);

    GenerationResult generate(const GenerationRequest& request,
                              const ChunkCallback& on_chunk = nullptr) override;
    std::string describe() const override;

private:
    std::vector<ScriptTurn> turns_;
    size_t next_turn_ = 0;
    std::mutex mutex_;
};

struct PolicySpec {
    struct Evidence {
        std::string needle;  // fact is in context when the prompt contains this
        std::string query;   // issued to fetch it
        std::string label;
    };
    std::string answer;
    std::vector<Evidence> evidence;
};

PolicySpec load_policy_spec(const std::string& path);

// A deterministic model of a well-aligned policy: answers as soon as every
// evidence needle appears in the prompt, otherwise thinks and queries for the
// first missing fact. Stateless across calls, so one instance can serve both
// the early-knowledge and baseline pipelines.
class SimulatedPolicyBackend : public Backend {
public:
    explicit SimulatedPolicyBackend(PolicySpec spec);

    GenerationResult generate(const GenerationRequest& request,
                              const ChunkCallback& on_chunk = nullptr) override;
    std::string describe() const override;

private:
    PolicySpec spec_;
};

// OpenAI-compatible chat-completions client with logprobs and stop sequences.
// Timeouts, HTTP 429 and 5xx retry with exponential backoff up to max_retries,
// then raise a transport error; structurally malformed responses raise a
// protocol error. When the server reports a stop finish but strips the stop
// string, a reported matched stop is re-appended so downstream text always
// ends at (and includes) the triggered sequence.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendConfig config);

    GenerationResult generate(const GenerationRequest& request,
                              const ChunkCallback& on_chunk = nullptr) override;
    std::string describe() const override;

private:
    BackendConfig config_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace eka
