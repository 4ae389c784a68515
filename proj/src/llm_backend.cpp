#include "eka/llm_backend.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "eka/common.hpp"
#include "eka/tag_protocol.hpp"
#include "httplib.h"
#include "json.hpp"

namespace eka {

void GenerationRequest::validate() const {
    if (prompt.empty()) throw UserError("generation request requires a nonempty prompt");
    if (max_tokens < 1) throw UserError("max_tokens must be >= 1");
    if (temperature < 0.0) throw UserError("temperature must be >= 0");
    if (top_logprobs < 0 || top_logprobs > 20) throw UserError("top_logprobs must lie in [0, 20]");
}

void BackendConfig::validate() const {
    if (timeout_seconds < 1) throw ConfigError("backend.timeout_seconds must be >= 1");
    if (max_retries < 0) throw ConfigError("backend.max_retries must be >= 0");
    switch (kind) {
        case BackendKind::HttpEndpoint:
            if (endpoint.empty() || model.empty()) {
                throw ConfigError("http-endpoint backend requires endpoint and model");
            }
            break;
        case BackendKind::ScriptedMock:
            if (script.empty()) throw ConfigError("scripted-mock backend requires a script path");
            break;
        case BackendKind::PolicySim:
            if (script.empty()) throw ConfigError("policy-sim backend requires a policy spec path");
            break;
    }
}

BackendKind backend_kind_from_name(const std::string& name) {
    if (name == "http-endpoint") return BackendKind::HttpEndpoint;
    if (name == "scripted-mock") return BackendKind::ScriptedMock;
    if (name == "policy-sim") return BackendKind::PolicySim;
    throw ConfigError("unknown backend kind: " + name);
}

std::string backend_kind_name(BackendKind kind) {
    switch (kind) {
        case BackendKind::HttpEndpoint: return "http-endpoint";
        case BackendKind::ScriptedMock: return "scripted-mock";
        case BackendKind::PolicySim: return "policy-sim";
    }
    return {};
}

std::vector<std::string> mock_tokenize(const std::string& text) {
    static constexpr std::array<std::string_view, 8> kDelims = {
        kThinkOpen, kThinkClose, kQueryOpen, kQueryClose,
        kAnswerOpen, kAnswerClose, kKnowledgeOpen, kKnowledgeClose};
    std::vector<std::string> tokens;
    std::string pending;
    auto flush = [&] {
        if (!pending.empty()) {
            tokens.push_back(std::move(pending));
            pending.clear();
        }
    };
    size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        for (const auto delim : kDelims) {
            if (text.compare(i, delim.size(), delim) == 0) {
                flush();
                tokens.emplace_back(delim);
                i += delim.size();
                matched = true;
                break;
            }
        }
        if (matched) continue;
        const char c = text[i];
        const bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (ws && !pending.empty() && std::isspace(static_cast<unsigned char>(pending.back())) == 0) {
            flush();
        }
        pending += c;
        ++i;
    }
    flush();
    return tokens;
}

namespace {

// Shared emission path for the offline backends: walk the tokens, attach
// logprobs, cut at the first triggered stop sequence, honor max_tokens.
GenerationResult emit_tokens(const std::string& emit, const GenerationRequest& request,
                             const std::optional<std::vector<double>>& logprobs,
                             const std::optional<int>& uniform_alternatives,
                             const ChunkCallback& on_chunk) {
    const std::vector<std::string> tokens = mock_tokenize(emit);
    if (logprobs && logprobs->size() != tokens.size()) {
        throw FixtureError("script logprobs hold " + std::to_string(logprobs->size()) +
                           " entries for " + std::to_string(tokens.size()) + " tokens");
    }
    GenerationResult result;
    for (size_t i = 0; i < tokens.size(); ++i) {
        GenerationChunk chunk;
        chunk.token_text = tokens[i];
        if (uniform_alternatives) {
            const int n = *uniform_alternatives;
            chunk.logprob = std::log(1.0 / static_cast<double>(n));
            const int shown = std::min(n, request.top_logprobs);
            for (int j = 0; j < shown; ++j) {
                chunk.top_alternatives.emplace_back(
                    j == 0 ? chunk.token_text : "alt" + std::to_string(j), chunk.logprob);
            }
        } else if (logprobs) {
            chunk.logprob = (*logprobs)[i];
            if (request.top_logprobs > 0) {
                chunk.top_alternatives.emplace_back(chunk.token_text, chunk.logprob);
            }
        }
        result.text += chunk.token_text;
        result.chunks.push_back(chunk);
        if (on_chunk) on_chunk(result.chunks.back());

        for (const auto& stop : request.stop_sequences) {
            if (result.text.size() >= stop.size() &&
                result.text.compare(result.text.size() - stop.size(), stop.size(), stop) == 0) {
                result.finish = {FinishKind::StopSequence, stop};
                return result;
            }
        }
        if (static_cast<int>(result.chunks.size()) >= request.max_tokens) {
            result.finish = {FinishKind::Length, {}};
            return result;
        }
    }
    result.finish = {FinishKind::EndOfSequence, {}};
    return result;
}

}  // namespace

std::vector<ScriptTurn> load_script(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<ScriptTurn> turns;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            throw FixtureError(path + ":" + std::to_string(line_no) + ": not a JSON object");
        }
        if (!doc.contains("emit") || !doc["emit"].is_string()) {
            throw FixtureError(path + ":" + std::to_string(line_no) + ": missing \"emit\" string");
        }
        ScriptTurn turn;
        turn.expect_substring = doc.value("expect_substring", std::string());
        turn.emit = doc["emit"].get<std::string>();
        if (doc.contains("logprobs")) {
            turn.logprobs = doc["logprobs"].get<std::vector<double>>();
            if (turn.logprobs->size() != mock_tokenize(turn.emit).size()) {
                throw FixtureError(path + ":" + std::to_string(line_no) +
                                   ": logprobs length does not match the emitted token count");
            }
        }
        if (doc.contains("uniform_alternatives")) {
            turn.uniform_alternatives = doc["uniform_alternatives"].get<int>();
            if (*turn.uniform_alternatives < 1) {
                throw FixtureError(path + ":" + std::to_string(line_no) +
                                   ": uniform_alternatives must be >= 1");
            }
        }
        turns.push_back(std::move(turn));
    }
    return turns;
}

ScriptedMockBackend::ScriptedMockBackend(std::vector<ScriptTurn> turns) : turns_(std::move(turns)) {}

GenerationResult ScriptedMockBackend::generate(const GenerationRequest& request,
                                               const ChunkCallback& on_chunk) {
    request.validate();
    std::lock_guard<std::mutex> lock(mutex_);
    if (next_turn_ >= turns_.size()) {
        throw FixtureError("script exhausted at turn " + std::to_string(next_turn_ + 1));
    }
    const ScriptTurn& turn = turns_[next_turn_];
    if (!turn.expect_substring.empty() && request.prompt.find(turn.expect_substring) == std::string::npos) {
        throw FixtureError("script turn " + std::to_string(next_turn_ + 1) +
                           " expected the prompt to contain: " + turn.expect_substring);
    }
    ++next_turn_;
    return emit_tokens(turn.emit, request, turn.logprobs, turn.uniform_alternatives, on_chunk);
}

std::string ScriptedMockBackend::describe() const {
    return "scripted-mock(" + std::to_string(turns_.size()) + " turns)";
}

PolicySpec load_policy_spec(const std::string& path) {
    nlohmann::json doc = nlohmann::json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw FixtureError(path + ": not a JSON object");
    }
    if (!doc.contains("answer") || !doc["answer"].is_string()) {
        throw FixtureError(path + ": missing \"answer\" string");
    }
    if (!doc.contains("evidence") || !doc["evidence"].is_array() || doc["evidence"].empty()) {
        throw FixtureError(path + ": missing nonempty \"evidence\" array");
    }
    PolicySpec spec;
    spec.answer = doc["answer"].get<std::string>();
    for (const auto& item : doc["evidence"]) {
        if (!item.is_object() || !item.contains("needle") || !item["needle"].is_string() ||
            !item.contains("query") || !item["query"].is_string()) {
            throw FixtureError(path + ": evidence entries need \"needle\" and \"query\" strings");
        }
        PolicySpec::Evidence evidence;
        evidence.needle = item["needle"].get<std::string>();
        evidence.query = item["query"].get<std::string>();
        evidence.label = item.value("label", evidence.query);
        if (evidence.needle.empty() || evidence.query.empty()) {
            throw FixtureError(path + ": evidence entries need nonempty needle and query");
        }
        spec.evidence.push_back(std::move(evidence));
    }
    return spec;
}

SimulatedPolicyBackend::SimulatedPolicyBackend(PolicySpec spec) : spec_(std::move(spec)) {}

GenerationResult SimulatedPolicyBackend::generate(const GenerationRequest& request,
                                                  const ChunkCallback& on_chunk) {
    request.validate();
    const PolicySpec::Evidence* missing = nullptr;
    for (const auto& evidence : spec_.evidence) {
        if (request.prompt.find(evidence.needle) == std::string::npos) {
            missing = &evidence;
            break;
        }
    }
    std::string emit;
    if (missing == nullptr) {
        emit = std::string(kThinkOpen) + "All required facts are in context." +
               std::string(kThinkClose) + "\n" + std::string(kAnswerOpen) + spec_.answer +
               std::string(kAnswerClose);
    } else {
        emit = std::string(kThinkOpen) + "Still missing: " + missing->label + "." +
               std::string(kThinkClose) + "\n" + std::string(kQueryOpen) + "{ \"query\": \"" +
               missing->query + "\" }" + std::string(kQueryClose);
    }
    return emit_tokens(emit, request, std::nullopt, std::nullopt, on_chunk);
}

std::string SimulatedPolicyBackend::describe() const {
    return "policy-sim(" + std::to_string(spec_.evidence.size()) + " facts)";
}

namespace {

std::pair<std::string, std::string> split_url(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    const size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = endpoint.find('/', host_start);
    if (path_start == std::string::npos) return {endpoint, "/v1/chat/completions"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) {
    config_.validate();
}

GenerationResult HttpBackend::generate(const GenerationRequest& request, const ChunkCallback& on_chunk) {
    request.validate();
    auto [base, path] = split_url(config_.endpoint);

    nlohmann::json body;
    body["model"] = config_.model;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
    body["max_tokens"] = request.max_tokens;
    body["temperature"] = request.temperature;
    if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
    if (request.top_logprobs > 0) {
        body["logprobs"] = true;
        body["top_logprobs"] = request.top_logprobs;
    }
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_failure;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(250 << (attempt - 1)));
        }
        httplib::Client client(base);
        client.set_connection_timeout(config_.timeout_seconds);
        client.set_read_timeout(config_.timeout_seconds);
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_failure = httplib::to_string(res.error());
            continue;
        }
        if (retryable_status(res->status)) {
            last_failure = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw ProtocolError("endpoint returned HTTP " + std::to_string(res->status) + ": " +
                                res->body.substr(0, 200));
        }

        nlohmann::json doc = nlohmann::json::parse(res->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || !doc["choices"].is_array() ||
            doc["choices"].empty()) {
            throw ProtocolError("endpoint response carries no choices");
        }
        const nlohmann::json& choice = doc["choices"][0];
        std::string content;
        if (choice.contains("message") && choice["message"].contains("content") &&
            choice["message"]["content"].is_string()) {
            content = choice["message"]["content"].get<std::string>();
        } else if (choice.contains("text") && choice["text"].is_string()) {
            content = choice["text"].get<std::string>();
        } else {
            throw ProtocolError("endpoint response carries no message content");
        }

        GenerationResult result;
        const std::string finish = choice.value("finish_reason", std::string("stop"));
        std::string matched_stop;
        for (const auto& stop : request.stop_sequences) {
            if (content.size() >= stop.size() &&
                content.compare(content.size() - stop.size(), stop.size(), stop) == 0) {
                matched_stop = stop;
                break;
            }
        }
        if (matched_stop.empty() && finish == "stop") {
            // Servers following the OpenAI convention strip the matched stop;
            // some report it back. Re-append so the text includes it.
            for (const char* field : {"matched_stop", "stop_reason"}) {
                if (choice.contains(field) && choice[field].is_string()) {
                    const std::string reported = choice[field].get<std::string>();
                    if (std::find(request.stop_sequences.begin(), request.stop_sequences.end(),
                                  reported) != request.stop_sequences.end()) {
                        content += reported;
                        matched_stop = reported;
                        break;
                    }
                }
            }
        }
        if (finish == "length") {
            result.finish = {FinishKind::Length, {}};
        } else if (!matched_stop.empty()) {
            result.finish = {FinishKind::StopSequence, matched_stop};
        } else {
            result.finish = {FinishKind::EndOfSequence, {}};
        }

        result.text = content;
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
            std::string reconstructed;
            std::vector<GenerationChunk> chunks;
            for (const auto& item : choice["logprobs"]["content"]) {
                GenerationChunk chunk;
                chunk.token_text = item.value("token", std::string());
                chunk.logprob = item.value("logprob", 0.0);
                if (item.contains("top_logprobs") && item["top_logprobs"].is_array()) {
                    for (const auto& alt : item["top_logprobs"]) {
                        chunk.top_alternatives.emplace_back(alt.value("token", std::string()),
                                                            alt.value("logprob", 0.0));
                    }
                    std::stable_sort(chunk.top_alternatives.begin(), chunk.top_alternatives.end(),
                                     [](const auto& a, const auto& b) { return a.second > b.second; });
                }
                reconstructed += chunk.token_text;
                chunks.push_back(std::move(chunk));
            }
            if (!matched_stop.empty() && reconstructed + matched_stop == content) {
                GenerationChunk stop_chunk;
                stop_chunk.token_text = matched_stop;
                chunks.push_back(std::move(stop_chunk));
                reconstructed += matched_stop;
            }
            if (reconstructed == content) {
                result.chunks = std::move(chunks);
            }
        }
        if (result.chunks.empty()) {
            // Degraded mode: no usable token-level data; keep the text whole.
            GenerationChunk chunk;
            chunk.token_text = result.text;
            result.chunks.push_back(std::move(chunk));
        }
        if (on_chunk) {
            for (const auto& chunk : result.chunks) on_chunk(chunk);
        }
        return result;
    }
    throw TransportError("endpoint " + config_.endpoint + " failed after " +
                         std::to_string(config_.max_retries + 1) + " attempts: " + last_failure);
}

std::string HttpBackend::describe() const {
    return "http-endpoint(" + config_.endpoint + ", " + config_.model + ")";
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    config.validate();
    switch (config.kind) {
        case BackendKind::HttpEndpoint:
            return std::make_unique<HttpBackend>(config);
        case BackendKind::ScriptedMock:
            return std::make_unique<ScriptedMockBackend>(load_script(config.script));
        case BackendKind::PolicySim:
            return std::make_unique<SimulatedPolicyBackend>(load_policy_spec(config.script));
    }
    throw ConfigError("unknown backend kind");
}

}  // namespace eka
