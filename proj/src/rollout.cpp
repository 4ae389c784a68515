#include "eka/rollout.hpp"

#include <algorithm>
#include <sstream>

#include "eka/common.hpp"
#include "eka/metrics.hpp"
#include "json.hpp"

namespace eka {

std::string_view reward_kind_name(RewardKind kind) {
    return kind == RewardKind::ExactMatch ? "em" : "f1";
}

RewardKind reward_kind_from_name(const std::string& name) {
    if (name == "em") return RewardKind::ExactMatch;
    if (name == "f1") return RewardKind::F1;
    throw ConfigError("unknown reward kind: " + name + " (expected \"em\" or \"f1\")");
}

std::string_view termination_name(Termination t) {
    switch (t) {
        case Termination::Answered: return "answered";
        case Termination::BudgetExhausted: return "budget_exhausted";
        case Termination::Malformed: return "malformed";
    }
    return {};
}

Termination termination_from_name(const std::string& name) {
    if (name == "answered") return Termination::Answered;
    if (name == "budget_exhausted") return Termination::BudgetExhausted;
    if (name == "malformed") return Termination::Malformed;
    throw UserError("unknown termination: " + name);
}

void RolloutConfig::validate() const {
    if (max_turns < 1) throw ConfigError("max_turns must be >= 1");
    if (eka_enabled && prompt_template != PromptTemplate::Eka) {
        throw ConfigError("eka_enabled requires the eka prompt template");
    }
    if (max_tokens_per_segment < 1) throw ConfigError("max_tokens_per_segment must be >= 1");
    if (total_token_budget < 1) throw ConfigError("total_token_budget must be >= 1");
    if (top_logprobs < 0 || top_logprobs > 20) throw ConfigError("top_logprobs must be in [0, 20]");
    retriever.validate();
    // backend is validated where a backend instance is built from it; the
    // engine itself receives a constructed backend and the copy here may
    // hold per-question placeholders (scripts-dir mode).
}

std::string config_fingerprint(const RolloutConfig& config) {
    nlohmann::json retriever{
        {"backend", config.retriever.backend == RetrieverBackend::Lexical ? "lexical" : "embedding"},
        {"k", config.retriever.k},
        {"k1", config.retriever.k1},
        {"b", config.retriever.b},
    };
    if (config.retriever.early_k) retriever["early_k"] = *config.retriever.early_k;
    const nlohmann::json doc{
        {"max_turns", config.max_turns},
        {"eka_enabled", config.eka_enabled},
        {"strict_query_format", config.strict_query_format},
        {"reward_kind", std::string(reward_kind_name(config.reward_kind))},
        {"prompt_template", std::string(prompt_template_name(config.prompt_template))},
        {"retriever", retriever},
        {"backend_kind", backend_kind_name(config.backend.kind)},
        {"model", config.backend.model},
        {"max_tokens_per_segment", config.max_tokens_per_segment},
        {"total_token_budget", config.total_token_budget},
        {"temperature", config.temperature},
        {"top_logprobs", config.top_logprobs},
    };
    return fnv1a_hex(doc.dump());
}

namespace {

std::string joined_passage_text(const Index& index, const std::vector<RetrievedPassage>& passages) {
    std::string joined;
    for (size_t i = 0; i < passages.size(); ++i) {
        const Chunk* chunk = index.corpus.find_chunk(passages[i].chunk_id);
        if (chunk == nullptr) throw UserError("rollout: unknown chunk id: " + passages[i].chunk_id);
        if (i > 0) joined += '\n';
        joined += chunk->text;
    }
    return joined;
}

// Folds parse events into the trajectory; returns the query/answer stop when
// one fired.
std::optional<StopReason> absorb_events(Trajectory& traj, const std::vector<ParseEvent>& events) {
    std::optional<StopReason> stop;
    for (const auto& event : events) {
        if (const auto* seg = std::get_if<SegmentEvent>(&event)) {
            traj.segments.push_back(seg->segment);
            if (seg->segment.kind != TagKind::Knowledge) {
                traj.actions.push_back(action_of(seg->segment.kind));
            }
        } else if (const auto* bad = std::get_if<MalformedEvent>(&event)) {
            traj.malformed.push_back(bad->detail);
        } else if (const auto* s = std::get_if<StopEvent>(&event)) {
            if (s->reason != StopReason::EndOfSequence) stop = s->reason;
        }
    }
    return stop;
}

// Token indices fully inside each segment's content (delimiters excluded).
// Injected knowledge has no generated tokens, so its span stays absent.
void fill_token_spans(Trajectory& traj) {
    for (auto& segment : traj.segments) {
        const size_t content_begin = segment.byte_span.begin + open_delimiter(segment.kind).size();
        const size_t content_end = segment.byte_span.end - close_delimiter(segment.kind).size();
        size_t first = 0;
        size_t last = 0;
        bool any = false;
        for (size_t i = 0; i < traj.tokens.size(); ++i) {
            const TokenRecord& tok = traj.tokens[i];
            if (tok.begin >= content_begin && tok.end <= content_end && tok.begin < tok.end) {
                if (!any) first = i;
                last = i;
                any = true;
            }
        }
        if (any) segment.token_span = std::make_pair(first, last + 1);
    }
}

const TaggedSegment* last_of_kind(const Trajectory& traj, TagKind kind) {
    for (auto it = traj.segments.rbegin(); it != traj.segments.rend(); ++it) {
        if (it->kind == kind) return &*it;
    }
    return nullptr;
}

}  // namespace

RolloutEngine::RolloutEngine(const Index& index, std::shared_ptr<Backend> backend,
                             RolloutConfig config)
    : index_(index), backend_(std::move(backend)), config_(std::move(config)) {
    config_.validate();
    if (!backend_) throw ConfigError("rollout engine needs a backend");
    fingerprint_ = config_fingerprint(config_);
}

Trajectory RolloutEngine::run(const std::string& question) {
    if (question.empty()) throw UserError("rollout: empty question");

    Trajectory traj;
    traj.question = question;
    traj.eka_enabled = config_.eka_enabled;
    traj.seed = config_.seed;
    traj.config_fingerprint = fingerprint_;

    std::string knowledge_text;
    if (config_.eka_enabled) {
        traj.early_knowledge = early_knowledge(index_, question, config_.retriever);
        knowledge_text = joined_passage_text(index_, traj.early_knowledge);
        traj.actions.push_back(Action::Search);  // a0: the pre-rollout retrieval
    }
    traj.prompt = render_prompt(config_.prompt_template, question, knowledge_text);

    StreamParser parser;
    int used_tokens = 0;

    auto finalize = [&] {
        absorb_events(traj, parser.finish());
        traj.raw_text = parser.raw_text();
        fill_token_spans(traj);
    };

    for (int b = 1; b <= config_.max_turns; ++b) {
        const int remaining = config_.total_token_budget - used_tokens;
        if (remaining <= 0) {
            traj.turn_count = b - 1;
            traj.termination = Termination::BudgetExhausted;
            finalize();
            return traj;
        }

        GenerationRequest request;
        request.prompt = traj.prompt + parser.raw_text();
        request.stop_sequences = {std::string(kQueryClose), std::string(kAnswerClose)};
        request.max_tokens = std::min(config_.max_tokens_per_segment, remaining);
        request.temperature = config_.temperature;
        request.top_logprobs = config_.top_logprobs;

        GenerationResult result;
        try {
            result = backend_->generate(request);
        } catch (const TransportError& e) {
            traj.turn_count = b - 1;
            finalize();
            throw RolloutError(std::string("backend transport failure: ") + e.what(),
                               std::move(traj));
        } catch (const ProtocolError& e) {
            traj.turn_count = b - 1;
            finalize();
            throw RolloutError(std::string("backend protocol failure: ") + e.what(),
                               std::move(traj));
        }
        used_tokens += static_cast<int>(result.chunks.size());

        TurnRecord turn;
        turn.index = b;
        turn.generated = result.text;

        const size_t base = parser.raw_text().size();
        size_t offset = 0;
        for (const auto& chunk : result.chunks) {
            TokenRecord record;
            record.text = chunk.token_text;
            record.logprob = chunk.logprob;
            record.top_alternatives = chunk.top_alternatives;
            record.begin = base + offset;
            offset += chunk.token_text.size();
            record.end = base + offset;
            record.turn = b;
            traj.tokens.push_back(std::move(record));
        }

        const std::optional<StopReason> stop = absorb_events(traj, parser.feed(result.text));

        if (result.finish.kind != FinishKind::StopSequence || !stop) {
            // Ran dry mid-segment; nothing actionable to resume from.
            turn.stop = result.finish.kind == FinishKind::Length ? "length" : "eos";
            traj.turns.push_back(std::move(turn));
            traj.turn_count = b;
            traj.termination = Termination::Malformed;
            finalize();
            return traj;
        }

        if (*stop == StopReason::AnswerClose) {
            turn.stop = std::string(kAnswerClose);
            const TaggedSegment* answer = last_of_kind(traj, TagKind::Answer);
            traj.final_answer = answer->content;
            traj.turns.push_back(std::move(turn));
            traj.turn_count = b;
            traj.termination = Termination::Answered;
            finalize();
            return traj;
        }

        turn.stop = std::string(kQueryClose);
        const TaggedSegment* query_segment = last_of_kind(traj, TagKind::Query);
        turn.query = query_segment->content;

        std::string injected;
        if (config_.strict_query_format && !is_structured_query(query_segment->content)) {
            turn.invalid_query = true;
            injected = std::string(kInvalidQueryFeedback);
        } else {
            // Empty retrieval injects an empty knowledge block; the protocol
            // shape stays stable either way.
            turn.passages = retrieve(index_, extract_query(*query_segment), config_.retriever.k);
            injected = joined_passage_text(index_, turn.passages);
        }
        turn.injected = injected;

        absorb_events(traj, parser.resume());
        absorb_events(traj, parser.feed("\n" + wrap_knowledge(injected) + "\n"));

        const bool invalid = turn.invalid_query;
        traj.turns.push_back(std::move(turn));

        if (b == config_.max_turns) {
            traj.turn_count = b;
            traj.termination = invalid ? Termination::Malformed : Termination::BudgetExhausted;
            finalize();
            return traj;
        }
    }
    throw std::logic_error("rollout loop exited without termination");
}

double reward(const Trajectory& trajectory, const std::vector<std::string>& golds,
              RewardKind kind) {
    if (trajectory.termination != Termination::Answered || !trajectory.final_answer) return 0.0;
    if (!validate_pipeline(trajectory.segments, trajectory.eka_enabled).well_formed) return 0.0;
    if (kind == RewardKind::ExactMatch) return exact_match(*trajectory.final_answer, golds);
    return f1(*trajectory.final_answer, golds);
}

GroupRollout run_group(const Index& index, const BackendFactory& factory,
                       const RolloutConfig& config, const std::string& question,
                       const std::vector<std::string>& golds, int group_size) {
    if (group_size < 1) throw UserError("run_group: group size must be >= 1");
    if (!factory) throw UserError("run_group: backend factory required");

    GroupRollout group;
    group.members.resize(static_cast<size_t>(group_size));
    int failed = 0;
    for (int slot = 0; slot < group_size; ++slot) {
        GroupMember& member = group.members[static_cast<size_t>(slot)];
        RolloutConfig slot_config = config;
        slot_config.seed = config.seed + static_cast<uint64_t>(slot);
        slot_config.backend.seed = slot_config.seed;
        try {
            RolloutEngine engine(index, factory(slot), slot_config);
            member.trajectory = engine.run(question);
            member.reward = reward(member.trajectory, golds, config.reward_kind);
        } catch (const RolloutError& e) {
            member.failed = true;
            member.error = e.what();
            member.trajectory = e.partial();
            member.reward = 0.0;
            ++failed;
        }
        group.rewards.push_back(member.reward);
    }
    if (failed == group_size) {
        throw UserError("run_group: all " + std::to_string(group_size) + " rollouts failed");
    }
    group.advantages = grpo_advantages(group.rewards, 1e-8);
    for (size_t slot = 0; slot < group.members.size(); ++slot) {
        group.members[slot].advantage = group.advantages.values[slot];
    }
    return group;
}

double average_turns(const std::vector<Trajectory>& trajectories) {
    if (trajectories.empty()) throw UserError("average_turns: no trajectories");
    double sum = 0.0;
    for (const auto& traj : trajectories) sum += traj.turn_count;
    return sum / static_cast<double>(trajectories.size());
}

std::vector<DatasetItem> load_dataset(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<DatasetItem> items;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            throw IngestError(path + ":" + std::to_string(line_no) + ": not a JSON object");
        }
        if (!doc.contains("question") || !doc["question"].is_string() ||
            doc["question"].get<std::string>().empty()) {
            throw IngestError(path + ":" + std::to_string(line_no) +
                              ": missing nonempty \"question\" string");
        }
        if (!doc.contains("golden_answers") || !doc["golden_answers"].is_array()) {
            throw IngestError(path + ":" + std::to_string(line_no) +
                              ": missing \"golden_answers\" array");
        }
        DatasetItem item;
        item.question = doc["question"].get<std::string>();
        for (const auto& gold : doc["golden_answers"]) {
            if (!gold.is_string()) {
                throw IngestError(path + ":" + std::to_string(line_no) +
                                  ": golden_answers entries must be strings");
            }
            item.golden_answers.push_back(gold.get<std::string>());
        }
        if (doc.contains("gold_context")) {
            if (!doc["gold_context"].is_string()) {
                throw IngestError(path + ":" + std::to_string(line_no) +
                                  ": gold_context must be a string");
            }
            item.gold_context = doc["gold_context"].get<std::string>();
        }
        items.push_back(std::move(item));
    }
    if (items.empty()) throw IngestError(path + ": empty dataset");
    return items;
}

namespace {

TagKind kind_from_name(const std::string& name) {
    if (name == "think") return TagKind::Think;
    if (name == "query") return TagKind::Query;
    if (name == "answer") return TagKind::Answer;
    if (name == "knowledge") return TagKind::Knowledge;
    throw UserError("unknown segment kind: " + name);
}

Action action_from_name(const std::string& name) {
    if (name == "search") return Action::Search;
    if (name == "answer") return Action::Answer;
    if (name == "think") return Action::Think;
    throw UserError("unknown action: " + name);
}

nlohmann::json passage_to_json(const RetrievedPassage& passage) {
    return {{"chunk_id", passage.chunk_id}, {"score", passage.score}, {"rank", passage.rank}};
}

RetrievedPassage passage_from_json(const nlohmann::json& doc) {
    RetrievedPassage passage;
    passage.chunk_id = doc.at("chunk_id").get<std::string>();
    passage.score = doc.at("score").get<double>();
    passage.rank = doc.at("rank").get<int>();
    return passage;
}

}  // namespace

std::string trajectory_to_json_line(const Trajectory& trajectory) {
    nlohmann::json doc;
    doc["question"] = trajectory.question;
    doc["eka_enabled"] = trajectory.eka_enabled;
    doc["prompt"] = trajectory.prompt;
    doc["early_knowledge"] = nlohmann::json::array();
    for (const auto& passage : trajectory.early_knowledge) {
        doc["early_knowledge"].push_back(passage_to_json(passage));
    }
    doc["raw_text"] = trajectory.raw_text;
    doc["segments"] = nlohmann::json::array();
    for (const auto& segment : trajectory.segments) {
        nlohmann::json seg{{"kind", std::string(kind_name(segment.kind))},
                           {"content", segment.content},
                           {"begin", segment.byte_span.begin},
                           {"end", segment.byte_span.end}};
        seg["token_begin"] = segment.token_span ? nlohmann::json(segment.token_span->first)
                                                : nlohmann::json();
        seg["token_end"] = segment.token_span ? nlohmann::json(segment.token_span->second)
                                              : nlohmann::json();
        doc["segments"].push_back(std::move(seg));
    }
    doc["actions"] = nlohmann::json::array();
    for (const Action action : trajectory.actions) {
        doc["actions"].push_back(std::string(action_name(action)));
    }
    doc["tokens"] = nlohmann::json::array();
    for (const auto& token : trajectory.tokens) {
        nlohmann::json alternatives = nlohmann::json::array();
        for (const auto& [text, logprob] : token.top_alternatives) {
            alternatives.push_back({{"text", text}, {"logprob", logprob}});
        }
        doc["tokens"].push_back({{"text", token.text},
                                 {"logprob", token.logprob},
                                 {"alternatives", std::move(alternatives)},
                                 {"begin", token.begin},
                                 {"end", token.end},
                                 {"turn", token.turn}});
    }
    doc["turns"] = nlohmann::json::array();
    for (const auto& turn : trajectory.turns) {
        nlohmann::json record{{"index", turn.index},
                              {"generated", turn.generated},
                              {"stop", turn.stop},
                              {"invalid_query", turn.invalid_query}};
        record["query"] = turn.query ? nlohmann::json(*turn.query) : nlohmann::json();
        record["injected"] = turn.injected ? nlohmann::json(*turn.injected) : nlohmann::json();
        record["passages"] = nlohmann::json::array();
        for (const auto& passage : turn.passages) {
            record["passages"].push_back(passage_to_json(passage));
        }
        doc["turns"].push_back(std::move(record));
    }
    doc["malformed"] = trajectory.malformed;
    doc["turn_count"] = trajectory.turn_count;
    doc["final_answer"] = trajectory.final_answer ? nlohmann::json(*trajectory.final_answer)
                                                  : nlohmann::json();
    doc["termination"] = std::string(termination_name(trajectory.termination));
    doc["seed"] = trajectory.seed;
    doc["config_fingerprint"] = trajectory.config_fingerprint;
    return doc.dump();
}

Trajectory trajectory_from_json_line(const std::string& line) {
    nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw UserError("trajectory record is not a JSON object");
    }
    try {
        Trajectory traj;
        traj.question = doc.at("question").get<std::string>();
        traj.eka_enabled = doc.at("eka_enabled").get<bool>();
        traj.prompt = doc.at("prompt").get<std::string>();
        for (const auto& passage : doc.at("early_knowledge")) {
            traj.early_knowledge.push_back(passage_from_json(passage));
        }
        traj.raw_text = doc.at("raw_text").get<std::string>();
        for (const auto& seg : doc.at("segments")) {
            TaggedSegment segment;
            segment.kind = kind_from_name(seg.at("kind").get<std::string>());
            segment.content = seg.at("content").get<std::string>();
            segment.byte_span = {seg.at("begin").get<size_t>(), seg.at("end").get<size_t>()};
            if (!seg.at("token_begin").is_null()) {
                segment.token_span = std::make_pair(seg.at("token_begin").get<size_t>(),
                                                    seg.at("token_end").get<size_t>());
            }
            traj.segments.push_back(std::move(segment));
        }
        for (const auto& action : doc.at("actions")) {
            traj.actions.push_back(action_from_name(action.get<std::string>()));
        }
        for (const auto& tok : doc.at("tokens")) {
            TokenRecord record;
            record.text = tok.at("text").get<std::string>();
            record.logprob = tok.at("logprob").get<double>();
            for (const auto& alt : tok.at("alternatives")) {
                record.top_alternatives.emplace_back(alt.at("text").get<std::string>(),
                                                     alt.at("logprob").get<double>());
            }
            record.begin = tok.at("begin").get<size_t>();
            record.end = tok.at("end").get<size_t>();
            record.turn = tok.at("turn").get<int>();
            traj.tokens.push_back(std::move(record));
        }
        for (const auto& rec : doc.at("turns")) {
            TurnRecord turn;
            turn.index = rec.at("index").get<int>();
            turn.generated = rec.at("generated").get<std::string>();
            turn.stop = rec.at("stop").get<std::string>();
            turn.invalid_query = rec.at("invalid_query").get<bool>();
            if (!rec.at("query").is_null()) turn.query = rec.at("query").get<std::string>();
            if (!rec.at("injected").is_null()) turn.injected = rec.at("injected").get<std::string>();
            for (const auto& passage : rec.at("passages")) {
                turn.passages.push_back(passage_from_json(passage));
            }
            traj.turns.push_back(std::move(turn));
        }
        traj.malformed = doc.at("malformed").get<std::vector<std::string>>();
        traj.turn_count = doc.at("turn_count").get<int>();
        if (!doc.at("final_answer").is_null()) {
            traj.final_answer = doc.at("final_answer").get<std::string>();
        }
        traj.termination = termination_from_name(doc.at("termination").get<std::string>());
        traj.seed = doc.at("seed").get<uint64_t>();
        traj.config_fingerprint = doc.at("config_fingerprint").get<std::string>();
        return traj;
    } catch (const nlohmann::json::exception& e) {
        throw UserError(std::string("trajectory record is missing fields: ") + e.what());
    }
}

void dump_trajectory(const Trajectory& trajectory, const std::string& path) {
    write_file_atomic(path, trajectory_to_json_line(trajectory) + "\n");
}

Trajectory load_trajectory(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            return trajectory_from_json_line(line);
        }
    }
    throw UserError(path + ": no trajectory record found");
}

}  // namespace eka
