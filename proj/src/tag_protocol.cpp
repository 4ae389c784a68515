#include "eka/tag_protocol.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>

#include "eka/common.hpp"
#include "json.hpp"

namespace eka {

namespace {

constexpr std::array<TagKind, 4> kAllKinds = {TagKind::Think, TagKind::Query, TagKind::Answer,
                                              TagKind::Knowledge};

// Longest opening/closing delimiter ("<knowledge>" / "</knowledge>").
constexpr size_t kMaxOpenLen = 11;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string_view open_delimiter(TagKind kind) {
    switch (kind) {
        case TagKind::Think: return kThinkOpen;
        case TagKind::Query: return kQueryOpen;
        case TagKind::Answer: return kAnswerOpen;
        case TagKind::Knowledge: return kKnowledgeOpen;
    }
    return {};
}

std::string_view close_delimiter(TagKind kind) {
    switch (kind) {
        case TagKind::Think: return kThinkClose;
        case TagKind::Query: return kQueryClose;
        case TagKind::Answer: return kAnswerClose;
        case TagKind::Knowledge: return kKnowledgeClose;
    }
    return {};
}

std::string_view kind_name(TagKind kind) {
    switch (kind) {
        case TagKind::Think: return "think";
        case TagKind::Query: return "query";
        case TagKind::Answer: return "answer";
        case TagKind::Knowledge: return "knowledge";
    }
    return {};
}

std::string_view action_name(Action action) {
    switch (action) {
        case Action::Search: return "search";
        case Action::Answer: return "answer";
        case Action::Think: return "think";
    }
    return {};
}

Action action_of(TagKind kind) {
    switch (kind) {
        case TagKind::Think: return Action::Think;
        case TagKind::Query: return Action::Search;
        case TagKind::Answer: return Action::Answer;
        case TagKind::Knowledge: break;
    }
    throw std::logic_error("action_of: knowledge is not a policy action");
}

std::vector<ParseEvent> StreamParser::feed(std::string_view fragment) {
    raw_.append(fragment);
    if (halted_ || finished_) return {};
    return scan_();
}

std::vector<ParseEvent> StreamParser::resume() {
    if (!halted_ || finished_) return {};
    halted_ = false;
    return scan_();
}

std::vector<ParseEvent> StreamParser::finish() {
    if (finished_ || halted_) {
        finished_ = true;
        return {};
    }
    auto events = scan_();
    if (state_ == State::InSegment) {
        events.push_back(MalformedEvent{std::string("unterminated ") + std::string(kind_name(seg_kind_))});
    } else if (state_ == State::Outside) {
        size_t at = cursor_;
        while (at < raw_.size() && is_space(raw_[at])) ++at;
        if (at < raw_.size()) {
            // A delimiter prefix was pending at end of input; it can no longer
            // complete, so it is stray text.
            events.push_back(
                MalformedEvent{"unexpected text outside delimiters at byte " + std::to_string(at)});
        }
    }
    events.push_back(StopEvent{StopReason::EndOfSequence});
    finished_ = true;
    return events;
}

std::vector<ParseEvent> StreamParser::scan_() {
    std::vector<ParseEvent> events;
    while (!halted_) {
        if (state_ == State::Outside) {
            while (cursor_ < raw_.size() && is_space(raw_[cursor_])) ++cursor_;
            if (cursor_ >= raw_.size()) break;

            const std::string_view rest(raw_.data() + cursor_, raw_.size() - cursor_);
            bool partial = false;
            bool matched = false;
            for (TagKind kind : kAllKinds) {
                const std::string_view open = open_delimiter(kind);
                if (rest.size() >= open.size()) {
                    if (rest.substr(0, open.size()) == open) {
                        state_ = State::InSegment;
                        seg_kind_ = kind;
                        seg_open_ = cursor_;
                        cursor_ += open.size();
                        content_start_ = cursor_;
                        content_scan_ = cursor_;
                        matched = true;
                        break;
                    }
                } else if (open.substr(0, rest.size()) == rest) {
                    partial = true;
                }
            }
            if (matched) continue;
            for (TagKind kind : kAllKinds) {
                const std::string_view close = close_delimiter(kind);
                if (rest.size() >= close.size()) {
                    if (rest.substr(0, close.size()) == close) {
                        events.push_back(MalformedEvent{std::string("unmatched closing delimiter ") +
                                                        std::string(close)});
                        cursor_ += close.size();
                        matched = true;
                        break;
                    }
                } else if (close.substr(0, rest.size()) == rest) {
                    partial = true;
                }
            }
            if (matched) continue;
            if (partial) break;  // could still become a delimiter; wait for bytes
            events.push_back(
                MalformedEvent{"unexpected text outside delimiters at byte " + std::to_string(cursor_)});
            state_ = State::Recovery;
            continue;
        }

        if (state_ == State::Recovery) {
            // Resync at the next complete opening delimiter.
            size_t best = std::string::npos;
            for (TagKind kind : kAllKinds) {
                const size_t pos = raw_.find(open_delimiter(kind), cursor_);
                if (pos != std::string::npos && (best == std::string::npos || pos < best)) best = pos;
            }
            if (best != std::string::npos) {
                cursor_ = best;
                state_ = State::Outside;
                continue;
            }
            // Keep a tail that could still begin a delimiter next fragment.
            const size_t keep_from = raw_.size() > kMaxOpenLen - 1 ? raw_.size() - (kMaxOpenLen - 1) : 0;
            cursor_ = std::max(cursor_, keep_from);
            break;
        }

        // InSegment: only this kind's closing delimiter ends the content.
        const std::string_view close = close_delimiter(seg_kind_);
        const size_t pos = raw_.find(close, content_scan_);
        if (pos == std::string::npos) {
            const size_t tail = raw_.size() >= close.size() ? raw_.size() - (close.size() - 1)
                                                            : content_start_;
            content_scan_ = std::max(content_start_, tail);
            break;
        }
        TaggedSegment segment;
        segment.kind = seg_kind_;
        segment.content = raw_.substr(content_start_, pos - content_start_);
        segment.byte_span = {seg_open_, pos + close.size()};
        events.push_back(SegmentEvent{std::move(segment)});
        cursor_ = pos + close.size();
        state_ = State::Outside;
        if (seg_kind_ == TagKind::Query) {
            events.push_back(StopEvent{StopReason::QueryClose});
            halted_ = true;
        } else if (seg_kind_ == TagKind::Answer) {
            events.push_back(StopEvent{StopReason::AnswerClose});
            halted_ = true;
        }
    }
    return events;
}

std::vector<ParseEvent> parse_events(const std::string& text) {
    StreamParser parser;
    std::vector<ParseEvent> events = parser.feed(text);
    while (parser.halted()) {
        auto more = parser.resume();
        events.insert(events.end(), more.begin(), more.end());
    }
    auto tail = parser.finish();
    events.insert(events.end(), tail.begin(), tail.end());
    return events;
}

ParseSummary parse_all(const std::string& text) {
    ParseSummary summary;
    for (const auto& event : parse_events(text)) {
        if (const auto* seg = std::get_if<SegmentEvent>(&event)) {
            summary.segments.push_back(seg->segment);
        } else if (const auto* bad = std::get_if<MalformedEvent>(&event)) {
            summary.malformed.push_back(bad->detail);
        }
    }
    return summary;
}

std::string serialize_segments(const std::vector<TaggedSegment>& segments) {
    std::string out;
    for (const auto& segment : segments) {
        out.append(open_delimiter(segment.kind));
        out.append(segment.content);
        out.append(close_delimiter(segment.kind));
    }
    return out;
}

std::string extract_query(const TaggedSegment& segment) {
    if (segment.kind != TagKind::Query) {
        throw std::logic_error("extract_query: segment is not a query");
    }
    nlohmann::json parsed = nlohmann::json::parse(segment.content, nullptr, false);
    if (parsed.is_object() && parsed.contains("query") && parsed["query"].is_string()) {
        return parsed["query"].get<std::string>();
    }
    return segment.content;
}

bool is_structured_query(const std::string& content) {
    nlohmann::json parsed = nlohmann::json::parse(content, nullptr, false);
    return parsed.is_object() && parsed.contains("query") && parsed["query"].is_string();
}

ValidationReport validate_pipeline(const std::vector<TaggedSegment>& segments, bool eka_enabled) {
    std::vector<Action> pipeline;
    if (eka_enabled) pipeline.push_back(Action::Search);
    for (const auto& segment : segments) {
        if (segment.kind == TagKind::Knowledge) continue;  // environment text
        pipeline.push_back(action_of(segment.kind));
    }

    // lead: one Search may open the pipeline (the initial retrieval slot);
    // after that Think must precede every Search/Answer, and the first Answer
    // ends the pipeline. Any prefix is well-formed.
    enum class Expect { LeadOrThink, Think, AfterThink, Done };
    Expect state = Expect::LeadOrThink;
    for (size_t i = 0; i < pipeline.size(); ++i) {
        const Action action = pipeline[i];
        ValidationReport bad;
        bad.well_formed = false;
        bad.violation_index = i;
        switch (state) {
            case Expect::LeadOrThink:
                if (action == Action::Search) {
                    state = Expect::Think;
                    continue;
                }
                [[fallthrough]];
            case Expect::Think:
                if (action == Action::Think) {
                    state = Expect::AfterThink;
                    continue;
                }
                bad.detail = std::string(action == Action::Search ? "Search" : "Answer") +
                             " not preceded by Think";
                return bad;
            case Expect::AfterThink:
                if (action == Action::Search) {
                    state = Expect::Think;
                    continue;
                }
                if (action == Action::Answer) {
                    state = Expect::Done;
                    continue;
                }
                bad.detail = "Think where Search or Answer was expected";
                return bad;
            case Expect::Done:
                bad.detail = "action after the final Answer";
                return bad;
        }
    }
    return {};
}

std::string wrap_knowledge(const std::string& text) {
    return std::string(kKnowledgeOpen) + text + std::string(kKnowledgeClose);
}

std::string render_knowledge(const std::vector<RetrievedPassage>& passages, const Corpus& corpus) {
    std::string joined;
    for (size_t i = 0; i < passages.size(); ++i) {
        const Chunk* chunk = corpus.find_chunk(passages[i].chunk_id);
        if (chunk == nullptr) {
            throw UserError("render_knowledge: unknown chunk id: " + passages[i].chunk_id);
        }
        if (i > 0) joined += '\n';
        joined += chunk->text;
    }
    return wrap_knowledge(joined);
}

}  // namespace eka
