#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eka/corpus.hpp"
#include "eka/retrieval.hpp"

namespace eka {

// Rollout protocol delimiters. Bit-exact: the parser, the prompt templates,
// and the backends all share these constants.
inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kQueryOpen = "<query>";
inline constexpr std::string_view kQueryClose = "</query>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";
inline constexpr std::string_view kKnowledgeOpen = "<knowledge>";
inline constexpr std::string_view kKnowledgeClose = "</knowledge>";

enum class TagKind { Think, Query, Answer, Knowledge };

std::string_view open_delimiter(TagKind kind);
std::string_view close_delimiter(TagKind kind);
std::string_view kind_name(TagKind kind);  // "think", "query", "answer", "knowledge"

enum class Action { Search, Answer, Think };

std::string_view action_name(Action action);

// Maps a policy-emitted tag to its action. Knowledge is environment text, not
// a policy action; callers must not pass it.
Action action_of(TagKind kind);

struct ByteSpan {
    size_t begin = 0;  // half-open [begin, end) into the raw rollout text
    size_t end = 0;
    bool operator==(const ByteSpan&) const = default;
};

struct TaggedSegment {
    TagKind kind = TagKind::Think;
    std::string content;  // raw text strictly between the delimiters
    ByteSpan byte_span;   // covers the delimiters: raw[span] == "<kind>content</kind>"
    std::optional<std::pair<size_t, size_t>> token_span;  // filled when token-aligned
    bool operator==(const TaggedSegment&) const = default;
};

enum class StopReason { QueryClose, AnswerClose, EndOfSequence };

struct SegmentEvent {
    TaggedSegment segment;
    bool operator==(const SegmentEvent&) const = default;
};
struct StopEvent {
    StopReason reason = StopReason::EndOfSequence;
    bool operator==(const StopEvent&) const = default;
};
struct MalformedEvent {
    std::string detail;
    bool operator==(const MalformedEvent&) const = default;
};

using ParseEvent = std::variant<SegmentEvent, StopEvent, MalformedEvent>;

// Incremental parser over the tag protocol. Fragments may split delimiters at
// any byte boundary; the emitted event stream is invariant under re-chunking.
// Inside an open segment only that segment's own closing delimiter is
// recognized; the first close wins and everything before it is content.
// Whitespace between segments is preserved in the raw text but produces no
// events. After a QueryClose/AnswerClose stop the parser halts (buffering any
// further input) until resume().
class StreamParser {
public:
    std::vector<ParseEvent> feed(std::string_view fragment);
    std::vector<ParseEvent> resume();
    // End of input. Emits Malformed for an unterminated segment or trailing
    // stray text, then StopDetected(EndOfSequence), unless a query/answer
    // stop already ended the stream, in which case nothing more is emitted.
    std::vector<ParseEvent> finish();

    bool halted() const { return halted_; }
    const std::string& raw_text() const { return raw_; }

private:
    enum class State { Outside, InSegment, Recovery };

    std::vector<ParseEvent> scan_();

    std::string raw_;
    size_t cursor_ = 0;
    State state_ = State::Outside;
    bool halted_ = false;
    bool finished_ = false;
    TagKind seg_kind_ = TagKind::Think;
    size_t seg_open_ = 0;       // byte offset of the opening delimiter
    size_t content_start_ = 0;  // byte offset just past the opening delimiter
    size_t content_scan_ = 0;   // resume hint for the closing-delimiter search
};

// Feeds the whole string, resuming through query/answer stops, then finishes.
// The trailing end-of-input stop event is included.
std::vector<ParseEvent> parse_events(const std::string& text);

struct ParseSummary {
    std::vector<TaggedSegment> segments;
    std::vector<std::string> malformed;  // Malformed event details, in order
};
ParseSummary parse_all(const std::string& text);

// Re-renders segments as delimiter-wrapped text. Re-parsing the result yields
// the same kinds/contents/order as long as no content embeds its own closing
// delimiter.
std::string serialize_segments(const std::vector<TaggedSegment>& segments);

// Returns the query string of a Query segment: the "query" value when the
// content is a JSON object carrying one, otherwise the raw content verbatim.
// Calling with a non-Query segment is a contract violation.
std::string extract_query(const TaggedSegment& segment);

// True when the content is a JSON object with a string "query" field, the
// shape strict mode demands.
bool is_structured_query(const std::string& content);

struct ValidationReport {
    bool well_formed = true;
    // Index of the first violating action in the action pipeline, counting
    // the implicit leading Search when eka_enabled.
    std::optional<size_t> violation_index;
    std::string detail;
};

// Checks the action pipeline grammar: an optional leading Search (implicit
// when eka_enabled), then Think alternating with Search until a final Answer.
// Prefixes are well-formed (a budget can exhaust mid-loop); nothing may follow
// an Answer. Knowledge segments are environment-injected and are ignored.
ValidationReport validate_pipeline(const std::vector<TaggedSegment>& segments, bool eka_enabled);

// Wraps raw text in knowledge delimiters.
std::string wrap_knowledge(const std::string& text);

// Resolves passages against the corpus and wraps the newline-joined chunk
// texts (rank order preserved) in knowledge delimiters. Unknown chunk ids are
// an error naming the id.
std::string render_knowledge(const std::vector<RetrievedPassage>& passages, const Corpus& corpus);

}  // namespace eka
