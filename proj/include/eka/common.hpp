#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace eka {

// Error taxonomy. The CLI maps these onto exit codes:
// user/config/data problems -> 1, transport/environment problems -> 2.
struct UserError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : UserError {
    using UserError::UserError;
};
struct IngestError : UserError {
    using UserError::UserError;
};
struct IndexError : UserError {
    using UserError::UserError;
};
struct FixtureError : UserError {
    using UserError::UserError;
};
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path);

// Writes temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

// Splits on ASCII whitespace, returning (begin, end) byte offsets per token.
std::vector<std::pair<size_t, size_t>> whitespace_token_spans(const std::string& text);

std::vector<std::string> whitespace_tokens(const std::string& text);

// Lowercased alphanumeric runs; the analyzer used for lexical scoring.
std::vector<std::string> analyze_terms(const std::string& text);

uint64_t fnv1a(const std::string& data);

std::string fnv1a_hex(const std::string& data);

}  // namespace eka
