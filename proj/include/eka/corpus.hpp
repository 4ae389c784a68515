#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace eka {

struct Document {
    std::string id;
    std::string title;
    std::string text;
};

struct Chunk {
    std::string chunk_id;  // deterministic: "<doc_id>#<4-digit ordinal>"
    std::string doc_id;
    std::string text;
    int token_count = 0;  // whitespace-token count of text
};

struct Corpus {
    std::vector<Document> documents;
    std::vector<Chunk> chunks;

    bool empty() const { return chunks.empty(); }

    // nullptr when the id does not resolve.
    const Chunk* find_chunk(const std::string& chunk_id) const;

private:
    mutable std::unordered_map<std::string, size_t> chunk_lookup_;
};

std::string make_chunk_id(const std::string& doc_id, int ordinal);

// Splits one document into whitespace-token windows of at most chunk_size
// tokens, consecutive windows sharing `overlap` tokens. Chunk text is the
// byte range of the original text covering its tokens, so intra-chunk
// spacing is preserved.
std::vector<Chunk> chunk_document(const Document& doc, int chunk_size, int overlap);

// Reads line-delimited {"id","title","text"} records and chunks every
// document. Malformed lines and duplicate ids abort with the line number.
Corpus ingest_corpus(const std::string& path, int chunk_size, int overlap);

}  // namespace eka
