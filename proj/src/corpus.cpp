#include "eka/corpus.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "eka/common.hpp"
#include "json.hpp"

namespace eka {

const Chunk* Corpus::find_chunk(const std::string& chunk_id) const {
    if (chunk_lookup_.size() != chunks.size()) {
        chunk_lookup_.clear();
        for (size_t i = 0; i < chunks.size(); ++i) {
            chunk_lookup_[chunks[i].chunk_id] = i;
        }
    }
    auto it = chunk_lookup_.find(chunk_id);
    return it == chunk_lookup_.end() ? nullptr : &chunks[it->second];
}

std::string make_chunk_id(const std::string& doc_id, int ordinal) {
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "#%04d", ordinal);
    return doc_id + suffix;
}

std::vector<Chunk> chunk_document(const Document& doc, int chunk_size, int overlap) {
    if (chunk_size <= 0 || overlap < 0 || overlap >= chunk_size) {
        throw IngestError("chunk_size must exceed overlap and overlap must be nonnegative");
    }
    const auto spans = whitespace_token_spans(doc.text);
    std::vector<Chunk> out;
    if (spans.empty()) return out;

    const size_t size = static_cast<size_t>(chunk_size);
    const size_t step = size - static_cast<size_t>(overlap);
    size_t start = 0;
    int ordinal = 0;
    while (true) {
        const size_t end = std::min(start + size, spans.size());
        Chunk chunk;
        chunk.chunk_id = make_chunk_id(doc.id, ordinal++);
        chunk.doc_id = doc.id;
        chunk.text = doc.text.substr(spans[start].first, spans[end - 1].second - spans[start].first);
        chunk.token_count = static_cast<int>(end - start);
        out.push_back(std::move(chunk));
        if (start + size >= spans.size()) break;
        start += step;
    }
    return out;
}

Corpus ingest_corpus(const std::string& path, int chunk_size, int overlap) {
    std::ifstream in(path);
    if (!in) {
        throw IngestError("cannot open corpus file: " + path);
    }
    Corpus corpus;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object() || !record.contains("id") ||
            !record.contains("text") || !record["id"].is_string() || !record["text"].is_string()) {
            std::ostringstream msg;
            msg << "malformed corpus record at line " << line_number << " of " << path;
            throw IngestError(msg.str());
        }
        Document doc;
        doc.id = record["id"].get<std::string>();
        doc.title = record.value("title", std::string());
        doc.text = record["text"].get<std::string>();
        if (doc.id.empty()) {
            std::ostringstream msg;
            msg << "empty document id at line " << line_number << " of " << path;
            throw IngestError(msg.str());
        }
        if (doc.text.empty()) {
            std::ostringstream msg;
            msg << "empty document text at line " << line_number << " of " << path;
            throw IngestError(msg.str());
        }
        if (!seen_ids.insert(doc.id).second) {
            std::ostringstream msg;
            msg << "duplicate document id \"" << doc.id << "\" at line " << line_number;
            throw IngestError(msg.str());
        }
        auto chunks = chunk_document(doc, chunk_size, overlap);
        corpus.documents.push_back(std::move(doc));
        for (auto& chunk : chunks) {
            corpus.chunks.push_back(std::move(chunk));
        }
    }
    return corpus;
}

}  // namespace eka
