#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pubvec/common.hpp"

namespace pubvec {

struct Qualifier {
    std::string name;
    bool major_topic = false;

    bool operator==(const Qualifier&) const = default;
};

struct MeshAnnotation {
    std::string descriptor;
    bool major_topic = false;
    std::vector<Qualifier> qualifiers;  // names unique

    bool operator==(const MeshAnnotation&) const = default;
};

struct Document {
    Pmid pmid;
    std::string title;
    std::string abstract;
    std::vector<MeshAnnotation> mesh;

    bool operator==(const Document&) const = default;
};

/// Unique descriptor labels of a document, sorted.
std::vector<std::string> descriptor_labels(const Document& doc);

struct ParseStats {
    std::uint64_t parsed = 0;
    std::uint64_t skipped_missing_pmid = 0;
};

using DocumentSink = std::function<void(Document&&)>;

/// Streams MEDLINE/PubMed citation XML from `in`, calling `sink` once per
/// citation. Gzip input is recognised by its magic bytes and inflated on the
/// fly. Citations without a PMID are skipped and counted. On malformed or
/// truncated input a ParseError carrying the byte offset (into the
/// decompressed stream) is thrown; documents already passed to `sink` stay
/// delivered.
ParseStats parse_medline(std::istream& in, const DocumentSink& sink);

ParseStats parse_medline_file(const std::filesystem::path& path, const DocumentSink& sink);

/// Convenience wrapper collecting everything in memory.
std::vector<Document> parse_medline_string(std::string_view xml, ParseStats* stats = nullptr);

/// Non-empty abstract and at least one MeSH annotation.
bool is_eligible(const Document& doc);

/// Keeps eligible documents, preserving order.
std::vector<Document> filter_eligible(std::vector<Document> docs);

/// tokenize(title) followed by tokenize(abstract). An empty title
/// contributes nothing.
std::vector<std::string> normalize_document(const Document& doc);

struct CorpusSplit {
    std::vector<Pmid> train_ids;
    std::vector<Pmid> test_ids;
    double test_fraction = 0.0;
    std::uint64_t seed = 0;
};

/// Uniform selection of round(test_fraction * n) test ids without
/// replacement. Both output lists keep the input order. Throws
/// ValidationError on an empty input or a fraction outside (0, 1).
CorpusSplit split_corpus(std::span<const Pmid> ids, double test_fraction, std::uint64_t seed);

void save_split(const CorpusSplit& split, const std::filesystem::path& path);
CorpusSplit load_split(const std::filesystem::path& path);

/// Resolves a PMID to a document, or nullptr.
using DocumentLookup = std::function<const Document*(Pmid)>;

/// In-memory PMID lookup.
class DocumentIndex {
public:
    DocumentIndex() = default;
    explicit DocumentIndex(std::vector<Document> docs);

    void add(Document doc);
    const Document* find(Pmid id) const;
    const Document& at(Pmid id) const;  // throws NotFoundError
    std::size_t size() const { return docs_.size(); }
    const std::vector<Document>& documents() const { return docs_; }

private:
    std::vector<Document> docs_;
    std::unordered_map<Pmid, std::size_t> by_id_;
};

}  // namespace pubvec
