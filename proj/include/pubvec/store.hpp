#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pubvec/corpus.hpp"

namespace pubvec {

// On-disk layout of a store directory:
//   records.jsonl  append-only, one JSON document per line
//   index.tsv      pmid <TAB> byte offset <TAB> byte length, latest record per PMID
//   split.json     optional train/test split
//
// One writer at a time; any number of concurrent readers once the writer
// has closed.

/// Single-line JSON encoding used by records.jsonl.
std::string document_to_json(const Document& doc);
Document document_from_json(std::string_view line);

class StoreWriter {
public:
    /// Opens (creating if needed) a store directory for appending. An
    /// existing index is loaded so later writes of a PMID replace earlier ones.
    explicit StoreWriter(std::filesystem::path dir);
    ~StoreWriter();

    StoreWriter(const StoreWriter&) = delete;
    StoreWriter& operator=(const StoreWriter&) = delete;

    void add(const Document& doc);

    /// Number of add() calls that replaced an already stored PMID.
    std::uint64_t duplicates() const { return duplicates_; }
    std::uint64_t written() const { return written_; }

    /// Flushes records and rewrites the index. Idempotent.
    void close();

private:
    struct Entry {
        std::uint64_t offset;
        std::uint64_t length;
    };

    std::filesystem::path dir_;
    std::ofstream records_;
    std::uint64_t end_offset_ = 0;
    std::unordered_map<Pmid, Entry> index_;
    std::uint64_t duplicates_ = 0;
    std::uint64_t written_ = 0;
    bool closed_ = false;
};

class DocumentStore {
public:
    /// Throws NotFoundError when the directory holds no index.
    explicit DocumentStore(std::filesystem::path dir);
    ~DocumentStore();

    DocumentStore(const DocumentStore&) = delete;
    DocumentStore& operator=(const DocumentStore&) = delete;
    DocumentStore(DocumentStore&&) noexcept;
    DocumentStore& operator=(DocumentStore&&) noexcept;

    const std::filesystem::path& dir() const { return dir_; }
    std::size_t size() const { return order_.size(); }
    bool contains(Pmid id) const { return index_.count(id) != 0; }

    /// Safe to call from several threads.
    Document get(Pmid id) const;

    /// PMIDs in record-file order.
    const std::vector<Pmid>& ids() const { return order_; }

    std::vector<Document> load_all() const;
    DocumentIndex load_index() const;

    bool has_split() const;
    CorpusSplit split() const;
    void write_split(const CorpusSplit& split) const;

private:
    struct Entry {
        std::uint64_t offset;
        std::uint64_t length;
    };

    std::filesystem::path dir_;
    int fd_ = -1;
    std::unordered_map<Pmid, Entry> index_;
    std::vector<Pmid> order_;
};

struct IngestReport {
    std::uint64_t files = 0;
    std::uint64_t parsed = 0;
    std::uint64_t skipped = 0;  // citations without PMID
    std::uint64_t eligible = 0;
    std::uint64_t ineligible = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t stored = 0;  // distinct PMIDs in the store after ingest
    std::vector<std::string> errors;

    /// "key<TAB>value" lines.
    std::string to_text() const;
};

/// Parses each input file (in parallel, up to `workers` at once), keeps the
/// eligible documents and appends them to the store in input-file order.
/// Parse errors are reported per file; documents read before the error are
/// kept.
IngestReport ingest_files(const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& store_dir,
                          unsigned workers = 1);

}  // namespace pubvec
