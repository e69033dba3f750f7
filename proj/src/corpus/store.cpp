#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <future>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pubvec/store.hpp"

namespace pubvec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRecords = "records.jsonl";
constexpr const char* kIndex = "index.tsv";
constexpr const char* kSplit = "split.json";

template <typename Entry>
std::unordered_map<Pmid, Entry> read_index(const fs::path& path, std::vector<Pmid>* order) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("no document store index at " + path.string());
    std::unordered_map<Pmid, Entry> index;
    std::vector<std::pair<std::uint64_t, Pmid>> by_offset;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::uint64_t pmid = 0, offset = 0, length = 0;
        if (!(fields >> pmid >> offset >> length)) {
            throw ParseError("bad index line " + std::to_string(line_no) + " in " + path.string());
        }
        index[Pmid(pmid)] = Entry{offset, length};
        by_offset.emplace_back(offset, Pmid(pmid));
    }
    if (order != nullptr) {
        std::sort(by_offset.begin(), by_offset.end());
        order->clear();
        for (const auto& [off, id] : by_offset) order->push_back(id);
    }
    return index;
}

}  // namespace

std::string document_to_json(const Document& doc) {
    json mesh = json::array();
    for (const auto& m : doc.mesh) {
        json quals = json::array();
        for (const auto& q : m.qualifiers) quals.push_back({{"name", q.name}, {"major", q.major_topic}});
        mesh.push_back({{"descriptor", m.descriptor}, {"major", m.major_topic}, {"qualifiers", std::move(quals)}});
    }
    json j = {{"pmid", doc.pmid.value}, {"title", doc.title}, {"abstract", doc.abstract}, {"mesh", std::move(mesh)}};
    return j.dump();
}

Document document_from_json(std::string_view line) {
    const auto j = json::parse(line);
    Document doc;
    doc.pmid = Pmid(j.at("pmid").get<std::uint64_t>());
    doc.title = j.at("title").get<std::string>();
    doc.abstract = j.at("abstract").get<std::string>();
    for (const auto& m : j.at("mesh")) {
        MeshAnnotation ann;
        ann.descriptor = m.at("descriptor").get<std::string>();
        ann.major_topic = m.at("major").get<bool>();
        for (const auto& q : m.at("qualifiers")) ann.qualifiers.push_back({q.at("name").get<std::string>(), q.at("major").get<bool>()});
        doc.mesh.push_back(std::move(ann));
    }
    return doc;
}

// ---------------------------------------------------------------- writer

StoreWriter::StoreWriter(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    if (fs::exists(dir_ / kIndex)) index_ = read_index<Entry>(dir_ / kIndex, nullptr);
    end_offset_ = fs::exists(dir_ / kRecords) ? fs::file_size(dir_ / kRecords) : 0;
    records_.open(dir_ / kRecords, std::ios::binary | std::ios::app);
    if (!records_) throw Error("cannot open " + (dir_ / kRecords).string() + " for writing");
}

StoreWriter::~StoreWriter() {
    try {
        close();
    } catch (...) {
    }
}

void StoreWriter::add(const Document& doc) {
    if (closed_) throw Error("StoreWriter: add after close");
    if (!doc.pmid.valid()) throw ValidationError("document without PMID");
    std::string line = document_to_json(doc);
    line.push_back('\n');
    records_.write(line.data(), static_cast<std::streamsize>(line.size()));
    auto [it, inserted] = index_.insert_or_assign(doc.pmid, Entry{end_offset_, line.size()});
    if (!inserted) ++duplicates_;
    end_offset_ += line.size();
    ++written_;
}

void StoreWriter::close() {
    if (closed_) return;
    closed_ = true;
    records_.close();
    std::vector<std::pair<Pmid, Entry>> entries(index_.begin(), index_.end());
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.second.offset < b.second.offset; });
    const auto tmp = dir_ / "index.tsv.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        for (const auto& [id, e] : entries) out << id.value << '\t' << e.offset << '\t' << e.length << '\n';
        if (!out) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, dir_ / kIndex);
}

// ---------------------------------------------------------------- reader

DocumentStore::DocumentStore(fs::path dir) : dir_(std::move(dir)) {
    index_ = read_index<Entry>(dir_ / kIndex, &order_);
    fd_ = ::open((dir_ / kRecords).c_str(), O_RDONLY | O_CLOEXEC);
    if (fd_ < 0) throw NotFoundError("cannot open " + (dir_ / kRecords).string());
}

DocumentStore::~DocumentStore() {
    if (fd_ >= 0) ::close(fd_);
}

DocumentStore::DocumentStore(DocumentStore&& other) noexcept
    : dir_(std::move(other.dir_)), fd_(other.fd_), index_(std::move(other.index_)), order_(std::move(other.order_)) {
    other.fd_ = -1;
}

DocumentStore& DocumentStore::operator=(DocumentStore&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        dir_ = std::move(other.dir_);
        fd_ = other.fd_;
        index_ = std::move(other.index_);
        order_ = std::move(other.order_);
        other.fd_ = -1;
    }
    return *this;
}

Document DocumentStore::get(Pmid id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw NotFoundError("document " + to_string(id) + " not in store");
    std::string buf(it->second.length, '\0');
    std::size_t done = 0;
    while (done < buf.size()) {
        const auto n = ::pread(fd_, buf.data() + done, buf.size() - done, static_cast<off_t>(it->second.offset + done));
        if (n <= 0) throw Error("short read from " + (dir_ / kRecords).string());
        done += static_cast<std::size_t>(n);
    }
    return document_from_json(buf);
}

std::vector<Document> DocumentStore::load_all() const {
    std::vector<Document> docs;
    docs.reserve(order_.size());
    for (auto id : order_) docs.push_back(get(id));
    return docs;
}

DocumentIndex DocumentStore::load_index() const { return DocumentIndex(load_all()); }

bool DocumentStore::has_split() const { return fs::exists(dir_ / kSplit); }

CorpusSplit DocumentStore::split() const { return load_split(dir_ / kSplit); }

void DocumentStore::write_split(const CorpusSplit& split) const { save_split(split, dir_ / kSplit); }

// ---------------------------------------------------------------- ingest

std::string IngestReport::to_text() const {
    std::ostringstream out;
    out << "files\t" << files << '\n'
        << "parsed\t" << parsed << '\n'
        << "skipped\t" << skipped << '\n'
        << "eligible\t" << eligible << '\n'
        << "ineligible\t" << ineligible << '\n'
        << "duplicates\t" << duplicates << '\n'
        << "stored\t" << stored << '\n'
        << "errors\t" << errors.size() << '\n';
    for (const auto& e : errors) out << "error\t" << e << '\n';
    return out.str();
}

IngestReport ingest_files(const std::vector<fs::path>& inputs, const fs::path& store_dir, unsigned workers) {
    struct FileResult {
        std::vector<Document> docs;
        ParseStats stats;
        std::string error;
    };
    auto parse_one = [](const fs::path& path) {
        FileResult r;
        try {
            r.stats = parse_medline_file(path, [&](Document&& d) { r.docs.push_back(std::move(d)); });
        } catch (const Error& e) {
            r.error = path.string() + ": " + e.what();
            r.stats.parsed = r.docs.size();
        }
        return r;
    };

    IngestReport report;
    StoreWriter writer(store_dir);
    workers = std::max(1u, workers);
    // Files are parsed in batches of `workers`; results are written in input order.
    for (std::size_t begin = 0; begin < inputs.size(); begin += workers) {
        const std::size_t end = std::min(inputs.size(), begin + workers);
        std::vector<std::future<FileResult>> pending;
        for (std::size_t i = begin; i < end; ++i) {
            pending.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, parse_one, inputs[i]));
        }
        for (auto& f : pending) {
            FileResult r = f.get();
            ++report.files;
            report.parsed += r.stats.parsed;
            report.skipped += r.stats.skipped_missing_pmid;
            if (!r.error.empty()) report.errors.push_back(r.error);
            for (const auto& d : r.docs) {
                if (is_eligible(d)) {
                    ++report.eligible;
                    writer.add(d);
                } else {
                    ++report.ineligible;
                }
            }
        }
    }
    writer.close();
    report.duplicates = writer.duplicates();
    report.stored = DocumentStore(store_dir).size();
    return report;
}

}  // namespace pubvec
