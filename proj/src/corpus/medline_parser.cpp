#include <expat.h>
#include <zlib.h>

#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <sstream>

#include "pubvec/corpus.hpp"

namespace pubvec {

namespace {

constexpr std::size_t kChunk = 1 << 16;

// Reads raw or gzip-compressed bytes from a stream, inflating transparently.
class ByteSource {
public:
    explicit ByteSource(std::istream& in) : in_(in) {
        fill_raw();
        gzip_ = raw_len_ >= 2 && static_cast<unsigned char>(raw_[0]) == 0x1f &&
                static_cast<unsigned char>(raw_[1]) == 0x8b;
        if (gzip_) {
            std::memset(&zs_, 0, sizeof(zs_));
            if (inflateInit2(&zs_, 15 + 32) != Z_OK) throw Error("zlib: inflateInit2 failed");
            zs_.next_in = reinterpret_cast<Bytef*>(raw_.data());
            zs_.avail_in = static_cast<uInt>(raw_len_);
        }
    }

    ~ByteSource() {
        if (gzip_) inflateEnd(&zs_);
    }

    ByteSource(const ByteSource&) = delete;
    ByteSource& operator=(const ByteSource&) = delete;

    /// Returns bytes written to `out`; 0 means end of input.
    std::size_t read(char* out, std::size_t cap) {
        if (!gzip_) {
            if (raw_pos_ == raw_len_) fill_raw();
            const std::size_t n = std::min(cap, raw_len_ - raw_pos_);
            std::memcpy(out, raw_.data() + raw_pos_, n);
            raw_pos_ += n;
            return n;
        }
        if (finished_) return 0;
        zs_.next_out = reinterpret_cast<Bytef*>(out);
        zs_.avail_out = static_cast<uInt>(cap);
        while (zs_.avail_out > 0) {
            if (zs_.avail_in == 0) {
                fill_raw();
                if (raw_len_ == 0) {
                    if (!member_done_) throw ParseError("gzip: truncated compressed stream", inflated_);
                    finished_ = true;
                    break;
                }
                zs_.next_in = reinterpret_cast<Bytef*>(raw_.data());
                zs_.avail_in = static_cast<uInt>(raw_len_);
            }
            // Concatenated gzip members are legal.
            if (member_done_) {
                inflateReset(&zs_);
                member_done_ = false;
            }
            const uInt before = zs_.avail_out;
            const int rc = inflate(&zs_, Z_NO_FLUSH);
            inflated_ += before - zs_.avail_out;
            if (rc == Z_STREAM_END) {
                member_done_ = true;
            } else if (rc != Z_OK) {
                throw ParseError(std::string("gzip: ") + (zs_.msg ? zs_.msg : "inflate failed"), inflated_);
            }
        }
        return cap - zs_.avail_out;
    }

private:
    void fill_raw() {
        in_.read(raw_.data(), static_cast<std::streamsize>(raw_.size()));
        raw_len_ = static_cast<std::size_t>(in_.gcount());
        raw_pos_ = 0;
    }

    std::istream& in_;
    std::array<char, kChunk> raw_{};
    std::size_t raw_len_ = 0;
    std::size_t raw_pos_ = 0;
    bool gzip_ = false;
    bool finished_ = false;
    bool member_done_ = false;
    std::uint64_t inflated_ = 0;
    z_stream zs_{};
};

void collapse_whitespace(std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    s = std::move(out);
}

bool attribute_is_yes(const XML_Char** atts, const char* name) {
    for (int i = 0; atts[i] != nullptr; i += 2) {
        if (std::strcmp(atts[i], name) == 0) return std::strcmp(atts[i + 1], "Y") == 0;
    }
    return false;
}

class MedlineHandler {
public:
    explicit MedlineHandler(const DocumentSink& sink) : sink_(sink) {}

    void start(const char* name, const XML_Char** atts) {
        const std::string_view el(name);
        const std::string_view parent = path_.empty() ? std::string_view() : std::string_view(path_.back());
        path_.emplace_back(el);

        if (capture_ != nullptr) return;  // nested inline markup inside a captured element

        if (el == "MedlineCitation") {
            in_citation_ = true;
            doc_ = Document{};
            pmid_text_.clear();
            abstract_parts_.clear();
            return;
        }
        if (!in_citation_) return;

        if (el == "PMID" && parent == "MedlineCitation") {
            begin_capture(&pmid_text_);
        } else if (el == "ArticleTitle" && parent == "Article") {
            begin_capture(&doc_.title);
        } else if (el == "AbstractText" && parent == "Abstract" && grandparent_is("Article")) {
            abstract_parts_.emplace_back();
            begin_capture(&abstract_parts_.back());
        } else if (el == "DescriptorName" && parent == "MeshHeading") {
            MeshAnnotation ann;
            ann.major_topic = attribute_is_yes(atts, "MajorTopicYN");
            doc_.mesh.push_back(std::move(ann));
            begin_capture(&doc_.mesh.back().descriptor);
        } else if (el == "QualifierName" && parent == "MeshHeading" && !doc_.mesh.empty()) {
            qualifier_text_.clear();
            qualifier_major_ = attribute_is_yes(atts, "MajorTopicYN");
            begin_capture(&qualifier_text_);
        }
    }

    void end(const char* name) {
        const std::string_view el(name);
        if (capture_ != nullptr && path_.size() == capture_depth_) finish_capture(el);
        path_.pop_back();
        if (el == "MedlineCitation" && in_citation_) {
            in_citation_ = false;
            emit();
        }
    }

    void text(const XML_Char* s, int len) {
        if (capture_ != nullptr) capture_->append(s, static_cast<std::size_t>(len));
    }

    const ParseStats& stats() const { return stats_; }

private:
    bool grandparent_is(std::string_view name) const {
        return path_.size() >= 3 && path_[path_.size() - 3] == name;
    }

    void begin_capture(std::string* target) {
        capture_ = target;
        capture_depth_ = path_.size();
    }

    void finish_capture(std::string_view el) {
        collapse_whitespace(*capture_);
        if (el == "QualifierName") {
            auto& ann = doc_.mesh.back();
            if (!qualifier_text_.empty()) {
                bool merged = false;
                for (auto& q : ann.qualifiers) {
                    if (q.name == qualifier_text_) {
                        q.major_topic = q.major_topic || qualifier_major_;
                        merged = true;
                    }
                }
                if (!merged) ann.qualifiers.push_back({qualifier_text_, qualifier_major_});
            }
        } else if (el == "DescriptorName" && doc_.mesh.back().descriptor.empty()) {
            doc_.mesh.pop_back();
        }
        capture_ = nullptr;
    }

    void emit() {
        std::uint64_t id = 0;
        bool ok = !pmid_text_.empty();
        for (char c : pmid_text_) {
            if (c < '0' || c > '9') {
                ok = false;
                break;
            }
            id = id * 10 + static_cast<std::uint64_t>(c - '0');
        }
        if (!ok || id == 0) {
            ++stats_.skipped_missing_pmid;
            return;
        }
        doc_.pmid = Pmid(id);
        std::string abstract;
        for (const auto& part : abstract_parts_) {
            if (part.empty()) continue;
            if (!abstract.empty()) abstract.push_back(' ');
            abstract += part;
        }
        doc_.abstract = std::move(abstract);
        ++stats_.parsed;
        sink_(std::move(doc_));
        doc_ = Document{};
    }

    const DocumentSink& sink_;
    ParseStats stats_;
    std::vector<std::string> path_;
    bool in_citation_ = false;
    Document doc_;
    std::string pmid_text_;
    std::vector<std::string> abstract_parts_;
    std::string qualifier_text_;
    bool qualifier_major_ = false;
    std::string* capture_ = nullptr;
    std::size_t capture_depth_ = 0;
};

struct ParserDeleter {
    void operator()(XML_Parser p) const { XML_ParserFree(p); }
};

}  // namespace

ParseStats parse_medline(std::istream& in, const DocumentSink& sink) {
    MedlineHandler handler(sink);
    std::unique_ptr<std::remove_pointer_t<XML_Parser>, ParserDeleter> parser(XML_ParserCreate(nullptr));
    if (!parser) throw Error("expat: cannot create parser");
    XML_SetUserData(parser.get(), &handler);
    XML_SetElementHandler(
        parser.get(),
        [](void* ud, const XML_Char* name, const XML_Char** atts) { static_cast<MedlineHandler*>(ud)->start(name, atts); },
        [](void* ud, const XML_Char* name) { static_cast<MedlineHandler*>(ud)->end(name); });
    XML_SetCharacterDataHandler(parser.get(), [](void* ud, const XML_Char* s, int len) {
        static_cast<MedlineHandler*>(ud)->text(s, len);
    });

    ByteSource source(in);
    std::array<char, kChunk> buf{};
    while (true) {
        const std::size_t n = source.read(buf.data(), buf.size());
        const bool last = n == 0;
        if (XML_Parse(parser.get(), buf.data(), static_cast<int>(n), last ? 1 : 0) == XML_STATUS_ERROR) {
            const auto offset = static_cast<std::uint64_t>(XML_GetCurrentByteIndex(parser.get()));
            throw ParseError(std::string("malformed MEDLINE XML: ") + XML_ErrorString(XML_GetErrorCode(parser.get())),
                             offset);
        }
        if (last) break;
    }
    return handler.stats();
}

ParseStats parse_medline_file(const std::filesystem::path& path, const DocumentSink& sink) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    return parse_medline(in, sink);
}

std::vector<Document> parse_medline_string(std::string_view xml, ParseStats* stats) {
    std::istringstream in{std::string(xml)};
    std::vector<Document> docs;
    const auto s = parse_medline(in, [&](Document&& d) { docs.push_back(std::move(d)); });
    if (stats != nullptr) *stats = s;
    return docs;
}

}  // namespace pubvec
