#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "pubvec/embedding/model.hpp"

namespace pubvec::embedding {

// File layout, all integers and floats little-endian:
//   "PUBVECM1" u32 version
//   u8 dm, u8 hs, u8 combine (0 = mean of inputs)
//   u32 vector_size, f64 sample, f64 alpha, u32 window, u32 epochs,
//   u32 negative, u32 min_count, u64 seed, f64 min_alpha_ratio
//   u64 |V|, then per word: u32 byte length, bytes, u64 count
//   u64 docs, then u64 pmid per doc
//   word, document and output matrices as f32, row-major
//   u32 epochs reported, f64 mean loss each, u64 corpus words

namespace {

constexpr char kMagic[8] = {'P', 'U', 'B', 'V', 'E', 'C', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}

    template <typename T>
    void uint(T v) {
        unsigned char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(buf), sizeof(T));
    }
    void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
    void bytes(const std::string& s) {
        uint(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void floats(const std::vector<float>& v) {
        std::vector<unsigned char> buf(v.size() * 4);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(v[i]);
            for (int b = 0; b < 4; ++b) buf[i * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
        }
        out_.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }

private:
    std::ofstream& out_;
};

class Reader {
public:
    explicit Reader(std::ifstream& in) : in_(in) {}

    void raw(void* dst, std::size_t n) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw ParseError("model file truncated", offset_);
        offset_ += n;
    }
    template <typename T>
    T uint() {
        unsigned char buf[sizeof(T)];
        raw(buf, sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf[i]) << (8 * i));
        return v;
    }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
    std::string bytes() {
        const auto n = uint<std::uint32_t>();
        if (n > (1u << 20)) throw ParseError("implausible string length in model file", offset_);
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    std::vector<float> floats(std::size_t n) {
        std::vector<unsigned char> buf(n * 4);
        raw(buf.data(), buf.size());
        std::vector<float> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[i * 4 + b]) << (8 * b);
            v[i] = std::bit_cast<float>(bits);
        }
        return v;
    }
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
    std::uint64_t offset() const { return offset_; }

private:
    std::ifstream& in_;
    std::uint64_t offset_ = 0;
};

}  // namespace

void save_model(const EmbeddingModel& model, const std::filesystem::path& path) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write model file " + tmp.string());
        Writer w(out);
        out.write(kMagic, sizeof kMagic);
        w.uint(kVersion);
        const auto& p = model.params();
        w.uint(static_cast<std::uint8_t>(to_int(p.dm)));
        w.uint(static_cast<std::uint8_t>(to_int(p.hs)));
        w.uint(std::uint8_t{0});
        w.uint(p.vector_size);
        w.f64(p.sample);
        w.f64(p.alpha);
        w.uint(p.window);
        w.uint(p.epochs);
        w.uint(p.negative);
        w.uint(p.min_count);
        w.uint(p.seed);
        w.f64(p.min_alpha_ratio);

        const auto& vocab = model.vocabulary();
        w.uint(static_cast<std::uint64_t>(vocab.size()));
        for (const auto& word : vocab.words()) {
            w.bytes(word.word);
            w.uint(word.count);
        }
        w.uint(static_cast<std::uint64_t>(model.document_count()));
        for (const auto id : model.document_ids()) w.uint(id.value);
        w.floats(model.word_matrix());
        w.floats(model.document_matrix());
        w.floats(model.output_matrix());

        const auto& report = model.report();
        w.uint(static_cast<std::uint32_t>(report.epoch_mean_loss.size()));
        for (const double l : report.epoch_mean_loss) w.f64(l);
        w.uint(report.corpus_words);
        out.flush();
        if (!out) throw Error("failed writing model file " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

EmbeddingModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open model file " + path.string());
    Reader r(in);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("not a model file: " + path.string(), 0);
    const auto version = r.uint<std::uint32_t>();
    if (version != kVersion) throw ParseError(fmt::format("unsupported model version {}", version), 8);

    EmbeddingModel model;
    auto& p = model.params_;
    try {
        p.dm = architecture_from_int(r.uint<std::uint8_t>());
        p.hs = output_layer_from_int(r.uint<std::uint8_t>());
    } catch (const ValidationError& e) {
        throw ParseError(e.what(), r.offset());
    }
    if (r.uint<std::uint8_t>() != 0) throw ParseError("unknown input combination mode", r.offset());
    p.vector_size = r.uint<std::uint32_t>();
    p.sample = r.f64();
    p.alpha = r.f64();
    p.window = r.uint<std::uint32_t>();
    p.epochs = r.uint<std::uint32_t>();
    p.negative = r.uint<std::uint32_t>();
    p.min_count = r.uint<std::uint32_t>();
    p.seed = r.uint<std::uint64_t>();
    p.min_alpha_ratio = r.f64();
    try {
        p.validate();
    } catch (const ValidationError& e) {
        throw ParseError(e.what(), r.offset());
    }

    const auto n_words = r.uint<std::uint64_t>();
    if (n_words == 0 || n_words > (1ULL << 32)) throw ParseError("implausible vocabulary size", r.offset());
    std::vector<std::pair<std::string, std::uint64_t>> counts;
    counts.reserve(n_words);
    for (std::uint64_t i = 0; i < n_words; ++i) {
        auto word = r.bytes();
        const auto count = r.uint<std::uint64_t>();
        counts.emplace_back(std::move(word), count);
    }
    try {
        model.vocab_ = Vocabulary::from_counts(std::move(counts), 1, p.hs);
    } catch (const ValidationError& e) {
        throw ParseError(e.what(), r.offset());
    }

    const auto n_docs = r.uint<std::uint64_t>();
    if (n_docs > (1ULL << 40)) throw ParseError("implausible document count", r.offset());
    model.doc_ids_.reserve(n_docs);
    for (std::uint64_t i = 0; i < n_docs; ++i) model.doc_ids_.emplace_back(r.uint<std::uint64_t>());

    const std::size_t d = p.vector_size;
    model.words_ = r.floats(model.vocab_.size() * d);
    model.docs_ = r.floats(n_docs * d);
    model.outputs_ = r.floats(model.vocab_.output_rows() * d);

    const auto n_epochs = r.uint<std::uint32_t>();
    if (n_epochs > (1u << 24)) throw ParseError("implausible epoch count", r.offset());
    for (std::uint32_t i = 0; i < n_epochs; ++i) model.report_.epoch_mean_loss.push_back(r.f64());
    model.report_.corpus_words = r.uint<std::uint64_t>();
    if (!r.at_end()) throw ParseError("trailing bytes in model file", r.offset());

    try {
        model.finish();
    } catch (const ValidationError& e) {
        throw ParseError(e.what(), r.offset());
    }
    return model;
}

}  // namespace pubvec::embedding
