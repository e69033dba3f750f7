#include "pubvec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <zlib.h>

#include "pubvec/textproc.hpp"

namespace pubvec::synth {

namespace {

constexpr const char* kOnsets[] = {"b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
                                   "br", "cl", "dr", "gl", "pr", "st", "tr", "sk"};
constexpr const char* kNuclei[] = {"a", "e", "i", "o", "u", "ae", "io", "ou"};
constexpr const char* kCodas[] = {"", "n", "r", "s", "l", "x", "m", "t"};
constexpr const char* kQualifiers[] = {"genetics",    "metabolism", "pathology", "therapy",      "diagnosis",
                                       "physiology",  "epidemiology", "drug effects", "immunology", "complications"};

std::string syllable(std::size_t v) {
    constexpr std::size_t no = std::size(kOnsets), nn = std::size(kNuclei), nc = std::size(kCodas);
    return std::string(kOnsets[v % no]) + kNuclei[(v / no) % nn] + kCodas[(v / (no * nn)) % nc];
}

// Zipf-weighted pick among n items.
class Zipf {
public:
    explicit Zipf(std::size_t n) : cdf_(n) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += 1.0 / static_cast<double>(i + 1);
            cdf_[i] = acc;
        }
        for (auto& c : cdf_) c /= acc;
    }
    std::size_t operator()(Rng& rng) const {
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), rng.unit());
        return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    }

private:
    std::vector<double> cdf_;
};

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (const char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace

std::string pseudo_word(std::size_t index) {
    // Two or three syllables; the third keeps the space large enough.
    constexpr std::size_t per = std::size(kOnsets) * std::size(kNuclei) * std::size(kCodas);
    std::string w = syllable(index % per) + syllable((index / per + index * 7919) % per);
    if (index >= per) w += syllable(index / per);
    return w;
}

SynthCorpus generate_corpus(const SynthConfig& c) {
    if (c.topics == 0 || c.words_per_topic == 0 || c.min_abstract_tokens == 0 ||
        c.min_abstract_tokens > c.max_abstract_tokens) {
        throw ValidationError("invalid synthetic corpus configuration");
    }
    Rng rng(c.seed);
    const auto stop = textproc::StopwordList::english().sorted();

    // Vocabulary slots: topic words first, then background words.
    auto topic_word = [&](std::size_t topic, std::size_t r) { return pseudo_word(topic * c.words_per_topic + r); };
    auto background_word = [&](std::size_t r) { return pseudo_word(c.topics * c.words_per_topic + r); };
    auto descriptor = [&](std::size_t topic, std::size_t r) {
        return capitalize(pseudo_word(50000 + topic * c.descriptors_per_topic + r)) + " " +
               capitalize(pseudo_word(60000 + topic));
    };
    auto shared_descriptor = [&](std::size_t r) { return capitalize(pseudo_word(70000 + r)); };

    const Zipf topic_zipf(c.words_per_topic);
    const Zipf background_zipf(std::max<std::size_t>(1, c.background_words));
    const Zipf stop_zipf(stop.size());
    const Zipf descriptor_zipf(c.descriptors_per_topic);

    auto inflect = [&](std::string w) {
        static constexpr const char* kSuffixes[] = {"s", "ing", "ed"};
        if (c.inflection_prob > 0.0 && rng.unit() < c.inflection_prob) w += kSuffixes[rng.index(std::size(kSuffixes))];
        return w;
    };
    auto draw_token = [&](std::size_t primary, std::size_t secondary) {
        const double u = rng.unit();
        if (u < c.stopword_share) return stop[stop_zipf(rng)];
        if (u < c.stopword_share + c.topic_share || c.background_words == 0) {
            const std::size_t t = (secondary != primary && rng.unit() < 0.35) ? secondary : primary;
            return inflect(topic_word(t, topic_zipf(rng)));
        }
        return inflect(background_word(background_zipf(rng)));
    };

    SynthCorpus out;
    std::uint64_t next_pmid = c.first_pmid;
    for (std::size_t i = 0; i < c.documents; ++i) {
        const bool duplicate = !out.documents.empty() && rng.unit() < c.duplicate_fraction;
        const std::size_t primary = rng.index(c.topics);
        const std::size_t secondary = rng.unit() < c.secondary_topic_prob ? rng.index(c.topics) : primary;

        Document doc;
        if (duplicate) {
            const auto& prev = out.documents[rng.index(out.documents.size())];
            doc.pmid = prev.pmid.valid() ? prev.pmid : Pmid(next_pmid++);
        } else {
            doc.pmid = Pmid(next_pmid++);
        }
        if (rng.unit() < c.missing_pmid_fraction) doc.pmid = Pmid{};

        const std::size_t title_len = 5 + rng.index(8);
        for (std::size_t t = 0; t < title_len; ++t) {
            if (t) doc.title.push_back(' ');
            doc.title += t == 0 ? capitalize(draw_token(primary, secondary)) : draw_token(primary, secondary);
        }
        doc.title.push_back('.');

        const std::size_t len = c.min_abstract_tokens + rng.index(c.max_abstract_tokens - c.min_abstract_tokens + 1);
        bool sentence_start = true;
        for (std::size_t t = 0; t < len; ++t) {
            auto tok = draw_token(primary, secondary);
            if (t) doc.abstract.push_back(' ');
            doc.abstract += sentence_start ? capitalize(tok) : tok;
            sentence_start = rng.unit() < 0.08 || t + 1 == len;
            if (sentence_start) doc.abstract.push_back('.');
        }

        std::vector<std::string> seen;
        auto add_heading = [&](std::string name, bool major) {
            if (std::find(seen.begin(), seen.end(), name) != seen.end()) return;
            seen.push_back(name);
            MeshAnnotation m{std::move(name), major, {}};
            const std::size_t nq = rng.index(3);
            for (std::size_t q = 0; q < nq; ++q) {
                std::string qn = kQualifiers[rng.index(std::size(kQualifiers))];
                if (std::none_of(m.qualifiers.begin(), m.qualifiers.end(), [&](const auto& x) { return x.name == qn; })) {
                    m.qualifiers.push_back({std::move(qn), rng.unit() < 0.3});
                }
            }
            doc.mesh.push_back(std::move(m));
        };
        const std::size_t n_topic = 2 + rng.index(3);
        for (std::size_t k = 0; k < n_topic; ++k) add_heading(descriptor(primary, descriptor_zipf(rng)), k == 0);
        if (secondary != primary) add_heading(descriptor(secondary, descriptor_zipf(rng)), false);
        if (c.shared_descriptors > 0) {
            const std::size_t n_shared = 1 + rng.index(2);
            for (std::size_t k = 0; k < n_shared; ++k) add_heading(shared_descriptor(rng.index(c.shared_descriptors)), false);
        }

        if (rng.unit() < c.ineligible_fraction) {
            if (rng.unit() < 0.5) {
                doc.abstract.clear();
            } else {
                doc.mesh.clear();
            }
        }
        out.documents.push_back(std::move(doc));
        out.primary_topic.push_back(primary);
        out.secondary_topic.push_back(secondary);
    }
    return out;
}

std::string to_medline_xml(std::span<const Document> docs) {
    std::string xml = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<PubmedArticleSet>\n";
    for (const auto& d : docs) {
        xml += "  <PubmedArticle>\n    <MedlineCitation Status=\"MEDLINE\" Owner=\"NLM\">\n";
        if (d.pmid.valid()) xml += "      <PMID Version=\"1\">" + to_string(d.pmid) + "</PMID>\n";
        xml += "      <Article PubModel=\"Print\">\n";
        xml += "        <ArticleTitle>" + escape_xml(d.title) + "</ArticleTitle>\n";
        if (!d.abstract.empty()) {
            xml += "        <Abstract>\n          <AbstractText>" + escape_xml(d.abstract) +
                   "</AbstractText>\n        </Abstract>\n";
        }
        xml += "      </Article>\n";
        if (!d.mesh.empty()) {
            xml += "      <MeshHeadingList>\n";
            for (const auto& m : d.mesh) {
                xml += "        <MeshHeading>\n          <DescriptorName MajorTopicYN=\"";
                xml += m.major_topic ? "Y" : "N";
                xml += "\">" + escape_xml(m.descriptor) + "</DescriptorName>\n";
                for (const auto& q : m.qualifiers) {
                    xml += "          <QualifierName MajorTopicYN=\"";
                    xml += q.major_topic ? "Y" : "N";
                    xml += "\">" + escape_xml(q.name) + "</QualifierName>\n";
                }
                xml += "        </MeshHeading>\n";
            }
            xml += "      </MeshHeadingList>\n";
        }
        xml += "    </MedlineCitation>\n  </PubmedArticle>\n";
    }
    xml += "</PubmedArticleSet>\n";
    return xml;
}

std::string gzip_bytes(const std::string& data) {
    z_stream zs{};
    if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw Error("deflateInit2 failed");
    }
    std::string out(deflateBound(&zs, static_cast<uLong>(data.size())) + 32, '\0');
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw Error("gzip compression failed");
    out.resize(zs.total_out);
    return out;
}

void write_medline_file(std::span<const Document> docs, const std::filesystem::path& path, bool gzip) {
    const auto xml = to_medline_xml(docs);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    const auto bytes = gzip ? gzip_bytes(xml) : xml;
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace pubvec::synth
