#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "pubvec/corpus.hpp"
#include "pubvec/store.hpp"

using namespace pubvec;
namespace fs = std::filesystem;

namespace {

const char* kSingleCitation = R"(<?xml version="1.0" encoding="UTF-8"?>
<PubmedArticleSet>
  <PubmedArticle>
    <MedlineCitation Status="MEDLINE" Owner="NLM">
      <PMID Version="1">123</PMID>
      <Article PubModel="Print">
        <ArticleTitle>T</ArticleTitle>
        <Abstract>
          <AbstractText>A</AbstractText>
        </Abstract>
      </Article>
      <MeshHeadingList>
        <MeshHeading>
          <DescriptorName UI="D006333" MajorTopicYN="N">Heart Failure</DescriptorName>
        </MeshHeading>
      </MeshHeadingList>
    </MedlineCitation>
  </PubmedArticle>
</PubmedArticleSet>
)";

const char* kRichCitations = R"(<?xml version="1.0"?>
<PubmedArticleSet>
  <PubmedArticle>
    <MedlineCitation>
      <PMID Version="1">1001</PMID>
      <Article>
        <ArticleTitle>Role of <i>TP53</i> in
            apoptosis.</ArticleTitle>
        <Abstract>
          <AbstractText Label="BACKGROUND" NlmCategory="BACKGROUND">First part.</AbstractText>
          <AbstractText Label="RESULTS">Second <sup>2</sup> part.</AbstractText>
        </Abstract>
      </Article>
      <MeshHeadingList>
        <MeshHeading>
          <DescriptorName MajorTopicYN="Y">Apoptosis</DescriptorName>
          <QualifierName MajorTopicYN="N">genetics</QualifierName>
          <QualifierName MajorTopicYN="Y">physiology</QualifierName>
          <QualifierName MajorTopicYN="N">genetics</QualifierName>
        </MeshHeading>
        <MeshHeading>
          <DescriptorName MajorTopicYN="N">Humans</DescriptorName>
        </MeshHeading>
      </MeshHeadingList>
      <CommentsCorrectionsList>
        <CommentsCorrections RefType="Cites"><PMID Version="1">999</PMID></CommentsCorrections>
      </CommentsCorrectionsList>
    </MedlineCitation>
    <PubmedData><ArticleIdList><ArticleId IdType="pubmed">1001</ArticleId></ArticleIdList></PubmedData>
  </PubmedArticle>
  <PubmedArticle>
    <MedlineCitation>
      <Article><ArticleTitle>No identifier</ArticleTitle></Article>
    </MedlineCitation>
  </PubmedArticle>
  <PubmedArticle>
    <MedlineCitation>
      <PMID Version="1">1002</PMID>
      <Article>
        <ArticleTitle>Only a title</ArticleTitle>
      </Article>
      <MeshHeadingList></MeshHeadingList>
    </MedlineCitation>
  </PubmedArticle>
</PubmedArticleSet>
)";

std::string gzip(const std::string& data) {
    z_stream zs{};
    REQUIRE(deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) == Z_OK);
    std::string out(compressBound(static_cast<uLong>(data.size())) + 64, '\0');
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("pubvec_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Document make_doc(std::uint64_t id, std::string abstract, std::size_t n_mesh) {
    Document d;
    d.pmid = Pmid(id);
    d.title = "title " + std::to_string(id);
    d.abstract = std::move(abstract);
    for (std::size_t i = 0; i < n_mesh; ++i) d.mesh.push_back({"M" + std::to_string(i), i == 0, {}});
    return d;
}

}  // namespace

TEST_CASE("parse single citation fixture") {
    ParseStats stats;
    const auto docs = parse_medline_string(kSingleCitation, &stats);
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].pmid == Pmid(123));
    CHECK(docs[0].title == "T");
    CHECK(docs[0].abstract == "A");
    REQUIRE(docs[0].mesh.size() == 1);
    CHECK(docs[0].mesh[0].descriptor == "Heart Failure");
    CHECK_FALSE(docs[0].mesh[0].major_topic);
    CHECK(stats.parsed == 1);
    CHECK(stats.skipped_missing_pmid == 0);
}

TEST_CASE("structured abstracts, inline markup, qualifiers, missing PMID") {
    ParseStats stats;
    const auto docs = parse_medline_string(kRichCitations, &stats);
    REQUIRE(docs.size() == 2);
    CHECK(stats.skipped_missing_pmid == 1);

    const auto& d = docs[0];
    CHECK(d.pmid == Pmid(1001));
    CHECK(d.title == "Role of TP53 in apoptosis.");
    CHECK(d.abstract == "First part. Second 2 part.");
    REQUIRE(d.mesh.size() == 2);
    CHECK(d.mesh[0].descriptor == "Apoptosis");
    CHECK(d.mesh[0].major_topic);
    REQUIRE(d.mesh[0].qualifiers.size() == 2);
    CHECK(d.mesh[0].qualifiers[0] == Qualifier{"genetics", false});
    CHECK(d.mesh[0].qualifiers[1] == Qualifier{"physiology", true});
    CHECK(d.mesh[1].descriptor == "Humans");

    // Empty MeshHeadingList and no abstract.
    CHECK(docs[1].pmid == Pmid(1002));
    CHECK(docs[1].abstract.empty());
    CHECK(docs[1].mesh.empty());
}

TEST_CASE("truncated stream throws with offset after delivering earlier citations") {
    const std::string full = kRichCitations;
    const std::string truncated = full.substr(0, full.find("<MedlineCitation>\n      <Article><ArticleTitle>No"));
    std::vector<Document> seen;
    std::istringstream in(truncated);
    try {
        parse_medline(in, [&](Document&& d) { seen.push_back(std::move(d)); });
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.byte_offset() > 0);
        CHECK(e.byte_offset() <= truncated.size());
    }
    REQUIRE(seen.size() == 1);
    CHECK(seen[0].pmid == Pmid(1001));
}

TEST_CASE("malformed XML reports byte offset") {
    const std::string bad = "<PubmedArticleSet><PubmedArticle></Oops></PubmedArticleSet>";
    try {
        parse_medline_string(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const auto tag = bad.find("</Oops>");
        CHECK(e.byte_offset() >= tag);
        CHECK(e.byte_offset() < tag + 7);
    }
}

TEST_CASE("gzip input is detected and inflated") {
    const std::string gz = gzip(kRichCitations);
    std::istringstream in(gz);
    std::vector<Document> docs;
    parse_medline(in, [&](Document&& d) { docs.push_back(std::move(d)); });
    CHECK(docs == parse_medline_string(kRichCitations));

    // One document compressed as two concatenated gzip members.
    const std::string xml = kRichCitations;
    std::istringstream twice(gzip(xml.substr(0, 700)) + gzip(xml.substr(700)));
    docs.clear();
    parse_medline(twice, [&](Document&& d) { docs.push_back(std::move(d)); });
    CHECK(docs == parse_medline_string(kRichCitations));

    // Truncated compressed stream.
    std::istringstream cut(gz.substr(0, gz.size() / 2));
    CHECK_THROWS_AS(parse_medline(cut, [](Document&&) {}), ParseError);
}

TEST_CASE("filter_eligible rule") {
    const auto no_mesh = make_doc(1, "abstract", 0);
    const auto no_abstract = make_doc(2, "", 2);
    const auto ok = make_doc(3, "abstract", 1);
    auto out = filter_eligible({no_mesh, no_abstract, ok});
    REQUIRE(out.size() == 1);
    CHECK(out[0].pmid == Pmid(3));

    // Idempotent and order preserving.
    std::vector<Document> docs;
    for (std::uint64_t i = 1; i <= 30; ++i) docs.push_back(make_doc(i, i % 3 ? "x" : "", i % 4));
    const auto once = filter_eligible(docs);
    CHECK(filter_eligible(once) == once);
    for (std::size_t i = 1; i < once.size(); ++i) CHECK(once[i - 1].pmid < once[i].pmid);
}

TEST_CASE("normalize_document") {
    Document d;
    d.title = "Heart Failure";
    d.abstract = "A Study.";
    CHECK(normalize_document(d) == std::vector<std::string>{"heart", "failure", "a", "study"});

    d.title = "Same text";
    d.abstract = "Same text";
    CHECK(normalize_document(d) == std::vector<std::string>{"same", "text", "same", "text"});

    d.title.clear();
    d.abstract = "Only abstract";
    CHECK(normalize_document(d) == std::vector<std::string>{"only", "abstract"});
}

TEST_CASE("split_corpus sizes, determinism and errors") {
    std::vector<Pmid> ids;
    for (std::uint64_t i = 1; i <= 100; ++i) ids.emplace_back(i);
    const auto s = split_corpus(ids, 0.01, 42);
    CHECK(s.test_ids.size() == 1);
    CHECK(s.train_ids.size() == 99);

    const auto again = split_corpus(ids, 0.01, 42);
    CHECK(again.test_ids == s.test_ids);
    CHECK(again.train_ids == s.train_ids);

    CHECK_THROWS_AS(split_corpus(std::vector<Pmid>{}, 0.1, 1), ValidationError);
    CHECK_THROWS_AS(split_corpus(ids, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(split_corpus(ids, 1.0, 1), ValidationError);

    // Full-scale reference sizes are only arithmetically consistent; exact
    // rounding of 1% of the corpus gives 160,484 rather than 160,482.
    CHECK(160482 + 15887890 == 16048372);
    CHECK(std::llround(0.01 * 16048372.0) == 160484);
}

TEST_CASE("split_corpus partitions for random stores, fractions and seeds") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 1 + rng.index(300);
        std::vector<Pmid> ids;
        for (std::uint64_t i = 0; i < n; ++i) ids.emplace_back(1000 + i * 7);
        const double fraction = 0.01 + 0.98 * rng.unit();
        const auto s = split_corpus(ids, fraction, rng.next());
        CHECK(s.test_ids.size() == static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
        std::set<Pmid> train(s.train_ids.begin(), s.train_ids.end());
        std::set<Pmid> test(s.test_ids.begin(), s.test_ids.end());
        std::set<Pmid> all(ids.begin(), ids.end());
        std::set<Pmid> both = train;
        both.insert(test.begin(), test.end());
        CHECK(both == all);
        CHECK(train.size() + test.size() == all.size());
    }
}

TEST_CASE("store round trip, last write wins, split persistence") {
    const auto dir = temp_dir("store");
    auto docs = parse_medline_string(kRichCitations);
    docs.push_back(parse_medline_string(kSingleCitation)[0]);
    {
        StoreWriter w(dir);
        for (const auto& d : docs) w.add(d);
        Document replaced = docs.back();
        replaced.title = "T2";
        w.add(replaced);
        w.close();
        CHECK(w.duplicates() == 1);
    }
    DocumentStore store(dir);
    CHECK(store.size() == 3);
    CHECK(store.get(Pmid(1001)) == docs[0]);
    CHECK(store.get(Pmid(1002)) == docs[1]);
    CHECK(store.get(Pmid(123)).title == "T2");
    CHECK(store.ids() == std::vector<Pmid>{Pmid(1001), Pmid(1002), Pmid(123)});
    CHECK_THROWS_AS(store.get(Pmid(5)), NotFoundError);

    // Reopen for append.
    {
        StoreWriter w(dir);
        w.add(make_doc(77, "new", 1));
    }
    DocumentStore reopened(dir);
    CHECK(reopened.size() == 4);
    CHECK(reopened.get(Pmid(1001)) == docs[0]);

    const auto split = split_corpus(reopened.ids(), 0.25, 9);
    reopened.write_split(split);
    CHECK(reopened.has_split());
    const auto loaded = reopened.split();
    CHECK(loaded.test_ids == split.test_ids);
    CHECK(loaded.train_ids == split.train_ids);
    CHECK(loaded.seed == 9);
    fs::remove_all(dir);
}

TEST_CASE("ingest_files reports counts and keeps documents before a parse error") {
    const auto dir = temp_dir("ingest");
    const auto in1 = dir / "a.xml";
    const auto in2 = dir / "b.xml.gz";
    const auto in3 = dir / "c.xml";
    std::ofstream(in1) << kRichCitations;
    std::ofstream(in2, std::ios::binary) << gzip(kSingleCitation);
    const std::string rich = kRichCitations;
    std::ofstream(in3) << rich.substr(0, rich.find("<PubmedArticle>\n    <MedlineCitation>\n      <Article>"));

    for (unsigned workers : {1u, 3u}) {
        const auto store_dir = dir / ("store" + std::to_string(workers));
        const auto report = ingest_files({in1, in2, in3}, store_dir, workers);
        CHECK(report.files == 3);
        CHECK(report.parsed == 4);
        CHECK(report.skipped == 1);
        CHECK(report.eligible == 3);  // 1001 twice (a.xml and c.xml) + 123
        CHECK(report.ineligible == 1);
        CHECK(report.duplicates == 1);
        CHECK(report.stored == 2);
        CHECK(report.errors.size() == 1);
        CHECK(report.to_text().find("eligible\t3\n") != std::string::npos);
        DocumentStore store(store_dir);
        CHECK(store.ids() == std::vector<Pmid>{Pmid(123), Pmid(1001)});
    }
    fs::remove_all(dir);
}

TEST_CASE("DocumentIndex lookups") {
    DocumentIndex index({make_doc(1, "a", 1), make_doc(2, "b", 2)});
    CHECK(index.size() == 2);
    CHECK(index.at(Pmid(2)).abstract == "b");
    CHECK(index.find(Pmid(3)) == nullptr);
    CHECK_THROWS_AS(index.at(Pmid(3)), NotFoundError);
    CHECK(descriptor_labels(index.at(Pmid(2))) == std::vector<std::string>{"M0", "M1"});
}
