#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "pubvec/evalsuite.hpp"

using namespace pubvec;
using namespace pubvec::eval;
using Tokens = std::vector<std::string>;

namespace {

const textproc::StopwordList kNoStopwords;

Document abstract_doc(std::uint64_t id, std::string abstract) { return Document{Pmid(id), "", std::move(abstract), {}}; }

MeshAnnotation heading(std::string name, bool major, std::vector<std::string> quals = {}) {
    MeshAnnotation m{std::move(name), major, {}};
    for (auto& q : quals) m.qualifiers.push_back({std::move(q), false});
    return m;
}

TaskInputs inputs_for(const std::vector<Document>& docs) {
    auto index = std::make_shared<DocumentIndex>(docs);
    TaskInputs in;
    in.lookup = [index](Pmid id) { return index->find(id); };
    return in;
}

class IdentityProvider final : public NeighborProvider {
public:
    Source source() const override { return Source::pv_dbow; }
    NeighborList neighbors(const Document& q, std::size_t) override { return {q.pmid, {{q.pmid, 1.0}}, Source::pv_dbow, false}; }
};

std::vector<SeriesPoint> points_from(const std::vector<std::pair<double, double>>& xy) {
    std::vector<SeriesPoint> out;
    for (const auto& [x, y] : xy) out.push_back({x, y, Pmid(1), Pmid(2)});
    return out;
}

}  // namespace

TEST_CASE("co-occurrence counts once per document and pair") {
    const std::vector<Tokens> docs{{"a", "b", "c"}, {"a", "b", "b", "a"}};
    const auto m = CooccurrenceMatrix::build(docs, false, kNoStopwords);
    CHECK(m.count("a", "b") == 2);
    CHECK(m.count("b", "a") == 2);
    CHECK(m.count("a", "c") == 1);
    CHECK(m.count("b", "c") == 1);
    CHECK(m.count("a", "a") == 0);
    CHECK(m.count("a", "zzz") == 0);
    CHECK(m.stored_pairs() == 3);
}

TEST_CASE("co-occurrence matrix equals a brute-force double loop") {
    Rng rng(31);
    const Tokens alphabet{"ab", "cd", "ef", "gh", "ij", "kl", "mn", "op", "the", "and"};
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<Tokens> docs(2 + rng.index(9));
        for (auto& d : docs) {
            const auto len = rng.index(12);
            for (std::uint64_t i = 0; i < len; ++i) d.push_back(alphabet[rng.index(alphabet.size())]);
        }
        const auto& stop = textproc::StopwordList::english();
        const auto m = CooccurrenceMatrix::build(docs, false, stop);
        const auto m3 = CooccurrenceMatrix::build(docs, false, stop, 3);
        for (const auto& a : alphabet) {
            for (const auto& b : alphabet) {
                std::uint32_t expected = 0;
                if (a != b && !stop.contains(a) && !stop.contains(b)) {
                    for (const auto& d : docs) {
                        const bool has_a = std::find(d.begin(), d.end(), a) != d.end();
                        const bool has_b = std::find(d.begin(), d.end(), b) != d.end();
                        expected += has_a && has_b ? 1 : 0;
                    }
                }
                CHECK(m.count(a, b) == expected);
                CHECK(m.count(a, b) == m.count(b, a));
                CHECK(m3.count(a, b) == expected);
            }
        }
    }
}

TEST_CASE("stemmed co-occurrence merges inflections after stopword removal") {
    const std::vector<Tokens> docs{{"running", "runs", "cells", "the"}, {"run", "cell"}};
    const auto m = CooccurrenceMatrix::build(docs, true, textproc::StopwordList::english());
    CHECK(m.stemmed());
    CHECK(m.count("run", "cell") == 2);
    CHECK(m.vocabulary_size() == 2);
    CHECK(m.prepare(Tokens{"the", "running", "runs"}) == Tokens{"run"});
}

TEST_CASE("co-occurrence score examples") {
    const std::vector<Tokens> twice{{"a", "b", "x", "y"}, {"a", "b", "x", "y"}};
    const auto m2 = CooccurrenceMatrix::build(twice, false, kNoStopwords);
    CHECK(cooccurrence_score(Tokens{"a", "b"}, Tokens{"x", "y"}, m2, 500, 1) == 2.0);

    const std::vector<Tokens> apart{{"a", "b"}, {"x", "y"}};
    const auto m0 = CooccurrenceMatrix::build(apart, false, kNoStopwords);
    CHECK(cooccurrence_score(Tokens{"a", "b"}, Tokens{"x", "y"}, m0, 500, 1) == 0.0);

    // 3 x 3 pairs, hand-summed counts.
    const std::vector<Tokens> docs{{"a", "x", "y"}, {"a", "x"}, {"b", "z"}, {"c", "x", "z", "b"}};
    const auto m = CooccurrenceMatrix::build(docs, false, kNoStopwords);
    // (a,x)=2 (a,y)=1 (a,z)=0 (b,x)=1 (b,y)=0 (b,z)=2 (c,x)=1 (c,y)=0 (c,z)=1
    CHECK(cooccurrence_score(Tokens{"a", "b", "c", "a"}, Tokens{"x", "y", "z"}, m, 20, 1) ==
          doctest::Approx(8.0 / 9.0).epsilon(1e-15));

    CHECK_THROWS_AS(cooccurrence_score(Tokens{"the"}, Tokens{"x"}, CooccurrenceMatrix::build(docs, false,
                                                                                               textproc::StopwordList::english()),
                                       5, 1),
                    ValidationError);
    CHECK_THROWS_AS(cooccurrence_score(Tokens{"a"}, Tokens{"a"}, m, 5, 1), ValidationError);
}

TEST_CASE("co-occurrence sampling draws distinct pairs and is seeded") {
    std::vector<Tokens> docs;
    Tokens left, right;
    for (int i = 0; i < 30; ++i) {
        left.push_back("l" + std::to_string(i));
        right.push_back("r" + std::to_string(i));
    }
    Rng rng(2);
    for (int d = 0; d < 50; ++d) {
        Tokens doc;
        for (int i = 0; i < 8; ++i) {
            doc.push_back(left[rng.index(30)]);
            doc.push_back(right[rng.index(30)]);
        }
        docs.push_back(doc);
    }
    const auto m = CooccurrenceMatrix::build(docs, false, kNoStopwords);
    const double a = cooccurrence_score(left, right, m, 500, 77);
    CHECK(a == cooccurrence_score(left, right, m, 500, 77));
    // All 900 pairs once equals the exhaustive mean.
    double total = 0.0;
    for (const auto& l : left) {
        for (const auto& r : right) total += m.count(l, r);
    }
    CHECK(cooccurrence_score(left, right, m, 900, 5) == doctest::Approx(total / 900.0).epsilon(1e-14));
    CHECK(cooccurrence_score(left, right, m, 5000, 5) == doctest::Approx(total / 900.0).epsilon(1e-14));
}

TEST_CASE("mesh similarity rule examples") {
    const Document d{Pmid(1), "", "", {heading("A", true, {"q1", "q2"}), heading("B", false)}};
    const Document c{Pmid(2), "", "", {heading("A", false, {"q1"}), heading("Z", false)}};
    CHECK(mesh_similarity_score(d, c) == 5);
    const Document disjoint{Pmid(3), "", "", {heading("X", true, {"q1"})}};
    CHECK(mesh_similarity_score(d, disjoint) == 0);
    const Document plain{Pmid(4), "", "", {heading("P", false), heading("Q", false)}};
    CHECK(mesh_similarity_score(plain, plain) == 2);
    // Major flag counts on the query side only.
    CHECK(mesh_similarity_score(c, d) == 2);
    // Qualifiers count only under the shared descriptor.
    const Document other_context{Pmid(5), "", "", {heading("A", false), heading("B", false, {"q1", "q2"})}};
    CHECK(mesh_similarity_score(d, other_context) == 5);
}

TEST_CASE("mesh similarity properties on random annotations") {
    Rng rng(8);
    const Tokens names{"A", "B", "C", "D", "E", "F"};
    const Tokens quals{"q1", "q2", "q3"};
    auto random_doc = [&](std::uint64_t id) {
        Document d{Pmid(id), "", "", {}};
        std::set<std::string> used;
        const auto n = 1 + rng.index(4);
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto& name = names[rng.index(names.size())];
            if (!used.insert(name).second) continue;
            std::vector<std::string> qs;
            for (const auto& q : quals) {
                if (rng.unit() < 0.3) qs.push_back(q);
            }
            d.mesh.push_back(heading(name, rng.unit() < 0.3, qs));
        }
        return d;
    };
    for (int i = 0; i < 500; ++i) {
        const auto a = random_doc(1);
        const auto b = random_doc(2);
        const int s = mesh_similarity_score(a, b);
        CHECK(s >= 0);
        const auto la = descriptor_labels(a);
        const auto lb = descriptor_labels(b);
        std::vector<std::string> common;
        std::set_intersection(la.begin(), la.end(), lb.begin(), lb.end(), std::back_inserter(common));
        CHECK((s == 0) == common.empty());
        CHECK(mesh_similarity_score(a, a) >= static_cast<int>(la.size()));
    }
}

TEST_CASE("length task with a self-returning provider gives x = 0") {
    const std::vector<Document> docs{abstract_doc(1, "heart failure"), abstract_doc(2, "kidney stones in the elderly")};
    IdentityProvider provider;
    TaskParams params = default_task_params(TaskKind::length);
    const auto series = run_task(TaskKind::length, provider, docs, inputs_for(docs), params);
    REQUIRE(series.points.size() == 2);
    for (const auto& p : series.points) CHECK(p.x == 0.0);
}

TEST_CASE("mesh task with identically indexed neighbours gives x = 2") {
    std::vector<Document> docs;
    for (std::uint64_t id = 1; id <= 7; ++id) {
        docs.push_back(Document{Pmid(id), "t", "a", {heading("P", false), heading("Q", false)}});
    }
    std::unordered_map<Pmid, std::vector<Neighbor>> lists;
    for (std::uint64_t id = 1; id <= 7; ++id) {
        for (std::uint64_t other = 1; other <= 7; ++other) {
            if (other != id) lists[Pmid(id)].push_back({Pmid(other), 0.5});
        }
    }
    ScriptedProvider provider(Source::pv_dm, lists);
    const auto params = default_task_params(TaskKind::mesh);
    CHECK(params.k == 5);
    const auto series = run_task(TaskKind::mesh, provider, docs, inputs_for(docs), params);
    REQUIRE(series.points.size() == 7);
    for (const auto& p : series.points) {
        CHECK(p.x == 2.0);
        CHECK(p.y == 0.5);
        CHECK_FALSE(p.neighbor.valid());
    }
}

TEST_CASE("length task on a scripted pmra fixture matches hand assembly") {
    const std::vector<Document> docs{
        abstract_doc(1, "heart failure"),       // 12
        abstract_doc(2, "the heart"),           // 5
        abstract_doc(3, "kidney"),              // 6
        abstract_doc(4, "of a liver disease"),  // 12
        abstract_doc(5, "lung"),                // 4
    };
    ScriptedProvider provider(Source::pmra, {
                                                {Pmid(1), {{Pmid(2), 30e6}}},
                                                {Pmid(2), {}},
                                                {Pmid(3), {{Pmid(4), 50e6}}},
                                                {Pmid(4), {{Pmid(99), 40e6}}},
                                                {Pmid(5), {{Pmid(1), 20e6}, {Pmid(3), 19e6}}},
                                            });
    auto params = default_task_params(TaskKind::length);
    params.seed = 4;
    const auto series = run_task(TaskKind::length, provider, docs, inputs_for(docs), params);
    const std::vector<SeriesPoint> expected{
        {7.0, 10.0 / 30.0, Pmid(1), Pmid(2)},
        {6.0, 1.0, Pmid(3), Pmid(4)},
        {8.0, 0.0, Pmid(5), Pmid(1)},
    };
    REQUIRE(series.points.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(series.points[i].x == expected[i].x);
        CHECK(series.points[i].y == doctest::Approx(expected[i].y).epsilon(1e-15));
        CHECK(series.points[i].query == expected[i].query);
        CHECK(series.points[i].neighbor == expected[i].neighbor);
    }
    CHECK(series.failed_queries == 1);
    CHECK(series.skipped_neighbors == 1);
    REQUIRE(series.normalizer);
    CHECK(series.normalizer->min() == 20e6);
    CHECK(series.normalizer->max() == 50e6);

    // A supplied normalizer wins over fitting.
    auto fixed = inputs_for(docs);
    fixed.normalizer = pmra::ScoreNormalizer(18e6, 75e6);
    const auto global = run_task(TaskKind::length, provider, docs, fixed, params);
    CHECK(global.points[0].y == doctest::Approx(12.0 / 57.0));
}

TEST_CASE("word and stem tasks need the right matrix") {
    const std::vector<Document> docs{abstract_doc(1, "cells running fast"), abstract_doc(2, "cell runs slowly")};
    ScriptedProvider provider(Source::pv_dbow, {{Pmid(1), {{Pmid(2), 0.9}}}, {Pmid(2), {{Pmid(1), 0.9}}}});
    std::vector<Tokens> tokens;
    for (const auto& d : docs) tokens.push_back(normalize_document(d));
    const auto words = CooccurrenceMatrix::build(tokens, false, textproc::StopwordList::english());
    const auto stems = CooccurrenceMatrix::build(tokens, true, textproc::StopwordList::english());
    auto in = inputs_for(docs);
    CHECK_THROWS_AS(run_task(TaskKind::words, provider, docs, in, default_task_params(TaskKind::words)), ValidationError);
    in.words = &stems;
    CHECK_THROWS_AS(run_task(TaskKind::words, provider, docs, in, default_task_params(TaskKind::words)), ValidationError);
    in.words = &words;
    in.stems = &stems;
    const auto w = run_task(TaskKind::words, provider, docs, in, default_task_params(TaskKind::words));
    const auto s = run_task(TaskKind::stems, provider, docs, in, default_task_params(TaskKind::stems));
    REQUIRE(w.points.size() == 2);
    REQUIRE(s.points.size() == 2);
    // Stemming makes "cell"/"run" shared types, which are not paired with themselves.
    CHECK(s.points[0].x >= 0.0);
    CHECK(w.points[0].x == 0.0);
}

TEST_CASE("trend slope examples") {
    const auto line = trend_slope(points_from({{0, 0}, {1, 2}, {2, 4}}));
    CHECK(line.slope == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(line.intercept == doctest::Approx(0.0));
    CHECK(trend_slope(points_from({{0, 3}, {1, 3}, {5, 3}})).slope == 0.0);
    CHECK_THROWS_AS(trend_slope(points_from({{1, 0}, {1, 2}})), ValidationError);
    CHECK_THROWS_AS(trend_slope(points_from({{1, 0}})), ValidationError);
}

TEST_CASE("trend slope matches the closed-form sums and ignores y shifts") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<double, double>> xy;
        for (int i = 0; i < 100; ++i) xy.emplace_back(rng.uniform(-50, 50), rng.uniform(-1, 1) + 0.01 * i);
        long double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto& [x, y] : xy) {
            sx += x;
            sy += y;
            sxx += static_cast<long double>(x) * x;
            sxy += static_cast<long double>(x) * y;
        }
        const long double n = 100;
        const long double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        const long double intercept = (sy - slope * sx) / n;
        const auto t = trend_slope(points_from(xy));
        CHECK(std::abs(t.slope - static_cast<double>(slope)) <= 1e-12 * std::abs(static_cast<double>(slope)));
        CHECK(std::abs(t.intercept - static_cast<double>(intercept)) <= 1e-12 * std::abs(static_cast<double>(intercept)));

        auto shifted = xy;
        for (auto& p : shifted) p.second += 7.5;
        const auto ts = trend_slope(points_from(shifted));
        CHECK(ts.slope == doctest::Approx(t.slope).epsilon(1e-12));
        CHECK(ts.intercept == doctest::Approx(t.intercept + 7.5).epsilon(1e-12));
    }
}

TEST_CASE("z-score filter removes exactly the lone outlier") {
    std::vector<std::pair<double, double>> xy(99, {0.0, 0.0});
    xy.emplace_back(1000.0, 0.0);
    const auto kept = zscore_filter(points_from(xy), 3.0);
    CHECK(kept.size() == 99);
    CHECK(std::all_of(kept.begin(), kept.end(), [](const SeriesPoint& p) { return p.x == 0.0; }));

    const auto same = points_from({{1, 1}, {1, 1}, {1, 1}});
    CHECK(zscore_filter(same).size() == 3);
    const auto tight = points_from({{1, 5}, {2, 6}, {3, 7}, {2, 6}});
    CHECK(zscore_filter(tight).size() == 4);
}

TEST_CASE("z-score filter output is a subset") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<double, double>> xy;
        for (int i = 0; i < 60; ++i) {
            const double heavy = rng.unit() < 0.05 ? 40.0 : 1.0;
            xy.emplace_back(heavy * rng.uniform(-1, 1), rng.uniform(-1, 1));
        }
        const auto pts = points_from(xy);
        const auto once = zscore_filter(pts);
        CHECK(once.size() <= pts.size());
        for (const auto& p : once) CHECK(std::find(pts.begin(), pts.end(), p) != pts.end());
        const auto twice = zscore_filter(once);
        CHECK(twice.size() <= once.size());
    }
}

TEST_CASE("series TSV is deterministic and carries metadata") {
    TaskSeries s;
    s.kind = TaskKind::stems;
    s.source = Source::pmra;
    s.params = default_task_params(TaskKind::stems);
    s.normalizer = pmra::ScoreNormalizer(18e6, 75e6);
    s.points = points_from({{0.1, 0.2}, {0.3, 0.5}, {1.0 / 3.0, 0.7}});
    std::ostringstream a, b, summary;
    write_series_tsv(s, a);
    write_series_tsv(s, b);
    CHECK(a.str() == b.str());
    const auto text = a.str();
    CHECK(text.find("# task\tstems\n") != std::string::npos);
    CHECK(text.find("# provider\tpmra\n") != std::string::npos);
    CHECK(text.find("# filter_threshold\t3\n") != std::string::npos);
    CHECK(text.find("min 18000000 max 75000000") != std::string::npos);
    CHECK(text.find("1\t2\t0.3333333333333333\t0.7\n") != std::string::npos);
    write_summary(s, summary);
    CHECK(summary.str().find("slope_all\t") != std::string::npos);
    CHECK(summary.str().find("slope_filtered\t") != std::string::npos);
    CHECK(parse_task("mesh") == TaskKind::mesh);
    CHECK_THROWS_AS(parse_task("nope"), ValidationError);
}
