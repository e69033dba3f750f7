#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "pubvec/embedding/model.hpp"
#include "pubvec/embedding/objective.hpp"
#include "pubvec/synth.hpp"

using namespace pubvec;
using namespace pubvec::embedding;
namespace fs = std::filesystem;

namespace {

std::vector<TrainingDocument> synthetic_training_set(std::size_t n, std::uint64_t seed) {
    synth::SynthConfig cfg;
    cfg.documents = n;
    cfg.topics = 8;
    cfg.words_per_topic = 40;
    cfg.background_words = 100;
    cfg.min_abstract_tokens = 40;
    cfg.max_abstract_tokens = 80;
    cfg.seed = seed;
    const auto corpus = synth::generate_corpus(cfg);
    std::vector<TrainingDocument> out;
    for (const auto& d : corpus.documents) out.push_back({d.pmid, normalize_document(d)});
    return out;
}

HyperParams small_params(Architecture dm, OutputLayer hs) {
    HyperParams p;
    p.dm = dm;
    p.hs = hs;
    p.vector_size = 16;
    p.window = 3;
    p.alpha = 0.05;
    p.sample = 1e-3;
    p.epochs = 5;
    p.min_count = 2;
    p.seed = 11;
    return p;
}

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("pubvec_emb_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Records dLoss/dparam for every row the step touches instead of updating.
struct GradientSink {
    std::map<std::uint32_t, std::vector<double>> outputs;
    std::map<const double*, std::vector<double>> inputs;

    void output(std::uint32_t row, double*, double coeff, const double* hidden, std::size_t d) {
        auto& g = outputs[row];
        g.resize(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) g[i] -= coeff * hidden[i];
    }
    void input(std::size_t, double* v, const double* err, double scale, std::size_t d) {
        auto& g = inputs[v];
        g.resize(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) g[i] -= scale * err[i];
    }
};

// Direct evaluation of the negative log-likelihood of one step.
long double naive_loss(const std::vector<double*>& inputs, const std::vector<OutputTarget>& targets,
                       const std::vector<double>& out, std::size_t d) {
    std::vector<long double> h(d, 0.0L);
    for (const double* v : inputs) {
        for (std::size_t i = 0; i < d; ++i) h[i] += v[i];
    }
    for (auto& x : h) x /= static_cast<long double>(inputs.size());
    long double loss = 0.0L;
    for (const auto& t : targets) {
        long double f = 0.0L;
        for (std::size_t i = 0; i < d; ++i) f += h[i] * out[t.row * d + i];
        const long double z = t.label ? -f : f;
        loss += std::log1p(std::exp(z));
    }
    return loss;
}

// Minimum weighted code length over every full binary tree with these
// leaves: try every split of every leaf subset into two non-empty halves.
std::uint64_t brute_force_optimal_cost(const std::vector<std::pair<std::string, std::uint64_t>>& counts) {
    const std::size_t n = counts.size();
    const std::size_t full = (std::size_t{1} << n) - 1;
    std::vector<std::uint64_t> weight(full + 1, 0), best(full + 1, 0);
    for (std::size_t set = 1; set <= full; ++set) {
        for (std::size_t i = 0; i < n; ++i) {
            if (set >> i & 1) weight[set] += counts[i].second;
        }
        if ((set & (set - 1)) == 0) continue;  // single leaf costs nothing
        std::uint64_t b = UINT64_MAX;
        for (std::size_t left = (set - 1) & set; left > 0; left = (left - 1) & set) {
            b = std::min(b, best[left] + best[set ^ left]);
        }
        best[set] = b + weight[set];
    }
    return best[full];
}

}  // namespace

TEST_CASE("hyperparameter validation") {
    HyperParams p;
    CHECK_NOTHROW(p.validate());
    auto bad = p;
    bad.vector_size = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = p;
    bad.alpha = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = p;
    bad.sample = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = p;
    bad.window = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK_THROWS_AS(architecture_from_int(2), ValidationError);
    CHECK_THROWS_AS(output_layer_from_int(-1), ValidationError);
    CHECK(architecture_from_int(1) == Architecture::pv_dm);
    CHECK(output_layer_from_int(1) == OutputLayer::hierarchical_softmax);
}

TEST_CASE("vocabulary ordering and min_count") {
    const std::vector<std::vector<std::string>> corpus{{"b", "a", "c", "a"}, {"b", "d", "a"}};
    const auto v = Vocabulary::build(corpus, 2, OutputLayer::negative_sampling);
    REQUIRE(v.size() == 2);
    CHECK(v.word(0).word == "a");
    CHECK(v.word(1).word == "b");
    CHECK(v.total_count() == 5);
    CHECK_FALSE(v.index_of("c").has_value());
    CHECK(v.to_indices(std::vector<std::string>{"c", "b", "zz", "a"}) == std::vector<std::uint32_t>{1, 0});
    CHECK_THROWS_AS(Vocabulary::build(corpus, 10, OutputLayer::negative_sampling), ValidationError);
}

TEST_CASE("huffman codes on a worked example") {
    const auto v = Vocabulary::from_counts({{"a", 4}, {"b", 2}, {"c", 1}, {"d", 1}}, 1, OutputLayer::hierarchical_softmax);
    CHECK(v.word(0).code.size() == 1);
    CHECK(v.word(1).code.size() == 2);
    CHECK(v.word(2).code.size() == 3);
    CHECK(v.word(3).code.size() == 3);
    for (const auto& w : v.words()) CHECK(w.point.front() == 2);  // root is the last inner node
    CHECK(v.output_rows() == 3);
}

TEST_CASE("huffman tree is optimal against exhaustive search, prefix-free and consistently numbered") {
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.index(7);
        std::vector<std::pair<std::string, std::uint64_t>> counts;
        for (std::size_t i = 0; i < n; ++i) counts.emplace_back("w" + std::to_string(i), 1 + rng.index(20));
        const auto v = Vocabulary::from_counts(counts, 1, OutputLayer::hierarchical_softmax);

        const std::uint64_t optimal = brute_force_optimal_cost(counts);
        std::uint64_t cost = 0;
        double kraft = 0.0;
        std::map<std::string, std::uint32_t> prefix_node;
        for (const auto& w : v.words()) {
            cost += w.count * w.code.size();
            kraft += std::ldexp(1.0, -static_cast<int>(w.code.size()));
            REQUIRE(w.code.size() == w.point.size());
            std::string prefix;
            for (std::size_t i = 0; i < w.code.size(); ++i) {
                const auto [it, inserted] = prefix_node.emplace(prefix, w.point[i]);
                CHECK(it->second == w.point[i]);
                prefix.push_back(static_cast<char>('0' + w.code[i]));
            }
        }
        CHECK(cost == optimal);
        CHECK(kraft == doctest::Approx(1.0));
        CHECK(prefix_node.size() == n - 1);
        std::set<std::uint32_t> nodes;
        for (const auto& [p, node] : prefix_node) nodes.insert(node);
        CHECK(nodes.size() == n - 1);
        CHECK(*nodes.rbegin() == n - 2);
        CHECK(prefix_node.at("") == n - 2);
    }
}

TEST_CASE("noise distribution follows unigram^0.75") {
    const auto v = Vocabulary::from_counts({{"a", 100}, {"b", 40}, {"c", 10}, {"d", 5}, {"e", 1}}, 1,
                                           OutputLayer::negative_sampling);
    CHECK(v.noise_cdf().back() == 1.0);
    std::vector<double> expected;
    double z = 0.0;
    for (const auto& w : v.words()) {
        expected.push_back(std::pow(static_cast<double>(w.count), 0.75));
        z += expected.back();
    }
    Rng rng(99);
    const int draws = 1000000;
    std::vector<int> seen(v.size(), 0);
    for (int i = 0; i < draws; ++i) ++seen[v.sample_noise(rng)];
    double chi2 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double e = draws * expected[i] / z;
        chi2 += (seen[i] - e) * (seen[i] - e) / e;
    }
    CHECK(chi2 < 18.47);  // chi-square, 4 dof, p = 0.001
}

TEST_CASE("subsampling keep probability") {
    CHECK(subsample_keep_prob(0.5, 0.0) == 1.0);
    CHECK(subsample_keep_prob(1e-4, 1e-4) == 1.0);
    CHECK(subsample_keep_prob(1e-2, 1e-4) == doctest::Approx((std::sqrt(100.0) + 1.0) / 100.0));
    CHECK(subsample_keep_prob(1e-6, 1e-4) == 1.0);
    double previous = 1.0;
    for (double f = 1e-4; f < 1.0; f *= 1.7) {
        const double p = subsample_keep_prob(f, 1e-4);
        CHECK(p <= previous);
        previous = p;
    }
}

TEST_CASE("window_step gradients match central finite differences") {
    Rng rng(2024);
    int configs = 0;
    double worst = 0.0;
    for (const auto dm : {Architecture::pv_dbow, Architecture::pv_dm}) {
        for (const auto hs : {OutputLayer::negative_sampling, OutputLayer::hierarchical_softmax}) {
            for (int trial = 0; trial < 30; ++trial) {
                const std::size_t d = 2 + rng.index(12);
                const std::size_t n = 2 + rng.index(25);
                std::vector<std::pair<std::string, std::uint64_t>> counts;
                for (std::size_t i = 0; i < n; ++i) counts.emplace_back("w" + std::to_string(i), 1 + rng.index(50));
                const auto vocab = Vocabulary::from_counts(counts, 1, hs);

                std::vector<double> words(vocab.size() * d), doc(d), out(vocab.output_rows() * d);
                for (auto* m : {&words, &doc, &out}) {
                    for (auto& x : *m) x = rng.uniform(-0.8, 0.8);
                }
                std::vector<OutputTarget> targets;
                const auto word = static_cast<std::uint32_t>(rng.index(vocab.size()));
                append_targets(vocab, word, static_cast<std::uint32_t>(1 + rng.index(8)), rng, targets);
                std::vector<double*> inputs{doc.data()};
                if (dm == Architecture::pv_dm) {
                    const std::size_t ctx = 1 + rng.index(6);  // repeats allowed
                    for (std::size_t i = 0; i < ctx; ++i) inputs.push_back(words.data() + rng.index(vocab.size()) * d);
                }

                GradientSink sink;
                std::vector<double> hidden, err;
                const MatrixView<double> view{out.data(), vocab.output_rows(), d};
                const double loss = window_step<double>(inputs, targets, view, sink, hidden, err);
                CHECK(loss == doctest::Approx(static_cast<double>(naive_loss(inputs, targets, out, d))).epsilon(1e-9));

                std::vector<double> analytic, numeric;
                const double h = 1e-6;
                auto probe = [&](double* p, double g) {
                    const double saved = *p;
                    *p = saved + h;
                    const long double up = naive_loss(inputs, targets, out, d);
                    *p = saved - h;
                    const long double down = naive_loss(inputs, targets, out, d);
                    *p = saved;
                    analytic.push_back(g);
                    numeric.push_back(static_cast<double>((up - down) / (2.0L * h)));
                };
                for (const auto& [row, g] : sink.outputs) {
                    for (std::size_t i = 0; i < d; ++i) probe(out.data() + row * d + i, g[i]);
                }
                for (const auto& [ptr, g] : sink.inputs) {
                    for (std::size_t i = 0; i < d; ++i) probe(const_cast<double*>(ptr) + i, g[i]);
                }
                double diff = 0.0, na = 0.0, nn = 0.0;
                for (std::size_t i = 0; i < analytic.size(); ++i) {
                    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
                    na += analytic[i] * analytic[i];
                    nn += numeric[i] * numeric[i];
                }
                const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
                worst = std::max(worst, rel);
                CHECK(rel < 1e-4);
                ++configs;
            }
        }
    }
    CHECK(configs >= 100);
    MESSAGE("worst relative gradient error " << worst);
}

TEST_CASE("sgd sink freezes the matrices it is told to") {
    const auto vocab = Vocabulary::from_counts({{"a", 3}, {"b", 2}, {"c", 1}}, 1, OutputLayer::negative_sampling);
    std::vector<float> words(3 * 4, 0.1f), doc(4, 0.2f), out(3 * 4, 0.3f);
    const auto words0 = words, doc0 = doc, out0 = out;
    std::vector<OutputTarget> targets{{0, 1}, {2, 0}};
    std::vector<float*> inputs{doc.data(), words.data() + 4};
    SgdSink<float> sink;
    sink.lr = 0.1f;
    sink.learn_words = false;
    sink.learn_outputs = false;
    std::vector<float> hidden, err;
    window_step<float>(inputs, targets, MatrixView<float>{out.data(), 3, 4}, sink, hidden, err);
    CHECK(words == words0);
    CHECK(out == out0);
    CHECK(doc != doc0);
}

TEST_CASE("training reduces loss and is deterministic for one worker") {
    const auto corpus = synthetic_training_set(300, 3);
    for (const auto dm : {Architecture::pv_dbow, Architecture::pv_dm}) {
        for (const auto hs : {OutputLayer::negative_sampling, OutputLayer::hierarchical_softmax}) {
            const auto p = small_params(dm, hs);
            const auto a = train(corpus, p);
            const auto& loss = a.report().epoch_mean_loss;
            REQUIRE(loss.size() == p.epochs);
            CHECK(loss.back() < loss.front());
            const auto b = train(corpus, p);
            CHECK(a.document_matrix() == b.document_matrix());
            CHECK(a.word_matrix() == b.word_matrix());
            CHECK(a.output_matrix() == b.output_matrix());
            auto other = p;
            other.seed = 12;
            CHECK(train(corpus, other).document_matrix() != a.document_matrix());
        }
    }
}

TEST_CASE("training rejects bad input") {
    auto p = small_params(Architecture::pv_dbow, OutputLayer::negative_sampling);
    CHECK_THROWS_AS(train(std::vector<TrainingDocument>{}, p), ValidationError);
    std::vector<TrainingDocument> dup{{Pmid(1), {"a", "a"}}, {Pmid(1), {"a", "a"}}};
    CHECK_THROWS_AS(train(dup, p), ValidationError);
    p.vector_size = 0;
    CHECK_THROWS_AS(train(synthetic_training_set(20, 1), p), ValidationError);
}

TEST_CASE("multi-worker training produces finite vectors") {
    const auto corpus = synthetic_training_set(200, 4);
    TrainOptions opts;
    opts.workers = 3;
    std::vector<std::uint32_t> epochs_seen;
    opts.on_epoch = [&](std::uint32_t e, double) { epochs_seen.push_back(e); };
    const auto m = train(corpus, small_params(Architecture::pv_dm, OutputLayer::negative_sampling), opts);
    CHECK(epochs_seen == std::vector<std::uint32_t>{0, 1, 2, 3, 4});
    CHECK(std::all_of(m.document_matrix().begin(), m.document_matrix().end(), [](float x) { return std::isfinite(x); }));
}

TEST_CASE("cosine similarity") {
    const std::vector<float> a{1, 0}, b{0, 2}, c{3, 0}, z{0, 0}, three{1, 2, 3};
    CHECK(cosine_similarity(a, b) == 0.0);
    CHECK(cosine_similarity(a, c) == doctest::Approx(1.0));
    CHECK(cosine_similarity(a, std::vector<float>{-1, 0}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine_similarity(a, z), ValidationError);
    CHECK_THROWS_AS(cosine_similarity(a, three), ValidationError);
}

TEST_CASE("top-k agrees with a brute-force ranking") {
    const auto corpus = synthetic_training_set(150, 8);
    const auto model = train(corpus, small_params(Architecture::pv_dbow, OutputLayer::negative_sampling));
    Rng rng(3);
    for (int q = 0; q < 25; ++q) {
        const auto row = rng.index(model.document_count());
        const auto query = model.document_vector(row);
        const std::unordered_set<Pmid> exclude{model.document_id(row)};
        const auto got = top_k_neighbors(model, query, 10, exclude);

        std::vector<std::pair<long double, std::size_t>> all;
        for (std::size_t r = 0; r < model.document_count(); ++r) {
            if (r == row) continue;
            long double dot = 0, qq = 0, vv = 0;
            const auto v = model.document_vector(r);
            for (std::size_t i = 0; i < v.size(); ++i) {
                dot += static_cast<long double>(query[i]) * v[i];
                qq += static_cast<long double>(query[i]) * query[i];
                vv += static_cast<long double>(v[i]) * v[i];
            }
            all.emplace_back(dot / std::sqrt(qq * vv), r);
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        REQUIRE(got.neighbors.size() == 10);
        CHECK_FALSE(got.short_list);
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(got.neighbors[i].id == model.document_id(all[i].second));
            CHECK(got.neighbors[i].score == doctest::Approx(static_cast<double>(all[i].first)).epsilon(1e-9));
        }
    }
    const auto all = top_k_neighbors(model, model.document_vector(0), 1000);
    CHECK(all.short_list);
    CHECK(all.neighbors.size() == model.document_count());
    CHECK(all.neighbors.front().id == model.document_id(0));
}

TEST_CASE("inferred vectors retrieve their own training document") {
    const auto corpus = synthetic_training_set(200, 21);
    auto p = small_params(Architecture::pv_dbow, OutputLayer::negative_sampling);
    p.vector_size = 32;
    p.epochs = 20;
    p.alpha = 0.025;
    p.sample = 0.0;  // a corpus this small makes every word look frequent
    const auto model = train(corpus, p);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < 50; ++i) {
        const auto vec = infer_vector(model, corpus[i].tokens, std::nullopt, 5);
        const auto top = top_k_neighbors(model, vec, 10);
        if (std::any_of(top.neighbors.begin(), top.neighbors.end(),
                        [&](const Neighbor& n) { return n.id == corpus[i].id; })) {
            ++hits;
        }
    }
    CHECK(hits >= 40);

    const auto again = infer_vector(model, corpus[0].tokens, std::nullopt, 5);
    CHECK(again == infer_vector(model, corpus[0].tokens, std::nullopt, 5));
    CHECK_THROWS_AS(infer_vector(model, std::vector<std::string>{"unknownword"}), ValidationError);
}

TEST_CASE("model file round trip") {
    const auto dir = temp_dir("io");
    const auto corpus = synthetic_training_set(120, 9);
    for (const auto hs : {OutputLayer::negative_sampling, OutputLayer::hierarchical_softmax}) {
        const auto model = train(corpus, small_params(Architecture::pv_dm, hs));
        const auto path = dir / "m.bin";
        save_model(model, path);
        const auto back = load_model(path);
        CHECK(back.params() == model.params());
        CHECK(back.vocabulary() == model.vocabulary());
        CHECK(back.document_ids() == model.document_ids());
        CHECK(back.word_matrix() == model.word_matrix());
        CHECK(back.document_matrix() == model.document_matrix());
        CHECK(back.output_matrix() == model.output_matrix());
        CHECK(back.report().epoch_mean_loss == model.report().epoch_mean_loss);
        CHECK(infer_vector(back, corpus[0].tokens, 3, 1) == infer_vector(model, corpus[0].tokens, 3, 1));

        // Truncation and garbage are parse errors.
        const auto size = fs::file_size(path);
        fs::resize_file(path, size - 7);
        CHECK_THROWS_AS(load_model(path), ParseError);
        std::ofstream(path, std::ios::trunc) << "not a model";
        CHECK_THROWS_AS(load_model(path), ParseError);
    }
    CHECK_THROWS_AS(load_model(dir / "missing.bin"), NotFoundError);
    fs::remove_all(dir);
}

TEST_CASE("embedding provider excludes the query and infers unseen documents") {
    const auto corpus = synthetic_training_set(150, 10);
    auto model = std::make_shared<const EmbeddingModel>(
        train(corpus, small_params(Architecture::pv_dm, OutputLayer::hierarchical_softmax)));
    EmbeddingProvider provider(model, 10, 3);
    CHECK(provider.source() == Source::pv_dm);

    Document seen{corpus[4].id, "", "", {}};
    const auto list = provider.neighbors(seen, 5);
    CHECK(list.query_id == corpus[4].id);
    CHECK(list.neighbors.size() == 5);
    for (const auto& n : list.neighbors) CHECK(n.id != corpus[4].id);
    for (std::size_t i = 1; i < list.neighbors.size(); ++i) {
        CHECK(list.neighbors[i - 1].score >= list.neighbors[i].score);
    }

    std::string text;
    for (const auto& t : corpus[7].tokens) text += t + " ";
    Document unseen{Pmid(999999999), "", text, {}};
    const auto inferred = provider.neighbors(unseen, 5);
    CHECK(inferred.neighbors.size() == 5);
    CHECK(provider.neighbors_of_text(text, 3).neighbors.size() == 3);
}
