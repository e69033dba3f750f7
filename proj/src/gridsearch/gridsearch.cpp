#include "pubvec/gridsearch.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pubvec/embedding/model.hpp"

namespace pubvec::gridsearch {

namespace {

template <typename T>
void require_nonempty(const std::vector<T>& v, const char* name) {
    if (v.empty()) throw ValidationError(fmt::format("grid list '{}' is empty", name));
}

template <typename T>
std::vector<T> read_list(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(fmt::format("grid config misses '{}'", key));
    const auto& v = j.at(key);
    if (!v.is_array()) throw ValidationError(fmt::format("grid config '{}' must be a list", key));
    return v.get<std::vector<T>>();
}

}  // namespace

void GridSpec::validate() const {
    require_nonempty(dm, "dm");
    require_nonempty(vector_size, "vector_size");
    require_nonempty(sample, "sample");
    require_nonempty(alpha, "alpha");
    require_nonempty(window, "window");
    require_nonempty(hs, "hs");
    for (const auto& p : enumerate_grid(*this)) p.validate();
}

std::size_t GridSpec::size() const {
    return dm.size() * vector_size.size() * sample.size() * alpha.size() * window.size() * hs.size();
}

GridSpec GridSpec::parse(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("grid config: ") + e.what(), e.byte);
    }
    GridSpec spec;
    try {
        spec.dm = read_list<int>(j, "dm");
        spec.vector_size = read_list<std::uint32_t>(j, "vector_size");
        spec.sample = read_list<double>(j, "sample");
        spec.alpha = read_list<double>(j, "alpha");
        spec.window = read_list<std::uint32_t>(j, "window");
        spec.hs = read_list<int>(j, "hs");
        if (j.contains("fixed")) {
            const auto& f = j.at("fixed");
            auto& p = spec.fixed;
            p.epochs = f.value("epochs", p.epochs);
            p.negative = f.value("negative", p.negative);
            p.min_count = f.value("min_count", p.min_count);
            p.min_alpha_ratio = f.value("min_alpha_ratio", p.min_alpha_ratio);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("grid config: ") + e.what());
    }
    spec.validate();
    return spec;
}

GridSpec GridSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open grid config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::vector<HyperParams> enumerate_grid(const GridSpec& spec) {
    std::vector<HyperParams> out;
    out.reserve(spec.size());
    for (const int dm : spec.dm) {
        for (const auto vs : spec.vector_size) {
            for (const double sample : spec.sample) {
                for (const double alpha : spec.alpha) {
                    for (const auto window : spec.window) {
                        for (const int hs : spec.hs) {
                            HyperParams p = spec.fixed;
                            p.dm = embedding::architecture_from_int(dm);
                            p.vector_size = vs;
                            p.sample = sample;
                            p.alpha = alpha;
                            p.window = window;
                            p.hs = embedding::output_layer_from_int(hs);
                            out.push_back(p);
                        }
                    }
                }
            }
        }
    }
    return out;
}

AccuracyResult mesh_overlap_accuracy(NeighborProvider& provider, std::span<const Document> queries,
                                     const DocumentLookup& lookup, std::size_t k) {
    if (k == 0) throw ValidationError("k must be at least 1");
    AccuracyResult r;
    double sum = 0.0;
    for (const auto& q : queries) {
        const auto labels = descriptor_labels(q);
        if (labels.empty()) {
            ++r.skipped_queries;
            continue;
        }
        NeighborList list;
        try {
            list = provider.neighbors(q, k);
        } catch (const Error&) {
            ++r.skipped_queries;
            continue;
        }
        std::size_t used = 0;
        for (const auto& n : list.neighbors) {
            const Document* c = lookup(n.id);
            if (c == nullptr) {
                ++r.unresolved_neighbors;
                continue;
            }
            const auto theirs = descriptor_labels(*c);
            std::size_t shared = 0;
            for (const auto& l : labels) shared += std::binary_search(theirs.begin(), theirs.end(), l) ? 1 : 0;
            sum += 100.0 * static_cast<double>(shared) / static_cast<double>(labels.size());
            ++used;
        }
        if (used == 0) {
            ++r.skipped_queries;
            continue;
        }
        r.pairs += used;
        ++r.scored_queries;
    }
    r.accuracy = r.pairs ? sum / static_cast<double>(r.pairs) : 0.0;
    return r;
}

ProviderFactory embedding_provider_factory() {
    return [](const HyperParams& params, std::span<const Document> train_docs) -> NeighborProviderPtr {
        std::vector<embedding::TrainingDocument> corpus;
        corpus.reserve(train_docs.size());
        for (const auto& d : train_docs) corpus.push_back({d.pmid, normalize_document(d)});
        auto model = std::make_shared<const embedding::EmbeddingModel>(embedding::train(corpus, params));
        return std::make_shared<embedding::EmbeddingProvider>(std::move(model), std::nullopt, params.seed);
    };
}

void select_winners(GridReport& report) {
    report.best_dbow.reset();
    report.best_dm.reset();
    std::optional<std::size_t> winner;
    auto better = [&](std::size_t i, const std::optional<std::size_t>& current) {
        return !current || *report.results[i].accuracy > *report.results[*current].accuracy;
    };
    for (std::size_t i = 0; i < report.results.size(); ++i) {
        if (report.results[i].accuracy && better(i, winner)) winner = i;
    }
    if (!winner) return;
    const auto& w = report.results[*winner].params;
    const bool winner_dm = w.dm == embedding::Architecture::pv_dm;
    std::optional<std::size_t> other;
    for (std::size_t i = 0; i < report.results.size(); ++i) {
        const auto& r = report.results[i];
        if (!r.accuracy || (r.params.dm == embedding::Architecture::pv_dm) == winner_dm) continue;
        if (r.params.vector_size != w.vector_size) continue;
        if (better(i, other)) other = i;
    }
    (winner_dm ? report.best_dm : report.best_dbow) = winner;
    (winner_dm ? report.best_dbow : report.best_dm) = other;
}

GridReport run_grid_search(std::span<const Document> corpus, const GridSpec& spec, const GridOptions& options,
                           const ProviderFactory& factory) {
    spec.validate();
    if (options.sample_size < 2 || options.sample_size > corpus.size()) {
        throw ValidationError(fmt::format("sample size {} must lie in [2, {}]", options.sample_size, corpus.size()));
    }
    if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
        throw ValidationError("train fraction must lie in (0, 1)");
    }

    std::vector<Pmid> ids;
    ids.reserve(corpus.size());
    for (const auto& d : corpus) ids.push_back(d.pmid);
    std::unordered_set<Pmid> chosen;
    if (options.sample_size == corpus.size()) {
        chosen.insert(ids.begin(), ids.end());
    } else {
        const auto pick = split_corpus(ids, static_cast<double>(options.sample_size) / static_cast<double>(ids.size()),
                                       mix_seed(options.seed, 1));
        chosen.insert(pick.test_ids.begin(), pick.test_ids.end());
    }
    std::vector<Pmid> sample_ids;
    for (const auto id : ids) {
        if (chosen.contains(id)) sample_ids.push_back(id);
    }
    const auto split = split_corpus(sample_ids, 1.0 - options.train_fraction, mix_seed(options.seed, 2));
    const std::unordered_set<Pmid> test_set(split.test_ids.begin(), split.test_ids.end());

    auto index = std::make_shared<DocumentIndex>();
    std::vector<Document> train_docs, test_docs;
    for (const auto& d : corpus) {
        if (!chosen.contains(d.pmid)) continue;
        (test_set.contains(d.pmid) ? test_docs : train_docs).push_back(d);
        index->add(d);
    }
    const DocumentLookup lookup = [index](Pmid id) { return index->find(id); };

    GridReport report;
    report.sample_size = sample_ids.size();
    report.train_size = train_docs.size();
    report.test_size = test_docs.size();
    report.k = options.k;
    report.seed = options.seed;
    const auto combos = enumerate_grid(spec);
    report.results.resize(combos.size());

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < combos.size(); i = next++) {
            auto& r = report.results[i];
            r.index = i;
            r.params = combos[i];
            r.params.seed = options.seed;
            const auto start = std::chrono::steady_clock::now();
            try {
                const auto provider = factory(r.params, train_docs);
                r.detail = mesh_overlap_accuracy(*provider, test_docs, lookup, options.k);
                r.accuracy = r.detail.accuracy;
            } catch (const std::exception& e) {
                r.error = e.what();
            }
            r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(combos.size())));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> threads;
        for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work);
    }
    select_winners(report);
    return report;
}

void write_grid_tsv(const GridReport& report, std::ostream& out) {
    out << "# metric\tmesh_overlap_accuracy\n";
    out << "# metric_denominator\tquery descriptor count (descriptor labels only, exact match)\n";
    out << fmt::format("# k\t{}\n# seed\t{}\n# sample\t{}\n# train\t{}\n# test\t{}\n", report.k, report.seed,
                       report.sample_size, report.train_size, report.test_size);
    out << "index\tdm\tvector_size\tsample\talpha\twindow\ths\taccuracy\tpairs\tskipped\tseconds\tstatus\n";
    for (const auto& r : report.results) {
        const auto& p = r.params;
        out << fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3f}\t{}\n", r.index, embedding::to_int(p.dm),
                           p.vector_size, p.sample, p.alpha, p.window, embedding::to_int(p.hs),
                           r.accuracy ? fmt::format("{:.4f}", *r.accuracy) : "NA", r.detail.pairs,
                           r.detail.skipped_queries, r.seconds, r.accuracy ? "ok" : "failed: " + r.error);
    }
    auto describe = [&](const char* name, const std::optional<std::size_t>& slot) {
        if (!slot) {
            out << fmt::format("# selected_{}\tnone\n", name);
            return;
        }
        const auto& r = report.results[*slot];
        out << fmt::format("# selected_{}\tindex={} vector_size={} sample={} alpha={} window={} hs={} accuracy={:.4f}\n",
                           name, r.index, r.params.vector_size, r.params.sample, r.params.alpha, r.params.window,
                           embedding::to_int(r.params.hs), *r.accuracy);
    };
    describe("pv_dbow", report.best_dbow);
    describe("pv_dm", report.best_dm);
}

}  // namespace pubvec::gridsearch
