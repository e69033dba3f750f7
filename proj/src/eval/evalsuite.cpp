#include "pubvec/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

#include <fmt/format.h>

namespace pubvec::eval {

std::uint64_t CooccurrenceMatrix::key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

std::vector<std::string> CooccurrenceMatrix::prepare(std::span<const std::string> tokens) const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (stopwords_.contains(t)) continue;
        out.push_back(stemmed_ ? textproc::porter_stem(t) : t);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

CooccurrenceMatrix CooccurrenceMatrix::build(std::span<const std::vector<std::string>> docs, bool stemmed,
                                             const textproc::StopwordList& stopwords, unsigned workers) {
    CooccurrenceMatrix m;
    m.stemmed_ = stemmed;
    m.stopwords_ = stopwords;

    std::vector<std::vector<std::uint32_t>> id_docs;
    id_docs.reserve(docs.size());
    for (const auto& doc : docs) {
        std::vector<std::uint32_t> ids;
        for (auto& type : m.prepare(doc)) {
            const auto next = static_cast<std::uint32_t>(m.ids_.size());
            ids.push_back(m.ids_.try_emplace(std::move(type), next).first->second);
        }
        std::sort(ids.begin(), ids.end());
        id_docs.push_back(std::move(ids));
    }

    auto count_range = [&](std::size_t begin, std::size_t end, std::unordered_map<std::uint64_t, std::uint32_t>& out) {
        for (std::size_t d = begin; d < end; ++d) {
            const auto& ids = id_docs[d];
            for (std::size_t i = 0; i < ids.size(); ++i) {
                for (std::size_t j = i + 1; j < ids.size(); ++j) ++out[key(ids[i], ids[j])];
            }
        }
    };
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, docs.size()))));
    if (workers == 1) {
        count_range(0, id_docs.size(), m.counts_);
        return m;
    }
    std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> shards(workers);
    {
        std::vector<std::jthread> threads;
        for (unsigned w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                count_range(id_docs.size() * w / workers, id_docs.size() * (w + 1) / workers, shards[w]);
            });
        }
    }
    for (auto& shard : shards) {
        for (const auto& [k, c] : shard) m.counts_[k] += c;
    }
    return m;
}

std::uint32_t CooccurrenceMatrix::count(std::string_view a, std::string_view b) const {
    const auto ia = ids_.find(std::string(a));
    const auto ib = ids_.find(std::string(b));
    if (ia == ids_.end() || ib == ids_.end() || ia->second == ib->second) return 0;
    const auto it = counts_.find(key(ia->second, ib->second));
    return it == counts_.end() ? 0 : it->second;
}

double cooccurrence_score(std::span<const std::string> query_tokens, std::span<const std::string> neighbor_tokens,
                          const CooccurrenceMatrix& matrix, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples == 0) throw ValidationError("co-occurrence sample size must be positive");
    const auto d = matrix.prepare(query_tokens);
    const auto c = matrix.prepare(neighbor_tokens);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    pairs.reserve(d.size() * c.size());
    for (std::uint32_t i = 0; i < d.size(); ++i) {
        for (std::uint32_t j = 0; j < c.size(); ++j) {
            if (d[i] != c[j]) pairs.emplace_back(i, j);
        }
    }
    if (pairs.empty()) throw ValidationError("no co-occurrence pair can be formed after stopword removal");

    const std::size_t take = std::min(n_samples, pairs.size());
    if (take < pairs.size()) {
        Rng rng(seed);
        for (std::size_t i = 0; i < take; ++i) {
            std::swap(pairs[i], pairs[i + rng.index(pairs.size() - i)]);
        }
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < take; ++i) sum += matrix.count(d[pairs[i].first], c[pairs[i].second]);
    return sum / static_cast<double>(take);
}

int mesh_similarity_score(const Document& query, const Document& neighbor) {
    int score = 0;
    std::vector<std::string_view> seen;
    for (const auto& a : query.mesh) {
        if (std::find(seen.begin(), seen.end(), a.descriptor) != seen.end()) continue;
        seen.push_back(a.descriptor);
        const auto it = std::find_if(neighbor.mesh.begin(), neighbor.mesh.end(),
                                     [&](const MeshAnnotation& b) { return b.descriptor == a.descriptor; });
        if (it == neighbor.mesh.end()) continue;
        score += 1;
        if (a.major_topic) score += 3;
        for (const auto& q : a.qualifiers) {
            if (std::any_of(it->qualifiers.begin(), it->qualifiers.end(),
                            [&](const Qualifier& other) { return other.name == q.name; })) {
                score += 1;
            }
        }
    }
    return score;
}

std::string_view task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::length: return "length";
        case TaskKind::words: return "words";
        case TaskKind::stems: return "stems";
        case TaskKind::mesh: return "mesh";
    }
    return "unknown";
}

TaskKind parse_task(std::string_view name) {
    for (const auto k : {TaskKind::length, TaskKind::words, TaskKind::stems, TaskKind::mesh}) {
        if (task_name(k) == name) return k;
    }
    throw ValidationError("unknown task: " + std::string(name));
}

TaskParams default_task_params(TaskKind kind) {
    TaskParams p;
    switch (kind) {
        case TaskKind::length: p.queries = 10000; break;
        case TaskKind::words: p.queries = 5000; break;
        case TaskKind::stems: p.queries = 10000; break;
        case TaskKind::mesh:
            p.queries = 5000;
            p.k = 5;
            break;
    }
    return p;
}

TaskSeries run_task(TaskKind kind, NeighborProvider& provider, std::span<const Document> queries,
                    const TaskInputs& inputs, const TaskParams& params) {
    if (params.k == 0) throw ValidationError("k must be at least 1");
    if (!inputs.lookup) throw ValidationError("task needs a document lookup");
    const CooccurrenceMatrix* matrix = kind == TaskKind::words ? inputs.words : inputs.stems;
    if ((kind == TaskKind::words || kind == TaskKind::stems) && matrix == nullptr) {
        throw ValidationError(fmt::format("task {} needs a co-occurrence matrix", task_name(kind)));
    }
    if (matrix && matrix->stemmed() != (kind == TaskKind::stems)) {
        throw ValidationError(fmt::format("task {} got a matrix with the wrong stemming", task_name(kind)));
    }
    const auto& stopwords = inputs.stopwords ? *inputs.stopwords : textproc::StopwordList::english();

    TaskSeries series;
    series.kind = kind;
    series.source = provider.source();
    series.params = params;
    series.stopword_fingerprint = stopwords.fingerprint();
    std::vector<double> raw_population;

    const std::size_t n = params.queries ? std::min(params.queries, queries.size()) : queries.size();
    for (std::size_t qi = 0; qi < n; ++qi) {
        const auto& q = queries[qi];
        NeighborList list;
        try {
            list = provider.neighbors(q, params.k);
        } catch (const Error&) {
            ++series.failed_queries;
            continue;
        }
        if (list.neighbors.empty()) {
            ++series.failed_queries;
            continue;
        }
        for (const auto& nb : list.neighbors) raw_population.push_back(nb.score);

        if (kind == TaskKind::mesh) {
            double x_sum = 0.0, y_sum = 0.0;
            std::size_t used = 0;
            for (const auto& nb : list.neighbors) {
                const Document* c = inputs.lookup(nb.id);
                if (c == nullptr) {
                    ++series.skipped_neighbors;
                    continue;
                }
                x_sum += mesh_similarity_score(q, *c);
                y_sum += nb.score;
                ++used;
            }
            if (used == 0) continue;
            series.points.push_back({x_sum / static_cast<double>(used), y_sum / static_cast<double>(used), q.pmid, Pmid{}});
            continue;
        }

        const auto& nb = list.neighbors.front();
        const Document* c = inputs.lookup(nb.id);
        if (c == nullptr) {
            ++series.skipped_neighbors;
            continue;
        }
        const auto dq = normalize_document(q);
        const auto dc = normalize_document(*c);
        double x = 0.0;
        if (kind == TaskKind::length) {
            const auto lq = textproc::effective_char_length(dq, stopwords);
            const auto lc = textproc::effective_char_length(dc, stopwords);
            x = static_cast<double>(lq > lc ? lq - lc : lc - lq);
        } else {
            try {
                x = cooccurrence_score(dq, dc, *matrix, params.samples, mix_seed(params.seed, qi));
            } catch (const ValidationError&) {
                ++series.skipped_neighbors;
                continue;
            }
        }
        series.points.push_back({x, nb.score, q.pmid, nb.id});
    }

    if (series.source == Source::pmra && !series.points.empty()) {
        series.normalizer = inputs.normalizer ? *inputs.normalizer : pmra::ScoreNormalizer::fit(raw_population);
        for (auto& p : series.points) p.y = (*series.normalizer)(p.y);
    }
    return series;
}

Trend trend_slope(std::span<const SeriesPoint> points) {
    if (points.size() < 2) throw ValidationError("trend needs at least two points");
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& p : points) {
        sxx += (p.x - mx) * (p.x - mx);
        sxy += (p.x - mx) * (p.y - my);
    }
    if (sxx == 0.0) throw ValidationError("trend undefined: all x values are equal");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

std::vector<SeriesPoint> zscore_filter(std::span<const SeriesPoint> points, double threshold) {
    std::vector<SeriesPoint> out(points.begin(), points.end());
    if (points.size() < 2) return out;
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0;
    for (const auto& p : points) {
        vx += (p.x - mx) * (p.x - mx);
        vy += (p.y - my) * (p.y - my);
    }
    const double sx = std::sqrt(vx / n);
    const double sy = std::sqrt(vy / n);
    std::erase_if(out, [&](const SeriesPoint& p) {
        return (sx > 0.0 && std::abs(p.x - mx) / sx > threshold) || (sy > 0.0 && std::abs(p.y - my) / sy > threshold);
    });
    return out;
}

SeriesSummary summarize(const TaskSeries& series) {
    SeriesSummary s;
    s.points_all = series.points.size();
    const auto filtered = zscore_filter(series.points, series.params.filter_threshold);
    s.points_filtered = filtered.size();
    try {
        s.all = trend_slope(series.points);
    } catch (const ValidationError&) {
    }
    try {
        s.filtered = trend_slope(filtered);
    } catch (const ValidationError&) {
    }
    return s;
}

namespace {

std::string fmt_opt(const std::optional<Trend>& t, bool slope) {
    if (!t) return "NA";
    return fmt::format("{}", slope ? t->slope : t->intercept);
}

}  // namespace

void write_summary(const TaskSeries& series, std::ostream& out) {
    const auto s = summarize(series);
    out << fmt::format("task\t{}\nprovider\t{}\n", task_name(series.kind), source_name(series.source));
    out << fmt::format("points_all\t{}\nslope_all\t{}\nintercept_all\t{}\n", s.points_all, fmt_opt(s.all, true),
                       fmt_opt(s.all, false));
    out << fmt::format("points_filtered\t{}\nslope_filtered\t{}\nintercept_filtered\t{}\n", s.points_filtered,
                       fmt_opt(s.filtered, true), fmt_opt(s.filtered, false));
}

void write_series_tsv(const TaskSeries& series, std::ostream& out) {
    const auto& p = series.params;
    out << fmt::format("# task\t{}\n# provider\t{}\n# seed\t{}\n# k\t{}\n# queries_requested\t{}\n", task_name(series.kind),
                       source_name(series.source), p.seed, p.k, p.queries);
    out << fmt::format("# filter_threshold\t{}\n# stopwords_fingerprint\t{:016x}\n", p.filter_threshold,
                       series.stopword_fingerprint);
    switch (series.kind) {
        case TaskKind::length:
            out << "# x\tabsolute difference of effective character length (stopwords excluded)\n";
            break;
        case TaskKind::words:
        case TaskKind::stems:
            out << fmt::format("# x\tmean document-level co-occurrence count over up to {} sampled type pairs\n",
                               p.samples);
            break;
        case TaskKind::mesh:
            out << "# x\tmean MeSH similarity over the neighbours (+1 shared descriptor, +3 if major in the query, "
                   "+1 per shared qualifier)\n";
            out << "# major_topic_side\tquery\n";
            break;
    }
    if (series.normalizer) {
        out << fmt::format("# y\tpmra score, global min-max normalized (min {} max {})\n", series.normalizer->min(),
                           series.normalizer->max());
    } else {
        out << "# y\tcosine similarity\n";
    }
    out << fmt::format("# failed_queries\t{}\n# skipped_neighbors\t{}\n", series.failed_queries,
                       series.skipped_neighbors);
    const auto s = summarize(series);
    out << fmt::format("# points_all\t{}\n# slope_all\t{}\n# intercept_all\t{}\n", s.points_all, fmt_opt(s.all, true),
                       fmt_opt(s.all, false));
    out << fmt::format("# points_filtered\t{}\n# slope_filtered\t{}\n# intercept_filtered\t{}\n", s.points_filtered,
                       fmt_opt(s.filtered, true), fmt_opt(s.filtered, false));
    out << "query\tneighbor\tx\ty\n";
    for (const auto& pt : series.points) {
        out << fmt::format("{}\t{}\t{}\t{}\n", pt.query.value,
                           pt.neighbor.valid() ? std::to_string(pt.neighbor.value) : std::string("-"), pt.x, pt.y);
    }
}

}  // namespace pubvec::eval
