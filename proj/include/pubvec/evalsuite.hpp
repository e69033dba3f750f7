#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pubvec/corpus.hpp"
#include "pubvec/neighbors.hpp"
#include "pubvec/pmra.hpp"
#include "pubvec/textproc.hpp"

namespace pubvec::eval {

/// Document-level co-occurrence counts: each unordered pair of distinct
/// token types present in a document adds exactly one. Symmetric, no
/// diagonal.
class CooccurrenceMatrix {
public:
    CooccurrenceMatrix() = default;

    /// `docs` are token lists (tokenize output). Stopwords are dropped
    /// first; with `stemmed` the remaining tokens are Porter-stemmed.
    static CooccurrenceMatrix build(std::span<const std::vector<std::string>> docs, bool stemmed,
                                    const textproc::StopwordList& stopwords, unsigned workers = 1);

    std::uint32_t count(std::string_view a, std::string_view b) const;
    bool stemmed() const { return stemmed_; }
    std::size_t vocabulary_size() const { return ids_.size(); }
    std::size_t stored_pairs() const { return counts_.size(); }

    /// The preprocessing applied to a token list before counting or
    /// scoring: stopwords removed, optionally stemmed, distinct, sorted.
    std::vector<std::string> prepare(std::span<const std::string> tokens) const;

private:
    static std::uint64_t key(std::uint32_t a, std::uint32_t b);

    bool stemmed_ = false;
    textproc::StopwordList stopwords_;
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::unordered_map<std::uint64_t, std::uint32_t> counts_;
};

/// Mean matrix count over up to `n_samples` (d, c) type pairs drawn
/// without replacement from D x C after preprocessing; identical types
/// are not paired. When fewer pairs exist all are used once. Throws
/// ValidationError when no pair can be formed.
double cooccurrence_score(std::span<const std::string> query_tokens, std::span<const std::string> neighbor_tokens,
                          const CooccurrenceMatrix& matrix, std::size_t n_samples, std::uint64_t seed);

/// Per descriptor of D also on C: +1, +3 more when D marks it major, +1
/// per qualifier name both documents attach to it.
int mesh_similarity_score(const Document& query, const Document& neighbor);

enum class TaskKind { length, words, stems, mesh };

std::string_view task_name(TaskKind kind);
TaskKind parse_task(std::string_view name);  // throws ValidationError

struct TaskParams {
    std::size_t queries = 0;   // how many of the supplied queries to use
    std::size_t k = 1;
    std::size_t samples = 500;  // co-occurrence pairs per (query, neighbour)
    std::uint64_t seed = 1;
    double filter_threshold = 3.0;
};

/// length 10,000 / k 1, words 5,000 / k 1, stems 10,000 / k 1, mesh 5,000 / k 5.
TaskParams default_task_params(TaskKind kind);

struct SeriesPoint {
    double x = 0.0;
    double y = 0.0;
    Pmid query;
    Pmid neighbor;  // unset for mesh points, which summarise k neighbours

    bool operator==(const SeriesPoint&) const = default;
};

struct TaskSeries {
    TaskKind kind = TaskKind::length;
    Source source = Source::pmra;
    TaskParams params;
    std::vector<SeriesPoint> points;
    std::size_t failed_queries = 0;       // provider error or empty list
    std::size_t skipped_neighbors = 0;    // unresolvable or unscorable
    std::optional<pmra::ScoreNormalizer> normalizer;  // pmra only
    std::uint64_t stopword_fingerprint = 0;
};

struct TaskInputs {
    DocumentLookup lookup;
    const textproc::StopwordList* stopwords = nullptr;  // defaults to english()
    const CooccurrenceMatrix* words = nullptr;          // required for words
    const CooccurrenceMatrix* stems = nullptr;          // required for stems
    /// Fixed pmra normalization; fitted on this run's scores when empty.
    std::optional<pmra::ScoreNormalizer> normalizer;
};

/// Runs one task over the first params.queries documents. x is the task
/// metric, y the provider score (pmra scores min-max normalized).
TaskSeries run_task(TaskKind kind, NeighborProvider& provider, std::span<const Document> queries,
                    const TaskInputs& inputs, const TaskParams& params);

struct Trend {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Ordinary least squares of y on x. Throws ValidationError with fewer
/// than two points or constant x.
Trend trend_slope(std::span<const SeriesPoint> points);

/// Drops points whose x or y lies more than `threshold` population
/// standard deviations from its mean. An axis with zero spread is ignored.
std::vector<SeriesPoint> zscore_filter(std::span<const SeriesPoint> points, double threshold = 3.0);

struct SeriesSummary {
    std::optional<Trend> all;
    std::optional<Trend> filtered;
    std::size_t points_all = 0;
    std::size_t points_filtered = 0;
};

SeriesSummary summarize(const TaskSeries& series);

/// '#' metadata header (task, provider, seed, k, threshold, conventions,
/// summary), then "query neighbor x y" rows. Numbers use the shortest
/// round-trip form, so equal series give identical bytes.
void write_series_tsv(const TaskSeries& series, std::ostream& out);

/// "key<TAB>value" lines: slope and intercept before and after filtering.
void write_summary(const TaskSeries& series, std::ostream& out);

}  // namespace pubvec::eval
