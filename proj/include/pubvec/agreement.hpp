#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pubvec/neighbors.hpp"

namespace pubvec::agreement {

/// One evaluator's judgment of one pooled candidate. `sources` lists every
/// model that returned the candidate; it is never shown to evaluators.
struct RatingRecord {
    std::string evaluator;
    std::string session;
    std::string query;      // session-local query reference
    std::string candidate;  // session-local candidate reference
    std::vector<Source> sources;
    int relevance = 0;  // 0 bad, 1 partial, 2 full
    int rank = 0;       // 1-based position in the evaluator's ordering of the pool

    bool operator==(const RatingRecord&) const = default;
};

/// Throws ValidationError on an empty id, relevance outside 0..2, rank < 1
/// or no source.
void validate(const RatingRecord& r);

std::string to_json_line(const RatingRecord& r);
RatingRecord from_json_line(std::string_view line);  // throws ParseError / ValidationError

/// One JSON object per line. Blank lines are skipped on read.
std::vector<RatingRecord> read_rating_log(std::istream& in);
std::vector<RatingRecord> read_rating_log(const std::filesystem::path& path);
void write_rating_log(std::span<const RatingRecord> records, std::ostream& out);

enum class KappaWeighting { none, linear, quadratic };

/// Cohen's kappa over relevance categories 0..2. Weighted variants use
/// |i-j| or (i-j)^2 disagreement weights. When chance agreement is total
/// (both raters constant and equal) K is 1.
double cohen_kappa(std::span<const int> a, std::span<const int> b, KappaWeighting weighting = KappaWeighting::none);

struct ItemKey {
    std::string session;
    std::string query;
    std::string candidate;

    auto operator<=>(const ItemKey&) const = default;
};

struct KappaMatrix {
    std::vector<std::string> evaluators;  // sorted
    std::vector<std::vector<double>> values;
    double mean = 0.0;  // over distinct pairs
    std::size_t items = 0;
};

/// Every evaluator must have rated the same item set; otherwise the
/// ValidationError lists each missing (evaluator, item).
KappaMatrix pairwise_kappa_matrix(std::span<const RatingRecord> records,
                                  KappaWeighting weighting = KappaWeighting::none);

enum class PairSampling { pooled, per_query };

struct RankPair {
    std::string session;
    std::string query;
    std::string first;
    std::string second;
    int rank_a_first = 0;
    int rank_a_second = 0;
    int rank_b_first = 0;
    int rank_b_second = 0;

    bool concordant() const;
};

/// Candidate pairs compared by concordance_rate. Pooled: n_pairs drawn
/// without replacement from all same-list pairs of every list both
/// evaluators ranked. Per query: n_pairs from each list. Fewer available
/// pairs than requested means all are used.
std::vector<RankPair> sample_rank_pairs(std::span<const RatingRecord> a, std::span<const RatingRecord> b,
                                        std::size_t n_pairs, std::uint64_t seed,
                                        PairSampling sampling = PairSampling::pooled);

/// Fraction of sampled pairs both evaluators order the same way. Throws
/// ValidationError when no pair can be formed.
double concordance_rate(std::span<const RatingRecord> a, std::span<const RatingRecord> b, std::size_t n_pairs = 10,
                        std::uint64_t seed = 1, PairSampling sampling = PairSampling::pooled);

struct ConcordanceInterval {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation, raw scale
    double lo = 0.0;
    double hi = 0.0;
    std::size_t n = 0;
};

inline constexpr double kRateClamp = 1e-6;

/// Student-t interval on z = atanh(2r - 1), rates clamped to
/// [eps, 1 - eps], mapped back with (tanh(z) + 1) / 2.
ConcordanceInterval concordance_ci(std::span<const double> rates, double confidence = 0.95);

struct ModelSummary {
    std::array<std::size_t, 3> relevance{};  // counts of 0, 1, 2
    std::size_t records = 0;
    double mean_rank = 0.0;
};

/// Per model: relevance counts and mean rank. A candidate returned by
/// several models counts once toward each of them.
std::map<Source, ModelSummary> summarize_ratings(std::span<const RatingRecord> records);

struct AgreementOptions {
    KappaWeighting weighting = KappaWeighting::none;
    std::size_t concordance_pairs = 10;
    std::uint64_t seed = 1;
    PairSampling sampling = PairSampling::pooled;
    double confidence = 0.95;
};

struct PairConcordance {
    std::string a;
    std::string b;
    double rate = 0.0;
    std::size_t pairs = 0;
};

struct AgreementReport {
    KappaMatrix kappa;
    std::vector<PairConcordance> concordance;
    std::optional<ConcordanceInterval> interval;  // needs two or more evaluator pairs
    std::map<Source, ModelSummary> summary;
    AgreementOptions options;
};

AgreementReport build_report(std::span<const RatingRecord> records, const AgreementOptions& options = {});

/// Plain-text report: settings, kappa matrix, concordance, per-model counts.
void write_report(const AgreementReport& report, std::ostream& out);
/// Evaluator x evaluator kappa matrix with a header row.
void write_kappa_tsv(const KappaMatrix& matrix, std::ostream& out);

std::string_view weighting_name(KappaWeighting w);
KappaWeighting parse_weighting(std::string_view name);
std::string_view sampling_name(PairSampling s);
PairSampling parse_sampling(std::string_view name);

}  // namespace pubvec::agreement
