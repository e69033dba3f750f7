#include "pubvec/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace pubvec::agreement {

using nlohmann::json;

void validate(const RatingRecord& r) {
    if (r.evaluator.empty() || r.session.empty() || r.query.empty() || r.candidate.empty()) {
        throw ValidationError("rating record needs evaluator, session, query and candidate ids");
    }
    if (r.relevance < 0 || r.relevance > 2) throw ValidationError(fmt::format("relevance must be 0, 1 or 2, got {}", r.relevance));
    if (r.rank < 1) throw ValidationError(fmt::format("rank must be at least 1, got {}", r.rank));
    if (r.sources.empty()) throw ValidationError("rating record needs at least one source");
}

std::string to_json_line(const RatingRecord& r) {
    json sources = json::array();
    for (const auto s : r.sources) sources.push_back(source_name(s));
    const json j{{"evaluator", r.evaluator}, {"session", r.session},     {"query", r.query},
                 {"candidate", r.candidate}, {"sources", sources},       {"relevance", r.relevance},
                 {"rank", r.rank}};
    return j.dump();
}

RatingRecord from_json_line(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("rating record: ") + e.what(), e.byte);
    }
    RatingRecord r;
    try {
        r.evaluator = j.at("evaluator").get<std::string>();
        r.session = j.at("session").get<std::string>();
        r.query = j.at("query").get<std::string>();
        r.candidate = j.at("candidate").get<std::string>();
        for (const auto& s : j.at("sources")) r.sources.push_back(parse_source(s.get<std::string>()));
        r.relevance = j.at("relevance").get<int>();
        r.rank = j.at("rank").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("rating record: ") + e.what());
    }
    validate(r);
    return r;
}

std::vector<RatingRecord> read_rating_log(std::istream& in) {
    std::vector<RatingRecord> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(from_json_line(line));
        } catch (const ParseError& e) {
            throw ParseError(fmt::format("line {}: {}", number, e.what()));
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("line {}: {}", number, e.what()));
        }
    }
    return out;
}

std::vector<RatingRecord> read_rating_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open rating log " + path.string());
    return read_rating_log(in);
}

void write_rating_log(std::span<const RatingRecord> records, std::ostream& out) {
    for (const auto& r : records) out << to_json_line(r) << '\n';
}

double cohen_kappa(std::span<const int> a, std::span<const int> b, KappaWeighting weighting) {
    if (a.size() != b.size()) throw ValidationError(fmt::format("kappa needs equal lengths, got {} and {}", a.size(), b.size()));
    if (a.empty()) throw ValidationError("kappa needs at least one rated item");
    constexpr int kCategories = 3;
    // Disagreement form on integer counts. With 0/1 weights this is
    // (p_o - p_e) / (1 - p_e), and K(a, a) comes out exactly 1.
    std::int64_t table[kCategories][kCategories] = {};
    std::int64_t row[kCategories] = {};
    std::int64_t col[kCategories] = {};
    const auto n = static_cast<std::int64_t>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < 0 || a[i] >= kCategories || b[i] < 0 || b[i] >= kCategories) {
            throw ValidationError(fmt::format("kappa category out of range at item {}", i));
        }
        ++table[a[i]][b[i]];
        ++row[a[i]];
        ++col[b[i]];
    }
    std::int64_t observed = 0;
    std::int64_t expected = 0;
    for (int i = 0; i < kCategories; ++i) {
        for (int j = 0; j < kCategories; ++j) {
            const std::int64_t d = std::abs(i - j);
            std::int64_t w = d == 0 ? 0 : 1;
            if (weighting == KappaWeighting::linear) w = d;
            if (weighting == KappaWeighting::quadratic) w = d * d;
            observed += w * table[i][j] * n;
            expected += w * row[i] * col[j];
        }
    }
    if (expected == 0) return 1.0;
    return 1.0 - static_cast<double>(observed) / static_cast<double>(expected);
}

namespace {

ItemKey item_of(const RatingRecord& r) { return {r.session, r.query, r.candidate}; }

std::string describe(const ItemKey& k) { return k.session + "/" + k.query + "/" + k.candidate; }

}  // namespace

KappaMatrix pairwise_kappa_matrix(std::span<const RatingRecord> records, KappaWeighting weighting) {
    std::map<std::string, std::map<ItemKey, int>> by_evaluator;
    std::set<ItemKey> items;
    for (const auto& r : records) {
        validate(r);
        const auto key = item_of(r);
        if (!by_evaluator[r.evaluator].emplace(key, r.relevance).second) {
            throw ValidationError(fmt::format("evaluator {} rated {} twice", r.evaluator, describe(key)));
        }
        items.insert(key);
    }
    if (by_evaluator.size() < 2) throw ValidationError("kappa matrix needs at least two evaluators");

    std::vector<std::string> missing;
    for (const auto& [evaluator, rated] : by_evaluator) {
        for (const auto& item : items) {
            if (!rated.contains(item)) missing.push_back("(" + evaluator + ", " + describe(item) + ")");
        }
    }
    if (!missing.empty()) {
        throw ValidationError(fmt::format("evaluators rated different items; missing: {}", fmt::join(missing, " ")));
    }

    KappaMatrix out;
    out.items = items.size();
    std::vector<std::vector<int>> ratings;
    for (const auto& [evaluator, rated] : by_evaluator) {
        out.evaluators.push_back(evaluator);
        auto& v = ratings.emplace_back();
        for (const auto& [item, relevance] : rated) v.push_back(relevance);
    }
    const auto m = out.evaluators.size();
    out.values.assign(m, std::vector<double>(m, 1.0));
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const double k = cohen_kappa(ratings[i], ratings[j], weighting);
            out.values[i][j] = out.values[j][i] = k;
            sum += k;
        }
    }
    out.mean = sum / static_cast<double>(m * (m - 1) / 2);
    return out;
}

bool RankPair::concordant() const {
    const auto sign = [](int d) { return (d > 0) - (d < 0); };
    return sign(rank_a_first - rank_a_second) == sign(rank_b_first - rank_b_second);
}

namespace {

using RankedLists = std::map<std::pair<std::string, std::string>, std::map<std::string, int>>;

RankedLists ranked_lists(std::span<const RatingRecord> records, const char* who) {
    RankedLists lists;
    for (const auto& r : records) {
        validate(r);
        if (!lists[{r.session, r.query}].emplace(r.candidate, r.rank).second) {
            throw ValidationError(fmt::format("evaluator {} ranked {} twice", who, describe(item_of(r))));
        }
    }
    return lists;
}

void pick(std::vector<RankPair>& pool, std::size_t n, Rng& rng, std::vector<RankPair>& out) {
    if (pool.size() <= n) {
        for (auto& p : pool) out.push_back(std::move(p));
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
        out.push_back(std::move(pool[i]));
    }
}

}  // namespace

std::vector<RankPair> sample_rank_pairs(std::span<const RatingRecord> a, std::span<const RatingRecord> b,
                                        std::size_t n_pairs, std::uint64_t seed, PairSampling sampling) {
    if (n_pairs == 0) throw ValidationError("concordance needs n_pairs >= 1");
    const auto la = ranked_lists(a, "a");
    const auto lb = ranked_lists(b, "b");
    std::vector<RankPair> pooled;
    std::vector<RankPair> out;
    std::uint64_t list_index = 0;
    for (const auto& [list, ranks_a] : la) {
        const auto it = lb.find(list);
        if (it == lb.end()) continue;
        const auto& ranks_b = it->second;
        if (ranks_a.size() != ranks_b.size() ||
            !std::equal(ranks_a.begin(), ranks_a.end(), ranks_b.begin(),
                        [](const auto& x, const auto& y) { return x.first == y.first; })) {
            throw ValidationError(fmt::format("evaluators ranked different pools for {}/{}", list.first, list.second));
        }
        std::vector<RankPair> pairs;
        for (auto i = ranks_a.begin(); i != ranks_a.end(); ++i) {
            for (auto j = std::next(i); j != ranks_a.end(); ++j) {
                pairs.push_back({list.first, list.second, i->first, j->first, i->second, j->second,
                                 ranks_b.at(i->first), ranks_b.at(j->first)});
            }
        }
        if (sampling == PairSampling::per_query) {
            Rng rng(mix_seed(seed, list_index));
            pick(pairs, n_pairs, rng, out);
        } else {
            std::move(pairs.begin(), pairs.end(), std::back_inserter(pooled));
        }
        ++list_index;
    }
    if (sampling == PairSampling::pooled) {
        Rng rng(seed);
        pick(pooled, n_pairs, rng, out);
    }
    return out;
}

double concordance_rate(std::span<const RatingRecord> a, std::span<const RatingRecord> b, std::size_t n_pairs,
                        std::uint64_t seed, PairSampling sampling) {
    const auto pairs = sample_rank_pairs(a, b, n_pairs, seed, sampling);
    if (pairs.empty()) throw ValidationError("no shared list with two or more candidates to form a pair");
    const auto agree = std::count_if(pairs.begin(), pairs.end(), [](const RankPair& p) { return p.concordant(); });
    return static_cast<double>(agree) / static_cast<double>(pairs.size());
}

ConcordanceInterval concordance_ci(std::span<const double> rates, double confidence) {
    if (rates.size() < 2) throw ValidationError("concordance interval needs at least two rates");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence must lie in (0, 1)");
    const double n = static_cast<double>(rates.size());
    double sum = 0.0;
    double zsum = 0.0;
    std::vector<double> z;
    for (const double r : rates) {
        if (!(r >= 0.0 && r <= 1.0)) throw ValidationError(fmt::format("rate {} outside [0, 1]", r));
        sum += r;
        z.push_back(std::atanh(2.0 * std::clamp(r, kRateClamp, 1.0 - kRateClamp) - 1.0));
        zsum += z.back();
    }
    ConcordanceInterval out;
    out.n = rates.size();
    out.mean = sum / n;
    const double zmean = zsum / n;
    double ss = 0.0;
    double zss = 0.0;
    for (std::size_t i = 0; i < rates.size(); ++i) {
        ss += (rates[i] - out.mean) * (rates[i] - out.mean);
        zss += (z[i] - zmean) * (z[i] - zmean);
    }
    out.sd = std::sqrt(ss / (n - 1.0));
    const boost::math::students_t dist(n - 1.0);
    const double t = boost::math::quantile(dist, 0.5 + confidence / 2.0);
    const double half = t * std::sqrt(zss / (n - 1.0)) / std::sqrt(n);
    const auto back = [](double v) { return (std::tanh(v) + 1.0) / 2.0; };
    out.lo = back(zmean - half);
    out.hi = back(zmean + half);
    return out;
}

std::map<Source, ModelSummary> summarize_ratings(std::span<const RatingRecord> records) {
    std::map<Source, ModelSummary> out;
    std::map<Source, double> rank_sum;
    for (const auto& r : records) {
        validate(r);
        const std::set<Source> distinct(r.sources.begin(), r.sources.end());
        for (const auto s : distinct) {
            auto& m = out[s];
            ++m.relevance[static_cast<std::size_t>(r.relevance)];
            ++m.records;
            rank_sum[s] += r.rank;
        }
    }
    for (auto& [s, m] : out) m.mean_rank = rank_sum[s] / static_cast<double>(m.records);
    return out;
}

AgreementReport build_report(std::span<const RatingRecord> records, const AgreementOptions& options) {
    AgreementReport report;
    report.options = options;
    report.kappa = pairwise_kappa_matrix(records, options.weighting);
    report.summary = summarize_ratings(records);

    std::map<std::string, std::vector<RatingRecord>> by_evaluator;
    for (const auto& r : records) by_evaluator[r.evaluator].push_back(r);
    std::vector<double> rates;
    const auto& names = report.kappa.evaluators;
    std::uint64_t pair_index = 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (std::size_t j = i + 1; j < names.size(); ++j) {
            const auto& a = by_evaluator[names[i]];
            const auto& b = by_evaluator[names[j]];
            const auto seed = mix_seed(options.seed, pair_index++);
            const auto pairs = sample_rank_pairs(a, b, options.concordance_pairs, seed, options.sampling);
            if (pairs.empty()) continue;
            const double rate = concordance_rate(a, b, options.concordance_pairs, seed, options.sampling);
            report.concordance.push_back({names[i], names[j], rate, pairs.size()});
            rates.push_back(rate);
        }
    }
    if (rates.size() >= 2) report.interval = concordance_ci(rates, options.confidence);
    return report;
}

void write_kappa_tsv(const KappaMatrix& matrix, std::ostream& out) {
    out << "evaluator";
    for (const auto& e : matrix.evaluators) out << '\t' << e;
    out << '\n';
    for (std::size_t i = 0; i < matrix.evaluators.size(); ++i) {
        out << matrix.evaluators[i];
        for (const double v : matrix.values[i]) out << '\t' << fmt::format("{:.6f}", v);
        out << '\n';
    }
}

void write_report(const AgreementReport& report, std::ostream& out) {
    const auto& o = report.options;
    out << fmt::format("kappa weighting: {}\n", weighting_name(o.weighting));
    out << fmt::format("concordance: {} pairs, {} sampling, seed {}\n", o.concordance_pairs, sampling_name(o.sampling),
                       o.seed);
    out << "shared candidates are rated once and count toward every model that returned them\n\n";
    out << fmt::format("kappa over {} items, mean {:.4f}\n", report.kappa.items, report.kappa.mean);
    write_kappa_tsv(report.kappa, out);
    out << "\nconcordance\n";
    for (const auto& c : report.concordance) out << fmt::format("{}\t{}\t{:.4f}\t{} pairs\n", c.a, c.b, c.rate, c.pairs);
    if (report.interval) {
        const auto& ci = *report.interval;
        out << fmt::format("mean {:.4f} sd {:.4f} {:.0f}% interval [{:.4f}, {:.4f}] over {} evaluator pairs\n", ci.mean,
                           ci.sd, o.confidence * 100.0, ci.lo, ci.hi, ci.n);
    }
    out << "\nmodel\tbad\tpartial\tfull\trecords\tmean_rank\n";
    for (const auto& [s, m] : report.summary) {
        out << fmt::format("{}\t{}\t{}\t{}\t{}\t{:.2f}\n", source_name(s), m.relevance[0], m.relevance[1], m.relevance[2],
                           m.records, m.mean_rank);
    }
}

std::string_view weighting_name(KappaWeighting w) {
    switch (w) {
        case KappaWeighting::none: return "none";
        case KappaWeighting::linear: return "linear";
        case KappaWeighting::quadratic: return "quadratic";
    }
    return "none";
}

KappaWeighting parse_weighting(std::string_view name) {
    if (name == "none") return KappaWeighting::none;
    if (name == "linear") return KappaWeighting::linear;
    if (name == "quadratic") return KappaWeighting::quadratic;
    throw ValidationError("unknown kappa weighting: " + std::string(name));
}

std::string_view sampling_name(PairSampling s) { return s == PairSampling::pooled ? "pooled" : "per_query"; }

PairSampling parse_sampling(std::string_view name) {
    if (name == "pooled") return PairSampling::pooled;
    if (name == "per_query" || name == "per-query") return PairSampling::per_query;
    throw ValidationError("unknown pair sampling: " + std::string(name));
}

}  // namespace pubvec::agreement
