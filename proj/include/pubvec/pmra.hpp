#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pubvec/common.hpp"
#include "pubvec/corpus.hpp"
#include "pubvec/neighbors.hpp"

namespace pubvec::pmra {

/// Monotonic time source in seconds. Tests substitute a manual clock.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() = 0;
    virtual void sleep_until(double t) = 0;
};

class SystemClock final : public Clock {
public:
    double now() override;
    void sleep_until(double t) override;
};

/// Token bucket (as a generic cell rate algorithm): at most `burst`
/// requests at once, refilling at `rate` per second. Thread-safe; the
/// limit is global to every caller sharing the instance.
class RateLimiter {
public:
    RateLimiter(double rate, double burst, std::shared_ptr<Clock> clock);

    /// Blocks until a request may be sent; returns the send time.
    double acquire();

    double rate() const { return rate_; }

private:
    double rate_;
    double burst_;
    std::shared_ptr<Clock> clock_;
    std::mutex mutex_;
    std::optional<double> tat_;  // theoretical arrival time
};

/// HTTP failure after retries (or a non-retryable status). status is 0
/// for connection-level failures.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int status, int attempts, bool retryable,
                   std::optional<double> retry_after)
        : Error(what), status_(status), attempts_(attempts), retryable_(retryable), retry_after_(retry_after) {}

    int status() const { return status_; }
    int attempts() const { return attempts_; }
    bool retryable() const { return retryable_; }
    std::optional<double> retry_after() const { return retry_after_; }

private:
    int status_;
    int attempts_;
    bool retryable_;
    std::optional<double> retry_after_;
};

struct ElinkConfig {
    std::string base_url = "https://eutils.ncbi.nlm.nih.gov";
    std::string path = "/entrez/eutils/elink.fcgi";
    std::string api_key;
    std::optional<double> rate;  // requests/second; default 3, or 10 with an API key
    int max_attempts = 5;
    double backoff_initial = 0.5;  // seconds, doubled per retry
    double timeout_seconds = 30.0;
    std::optional<std::filesystem::path> cache_dir;
    std::optional<std::filesystem::path> fixture_dir;  // one <pmid>.xml per query
    bool offline = false;  // fixtures and cache only, never the network

    double effective_rate() const { return rate.value_or(api_key.empty() ? 3.0 : 10.0); }
};

/// Cache layout version; bump when the request changes.
inline constexpr std::string_view kEndpointVersion = "elink-neighbor_score-v1";

/// Extracts the pubmed_pubmed link set from an eLink neighbor_score
/// response, in served order, without the query itself. A response without
/// that link set yields an empty list. Malformed XML or an ERROR element
/// throws ParseError.
NeighborList parse_elink_response(std::string_view xml, Pmid query);

/// Client for eLink related-article scores, with rate limiting, retries,
/// an on-disk response cache and an offline fixture mode.
class ElinkClient {
public:
    explicit ElinkClient(ElinkConfig config, std::shared_ptr<Clock> clock = std::make_shared<SystemClock>());

    /// First k neighbours with raw scores. short_list is set when fewer
    /// were served.
    NeighborList fetch(Pmid pmid, std::size_t k);

    /// Response body for a PMID: fixture, then cache, then network.
    std::string fetch_raw(Pmid pmid);

    std::string request_url(Pmid pmid) const;
    const ElinkConfig& config() const { return config_; }
    std::uint64_t network_requests() const { return network_requests_; }

private:
    std::string http_get(Pmid pmid);
    std::mutex& key_mutex(Pmid pmid);

    ElinkConfig config_;
    std::shared_ptr<Clock> clock_;
    RateLimiter limiter_;
    std::array<std::mutex, 64> key_mutexes_;
    std::atomic<std::uint64_t> network_requests_{0};
};

/// Raw-score pmra neighbours from an eLink client.
class PmraProvider final : public NeighborProvider {
public:
    explicit PmraProvider(std::shared_ptr<ElinkClient> client) : client_(std::move(client)) {}

    Source source() const override { return Source::pmra; }
    NeighborList neighbors(const Document& query, std::size_t k) override;

private:
    std::shared_ptr<ElinkClient> client_;
};

/// Global min-max map of raw scores onto [0, 1].
class ScoreNormalizer {
public:
    /// Throws ValidationError unless the population has two distinct
    /// finite values.
    static ScoreNormalizer fit(std::span<const double> population);
    ScoreNormalizer(double min, double max);

    double operator()(double raw) const { return (raw - min_) / (max_ - min_); }
    double min() const { return min_; }
    double max() const { return max_; }

private:
    double min_;
    double max_;
};

/// fit(scores) applied to every score.
std::vector<double> normalize_scores(std::span<const double> scores);

/// An eLink neighbor_score response body: the query itself first (as the
/// live service does), then `links` in the given order.
std::string render_elink_response(Pmid query, std::span<const Neighbor> links);

/// Stand-in pmra neighbours for offline runs: for every document, the k
/// others with the highest 0.7 * descriptor Jaccard + 0.3 * token Jaccard
/// (stopwords removed; ties by PMID), scored linearly into
/// [min_score, max_score] and written as <dir>/<pmid>.xml. Returns the
/// number of files written.
std::size_t write_synthetic_fixtures(std::span<const Document> docs, const std::filesystem::path& dir, std::size_t k,
                                     double min_score = 18e6, double max_score = 75e6);

}  // namespace pubvec::pmra
