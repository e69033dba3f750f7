#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pubvec/agreement.hpp"
#include "pubvec/corpus.hpp"
#include "pubvec/embedding/model.hpp"
#include "pubvec/evalsuite.hpp"
#include "pubvec/neighbors.hpp"
#include "pubvec/pmra.hpp"
#include "pubvec/store.hpp"

namespace httplib {
class Server;
}

namespace pubvec::service {

struct ServiceConfig {
    std::filesystem::path data_dir = "pubvec-data";
    std::optional<std::filesystem::path> store_dir;  // defaults to <data>/store
    std::uint64_t seed = 1;
    pmra::ElinkConfig elink;  // cache_dir defaults to <data>/cache
    double pmra_min = 18e6;   // fixed range for normalizing related() scores
    double pmra_max = 75e6;
    std::optional<std::uint32_t> infer_epochs;
    std::string host = "127.0.0.1";
    int port = 8080;
    unsigned threads = 4;
};

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

/// getenv, with empty values treated as unset.
std::optional<std::string> process_env(const char* name);

/// Keys: data_dir, seed, host, port, threads, infer_epochs,
/// pmra_normalization {min, max}, elink {base_url, api_key, rate,
/// max_attempts, timeout, offline, fixture_dir, cache_dir}.
ServiceConfig parse_config(std::string_view json_text);

/// PUBVEC_DATA_DIR, PUBVEC_SEED, PUBVEC_ELINK_RATE, PUBVEC_ELINK_API_KEY,
/// PUBVEC_ELINK_OFFLINE, PUBVEC_ELINK_FIXTURES override the file.
void apply_env(ServiceConfig& config, const EnvLookup& env);

/// File (if given) then environment.
ServiceConfig load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env = process_env);

/// Accepts pmra, pv_dbow, pv_dm and the hyphenated spellings.
Source parse_provider(std::string_view name);

/// Fixed locations under the data directory.
struct DataLayout {
    std::filesystem::path root;
    std::filesystem::path store_dir;  // empty: <root>/store

    std::filesystem::path store() const { return store_dir.empty() ? root / "store" : store_dir; }
    std::filesystem::path models() const { return root / "models"; }
    std::filesystem::path model(Source s) const;
    std::filesystem::path sessions() const { return root / "sessions"; }
    std::filesystem::path ratings() const { return root / "ratings"; }
    std::filesystem::path cache() const { return root / "cache"; }
    std::filesystem::path eval() const { return root / "eval"; }
};

struct SessionCandidate {
    std::string ref;  // opaque, e.g. "c07"
    Pmid pmid;
    std::vector<Source> sources;  // sorted, never served to evaluators

    bool operator==(const SessionCandidate&) const = default;
};

struct SessionQuery {
    std::string ref;  // "q01"
    Pmid pmid;
    std::vector<SessionCandidate> candidates;  // served order

    bool operator==(const SessionQuery&) const = default;
};

struct RatingSession {
    std::string id;
    std::uint64_t seed = 0;
    std::size_t k = 0;
    Source embedding = Source::pv_dbow;
    std::vector<SessionQuery> queries;
    std::size_t unresolved = 0;  // neighbours dropped because the store lacks them

    const SessionQuery& query(std::string_view ref) const;  // throws NotFoundError
    bool operator==(const RatingSession&) const = default;
};

std::string session_to_json(const RatingSession& s);
RatingSession session_from_json(std::string_view text);

/// Picks n_queries documents from `pool` (seeded, without replacement),
/// pools the top-k of both providers per query, merges candidates both
/// return, drops ones `lookup` cannot resolve and shuffles each pool.
/// Any provider error propagates.
RatingSession build_session(std::span<const Pmid> pool, std::size_t n_queries, std::size_t k, std::uint64_t seed,
                            NeighborProvider& embedding, NeighborProvider& pmra, const DocumentLookup& lookup);

struct RatingSubmission {
    std::string evaluator;
    std::string query;
    std::string candidate;
    int relevance = 0;
    int rank = 0;
};

/// Sessions as <root>/sessions/<id>.json, ratings as
/// <root>/ratings/<id>.jsonl (one record per evaluator and candidate,
/// rewritten atomically on each submission).
class SessionStore {
public:
    explicit SessionStore(DataLayout layout);

    /// Idempotent for identical content; a different session under the
    /// same id is a ValidationError.
    void save(const RatingSession& session);
    RatingSession load(const std::string& id) const;
    bool exists(const std::string& id) const;
    std::vector<std::string> list() const;

    /// Applies a batch atomically: every record is validated against the
    /// session, an existing (evaluator, query, candidate) record is
    /// replaced, and ranks must stay unique per (evaluator, query).
    std::vector<agreement::RatingRecord> submit(const std::string& session_id,
                                                std::span<const RatingSubmission> batch);
    std::vector<agreement::RatingRecord> ratings(const std::string& session_id) const;
    std::filesystem::path rating_log(const std::string& session_id) const;

private:
    std::mutex& session_mutex(const std::string& id);

    DataLayout layout_;
    std::mutex registry_;
    std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

struct RelatedItem {
    Pmid pmid;
    double score = 0.0;  // cosine, or normalized pmra
    std::string title;
};

struct RelatedResult {
    std::optional<Pmid> query;
    Source source = Source::pv_dbow;
    std::vector<RelatedItem> items;
    bool short_list = false;
};

struct SessionRequest {
    std::size_t queries = 10;
    std::size_t k = 10;
    std::optional<std::uint64_t> seed;
    Source embedding = Source::pv_dbow;
};

struct EvalRequest {
    eval::TaskKind task = eval::TaskKind::length;
    Source source = Source::pv_dbow;
    std::optional<std::size_t> queries;
    std::optional<std::size_t> k;
    std::optional<std::size_t> samples;
    std::optional<std::uint64_t> seed;
};

struct EvalResult {
    eval::TaskSeries series;
    eval::SeriesSummary summary;
    std::filesystem::path tsv;
    std::filesystem::path summary_file;
};

/// Everything the CLI and HTTP front ends share. Store, models and
/// co-occurrence matrices load on first use. Thread-safe.
class Service {
public:
    explicit Service(ServiceConfig config);

    const ServiceConfig& config() const { return config_; }
    const DataLayout& layout() const { return layout_; }
    SessionStore& sessions() { return sessions_; }

    std::shared_ptr<const DocumentIndex> documents();
    std::shared_ptr<const CorpusSplit> split();
    std::shared_ptr<const embedding::EmbeddingModel> model(Source s);
    NeighborProviderPtr provider(Source s);
    /// Replaces the provider for a source, e.g. a scripted one in tests.
    void set_provider(Source s, NeighborProviderPtr provider);

    RatingSession create_session(const SessionRequest& request);

    /// Stored document by id; the query itself is never returned. Throws
    /// NotFoundError for an unknown id and ValidationError for k == 0.
    RelatedResult related(Pmid id, Source s, std::size_t k);
    /// Embedding providers only; all-unknown text is a ValidationError.
    RelatedResult related_text(const std::string& text, Source s, std::size_t k);

    /// Runs one task on test-set queries and writes
    /// <data>/eval/<task>-<source>.tsv plus a .summary.tsv.
    EvalResult run_eval(const EvalRequest& request);

    agreement::AgreementReport agreement(const std::string& session_id, const agreement::AgreementOptions& options);

private:
    RelatedResult finish_related(const NeighborList& list, Source s);
    const eval::CooccurrenceMatrix& matrix(bool stemmed);

    ServiceConfig config_;
    DataLayout layout_;
    SessionStore sessions_;
    std::mutex mutex_;
    std::shared_ptr<const DocumentIndex> docs_;
    std::shared_ptr<const CorpusSplit> split_;
    std::map<Source, std::shared_ptr<const embedding::EmbeddingModel>> models_;
    std::map<Source, NeighborProviderPtr> providers_;
    std::map<bool, std::unique_ptr<eval::CooccurrenceMatrix>> matrices_;
};

/// Blind evaluator views. None carries a PMID or a source model.
std::string session_view_json(const RatingSession& s, std::span<const agreement::RatingRecord> ratings,
                              const DocumentLookup& lookup);
std::string candidates_view_json(const RatingSession& s, const SessionQuery& q, const DocumentLookup& lookup,
                                 std::span<const agreement::RatingRecord> evaluator_ratings);
std::string rating_view_json(std::span<const agreement::RatingRecord> records);
/// Kappa and concordance only; per-model counts only when `reveal`.
std::string agreement_view_json(const agreement::AgreementReport& report, bool reveal);

/// Registers every endpoint on `server`. Errors map to JSON
/// {"error": ...}: 400 validation/parse, 404 not found, 502 upstream,
/// 500 otherwise.
void install_routes(httplib::Server& server, Service& service);

}  // namespace pubvec::service
