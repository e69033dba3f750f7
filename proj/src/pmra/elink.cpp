#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <expat.h>
#include <fmt/format.h>
#include <httplib.h>

#include "pubvec/corpus.hpp"
#include "pubvec/pmra.hpp"

namespace pubvec::pmra {

double SystemClock::now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_until(double t) {
    const double wait = t - now();
    if (wait > 0) std::this_thread::sleep_for(std::chrono::duration<double>(wait));
}

RateLimiter::RateLimiter(double rate, double burst, std::shared_ptr<Clock> clock)
    : rate_(rate), burst_(burst), clock_(std::move(clock)) {
    if (!(rate > 0.0) || !(burst >= 1.0)) throw ValidationError("rate limiter needs rate > 0 and burst >= 1");
    if (!clock_) throw ValidationError("rate limiter needs a clock");
}

double RateLimiter::acquire() {
    const double interval = 1.0 / rate_;
    const double tolerance = (burst_ - 1.0) * interval;
    double send_at = 0.0;
    {
        std::lock_guard lock(mutex_);
        const double now = clock_->now();
        const double tat = tat_.value_or(now);
        send_at = std::max(now, tat - tolerance);
        tat_ = std::max(tat, send_at) + interval;
    }
    clock_->sleep_until(send_at);
    return send_at;
}

namespace {

struct ElinkHandler {
    std::vector<std::string> path;
    std::string text;
    std::string link_name;
    std::vector<std::pair<std::string, std::string>> links;  // (id, score) as text
    std::string link_id;
    std::string link_score;
    std::vector<std::pair<std::string, std::string>> result;
    bool found = false;
    std::string error;

    bool under(std::string_view parent) const { return path.size() >= 2 && path[path.size() - 2] == parent; }
};

void XMLCALL on_start(void* data, const XML_Char* name, const XML_Char**) {
    auto* h = static_cast<ElinkHandler*>(data);
    h->path.emplace_back(name);
    h->text.clear();
    const std::string_view n = name;
    if (n == "LinkSetDb") {
        h->link_name.clear();
        h->links.clear();
    } else if (n == "Link") {
        h->link_id.clear();
        h->link_score.clear();
    }
}

void XMLCALL on_end(void* data, const XML_Char* name) {
    auto* h = static_cast<ElinkHandler*>(data);
    const std::string_view n = name;
    if (n == "LinkName" && h->under("LinkSetDb")) {
        h->link_name = h->text;
    } else if (n == "Id" && h->under("Link")) {
        h->link_id = h->text;
    } else if (n == "Score" && h->under("Link")) {
        h->link_score = h->text;
    } else if (n == "Link" && h->under("LinkSetDb")) {
        h->links.emplace_back(h->link_id, h->link_score);
    } else if (n == "LinkSetDb") {
        if (h->link_name == "pubmed_pubmed" && !h->found) {
            h->result = std::move(h->links);
            h->found = true;
        }
        h->links.clear();
    } else if (n == "ERROR") {
        h->error = h->text;
    }
    h->path.pop_back();
    h->text.clear();
}

void XMLCALL on_text(void* data, const XML_Char* s, int len) {
    auto* h = static_cast<ElinkHandler*>(data);
    h->text.append(s, static_cast<std::size_t>(len));
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::optional<std::string> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& p, const std::string& body) {
    std::filesystem::create_directories(p.parent_path());
    const auto tmp = std::filesystem::path(p.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!out) throw Error("cannot write cache file " + tmp.string());
    }
    std::filesystem::rename(tmp, p);
}

}  // namespace

NeighborList parse_elink_response(std::string_view xml, Pmid query) {
    ElinkHandler h;
    XML_Parser parser = XML_ParserCreate(nullptr);
    XML_SetUserData(parser, &h);
    XML_SetElementHandler(parser, on_start, on_end);
    XML_SetCharacterDataHandler(parser, on_text);
    const auto status = XML_Parse(parser, xml.data(), static_cast<int>(xml.size()), 1);
    if (status != XML_STATUS_OK) {
        const auto offset = static_cast<std::uint64_t>(XML_GetCurrentByteIndex(parser));
        const std::string msg = XML_ErrorString(XML_GetErrorCode(parser));
        XML_ParserFree(parser);
        throw ParseError("eLink response: " + msg, offset);
    }
    XML_ParserFree(parser);
    if (!h.error.empty()) throw ParseError("eLink error for " + to_string(query) + ": " + trim(h.error));

    NeighborList out;
    out.query_id = query;
    out.source = Source::pmra;
    for (const auto& [id_text, score_text] : h.result) {
        const auto id = trim(id_text);
        const auto score = trim(score_text);
        std::uint64_t id_value = 0;
        double score_value = 0.0;
        try {
            std::size_t used = 0;
            id_value = std::stoull(id, &used);
            if (used != id.size() || id_value == 0) throw std::invalid_argument("id");
            score_value = std::stod(score, &used);
            if (used != score.size() || !std::isfinite(score_value)) throw std::invalid_argument("score");
        } catch (const std::exception&) {
            throw ParseError(fmt::format("eLink response: bad link id '{}' or score '{}'", id, score));
        }
        if (Pmid(id_value) == query) continue;
        out.neighbors.push_back({Pmid(id_value), score_value});
    }
    return out;
}

ElinkClient::ElinkClient(ElinkConfig config, std::shared_ptr<Clock> clock)
    : config_(std::move(config)), clock_(std::move(clock)), limiter_(config_.effective_rate(), 1.0, clock_) {
    if (config_.max_attempts < 1) throw ValidationError("max_attempts must be at least 1");
}

std::mutex& ElinkClient::key_mutex(Pmid pmid) { return key_mutexes_[pmid.value % key_mutexes_.size()]; }

std::string ElinkClient::request_url(Pmid pmid) const {
    auto url = fmt::format("{}?dbfrom=pubmed&db=pubmed&id={}&cmd=neighbor_score&linkname=pubmed_pubmed",
                           config_.path, pmid.value);
    if (!config_.api_key.empty()) url += "&api_key=" + config_.api_key;
    return url;
}

std::string ElinkClient::fetch_raw(Pmid pmid) {
    if (!pmid.valid()) throw ValidationError("PMID must be positive");
    if (config_.fixture_dir) {
        if (auto body = read_file(*config_.fixture_dir / (to_string(pmid) + ".xml"))) return *body;
    }
    std::optional<std::filesystem::path> cached;
    if (config_.cache_dir) cached = *config_.cache_dir / std::string(kEndpointVersion) / (to_string(pmid) + ".xml");
    std::lock_guard lock(key_mutex(pmid));
    if (cached) {
        if (auto body = read_file(*cached)) return *body;
    }
    if (config_.offline) throw NotFoundError("no recorded eLink response for PMID " + to_string(pmid));
    auto body = http_get(pmid);
    parse_elink_response(body, pmid);  // never cache an unusable body
    if (cached) write_file_atomic(*cached, body);
    return body;
}

std::string ElinkClient::http_get(Pmid pmid) {
    httplib::Client client(config_.base_url);
    const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_follow_location(true);
    const auto target = request_url(pmid);

    int last_status = 0;
    std::optional<double> retry_after;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        limiter_.acquire();
        ++network_requests_;
        const auto res = client.Get(target);
        retry_after.reset();
        if (!res) {
            last_status = 0;
            last_error = httplib::to_string(res.error());
        } else if (res->status == 200) {
            return res->body;
        } else {
            last_status = res->status;
            last_error = fmt::format("HTTP {}", res->status);
            if (res->has_header("Retry-After")) {
                try {
                    retry_after = std::stod(res->get_header_value("Retry-After"));
                } catch (const std::exception&) {
                }
            }
            const bool retryable = res->status == 429 || res->status >= 500;
            if (!retryable) {
                throw TransportError(fmt::format("eLink request for {} failed: {}", pmid.value, last_error),
                                     last_status, attempt, false, retry_after);
            }
        }
        if (attempt == config_.max_attempts) break;
        const double backoff = config_.backoff_initial * std::ldexp(1.0, attempt - 1);
        clock_->sleep_until(clock_->now() + std::max(backoff, retry_after.value_or(0.0)));
    }
    throw TransportError(fmt::format("eLink request for {} failed after {} attempts: {}", pmid.value,
                                     config_.max_attempts, last_error),
                         last_status, config_.max_attempts, true, retry_after);
}

NeighborList ElinkClient::fetch(Pmid pmid, std::size_t k) {
    if (k == 0) throw ValidationError("k must be at least 1");
    auto list = parse_elink_response(fetch_raw(pmid), pmid);
    list.short_list = list.neighbors.size() < k;
    if (list.neighbors.size() > k) list.neighbors.resize(k);
    return list;
}

NeighborList PmraProvider::neighbors(const Document& query, std::size_t k) { return client_->fetch(query.pmid, k); }

ScoreNormalizer::ScoreNormalizer(double min, double max) : min_(min), max_(max) {
    if (!std::isfinite(min) || !std::isfinite(max) || !(max > min)) {
        throw ValidationError("score normalization needs a non-degenerate finite range");
    }
}

ScoreNormalizer ScoreNormalizer::fit(std::span<const double> population) {
    if (population.empty()) throw ValidationError("score normalization needs a non-empty population");
    const auto [lo, hi] = std::minmax_element(population.begin(), population.end());
    return ScoreNormalizer(*lo, *hi);
}

std::vector<double> normalize_scores(std::span<const double> scores) {
    const auto n = ScoreNormalizer::fit(scores);
    std::vector<double> out;
    out.reserve(scores.size());
    for (const double s : scores) out.push_back(n(s));
    return out;
}

}  // namespace pubvec::pmra
