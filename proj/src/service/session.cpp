#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pubvec/service.hpp"

namespace pubvec::service {

using nlohmann::json;
using agreement::RatingRecord;

const SessionQuery& RatingSession::query(std::string_view ref) const {
    for (const auto& q : queries) {
        if (q.ref == ref) return q;
    }
    throw NotFoundError(fmt::format("session {} has no query {}", id, ref));
}

std::string session_to_json(const RatingSession& s) {
    json queries = json::array();
    for (const auto& q : s.queries) {
        json cands = json::array();
        for (const auto& c : q.candidates) {
            json sources = json::array();
            for (const auto src : c.sources) sources.push_back(source_name(src));
            cands.push_back({{"ref", c.ref}, {"pmid", c.pmid.value}, {"sources", sources}});
        }
        queries.push_back({{"ref", q.ref}, {"pmid", q.pmid.value}, {"candidates", cands}});
    }
    const json j{{"id", s.id},
                 {"seed", s.seed},
                 {"k", s.k},
                 {"embedding", source_name(s.embedding)},
                 {"unresolved", s.unresolved},
                 {"queries", queries}};
    return j.dump(1);
}

RatingSession session_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("session: ") + e.what(), e.byte);
    }
    RatingSession s;
    try {
        s.id = j.at("id").get<std::string>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.k = j.at("k").get<std::size_t>();
        s.embedding = parse_source(j.at("embedding").get<std::string>());
        s.unresolved = j.at("unresolved").get<std::size_t>();
        for (const auto& q : j.at("queries")) {
            SessionQuery sq{q.at("ref").get<std::string>(), Pmid(q.at("pmid").get<std::uint64_t>()), {}};
            for (const auto& c : q.at("candidates")) {
                SessionCandidate sc{c.at("ref").get<std::string>(), Pmid(c.at("pmid").get<std::uint64_t>()), {}};
                for (const auto& src : c.at("sources")) sc.sources.push_back(parse_source(src.get<std::string>()));
                sq.candidates.push_back(std::move(sc));
            }
            s.queries.push_back(std::move(sq));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("session: ") + e.what());
    }
    return s;
}

RatingSession build_session(std::span<const Pmid> pool, std::size_t n_queries, std::size_t k, std::uint64_t seed,
                            NeighborProvider& embedding, NeighborProvider& pmra, const DocumentLookup& lookup) {
    if (n_queries == 0 || k == 0) throw ValidationError("a session needs at least one query and k >= 1");
    if (n_queries > pool.size()) {
        throw ValidationError(fmt::format("asked for {} queries but only {} test documents exist", n_queries, pool.size()));
    }
    if (embedding.source() == Source::pmra || pmra.source() != Source::pmra) {
        throw ValidationError("a session pairs one embedding provider with pmra");
    }
    std::vector<Pmid> ids(pool.begin(), pool.end());
    Rng pick(mix_seed(seed, 1));
    for (std::size_t i = 0; i < n_queries; ++i) std::swap(ids[i], ids[i + pick.index(ids.size() - i)]);

    RatingSession s;
    s.seed = seed;
    s.k = k;
    s.embedding = embedding.source();
    std::uint64_t digest = mix_seed(seed, k);
    for (std::size_t qi = 0; qi < n_queries; ++qi) {
        const Document* doc = lookup(ids[qi]);
        if (doc == nullptr) throw NotFoundError("session query " + to_string(ids[qi]) + " not in store");
        SessionQuery q{fmt::format("q{:02d}", qi + 1), doc->pmid, {}};
        std::vector<SessionCandidate> pooled;
        for (NeighborProvider* provider : {&embedding, &pmra}) {
            for (const auto& n : provider->neighbors(*doc, k).neighbors) {
                if (n.id == doc->pmid) continue;
                auto it = std::find_if(pooled.begin(), pooled.end(), [&](const auto& c) { return c.pmid == n.id; });
                if (it != pooled.end()) {
                    it->sources.push_back(provider->source());
                    std::sort(it->sources.begin(), it->sources.end());
                } else if (lookup(n.id) != nullptr) {
                    pooled.push_back({"", n.id, {provider->source()}});
                } else {
                    ++s.unresolved;
                }
            }
        }
        Rng shuffle(mix_seed(seed, 100 + qi));
        for (std::size_t i = pooled.size(); i > 1; --i) std::swap(pooled[i - 1], pooled[shuffle.index(i)]);
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            pooled[i].ref = fmt::format("c{:02d}", i + 1);
            digest = mix_seed(digest, pooled[i].pmid.value);
        }
        digest = mix_seed(digest, doc->pmid.value);
        q.candidates = std::move(pooled);
        s.queries.push_back(std::move(q));
    }
    s.id = fmt::format("s{:012x}", digest >> 16);
    return s;
}

namespace {

bool valid_id(const std::string& id) {
    return !id.empty() && id.size() <= 64 &&
           std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'; });
}

void require_id(const std::string& id) {
    if (!valid_id(id)) throw NotFoundError("no session " + id);
}

std::optional<std::string> read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const std::filesystem::path& p, const std::string& body) {
    std::filesystem::create_directories(p.parent_path());
    const auto tmp = std::filesystem::path(p.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << body;
        if (!out) throw Error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, p);
}

}  // namespace

SessionStore::SessionStore(DataLayout layout) : layout_(std::move(layout)) {}

std::mutex& SessionStore::session_mutex(const std::string& id) {
    std::lock_guard lock(registry_);
    auto& m = locks_[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
}

void SessionStore::save(const RatingSession& session) {
    if (!valid_id(session.id)) throw ValidationError("invalid session id '" + session.id + "'");
    std::lock_guard lock(session_mutex(session.id));
    const auto path = layout_.sessions() / (session.id + ".json");
    if (auto existing = read_text(path)) {
        if (session_from_json(*existing) == session) return;
        throw ValidationError("a different session already uses id " + session.id);
    }
    write_atomic(path, session_to_json(session));
}

RatingSession SessionStore::load(const std::string& id) const {
    require_id(id);
    const auto text = read_text(layout_.sessions() / (id + ".json"));
    if (!text) throw NotFoundError("no session " + id);
    return session_from_json(*text);
}

bool SessionStore::exists(const std::string& id) const {
    return valid_id(id) && std::filesystem::exists(layout_.sessions() / (id + ".json"));
}

std::vector<std::string> SessionStore::list() const {
    std::vector<std::string> out;
    if (!std::filesystem::exists(layout_.sessions())) return out;
    for (const auto& e : std::filesystem::directory_iterator(layout_.sessions())) {
        if (e.path().extension() == ".json") out.push_back(e.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::filesystem::path SessionStore::rating_log(const std::string& session_id) const {
    require_id(session_id);
    return layout_.ratings() / (session_id + ".jsonl");
}

std::vector<RatingRecord> SessionStore::ratings(const std::string& session_id) const {
    const auto path = rating_log(session_id);
    if (!std::filesystem::exists(path)) {
        if (!exists(session_id)) throw NotFoundError("no session " + session_id);
        return {};
    }
    return agreement::read_rating_log(path);
}

std::vector<RatingRecord> SessionStore::submit(const std::string& session_id, std::span<const RatingSubmission> batch) {
    if (batch.empty()) throw ValidationError("no ratings submitted");
    const auto session = load(session_id);
    std::lock_guard lock(session_mutex(session_id));
    auto records = ratings(session_id);

    std::vector<RatingRecord> stored;
    for (const auto& sub : batch) {
        if (sub.evaluator.empty() || sub.evaluator.size() > 64 ||
            sub.evaluator.find_first_of("\n\r\t") != std::string::npos) {
            throw ValidationError("evaluator id must be 1-64 characters without control characters");
        }
        const auto& q = session.query(sub.query);
        const auto c = std::find_if(q.candidates.begin(), q.candidates.end(),
                                    [&](const SessionCandidate& x) { return x.ref == sub.candidate; });
        if (c == q.candidates.end()) {
            throw NotFoundError(fmt::format("query {} has no candidate {}", sub.query, sub.candidate));
        }
        if (sub.relevance < 0 || sub.relevance > 2) {
            throw ValidationError(fmt::format("relevance must be 0, 1 or 2, got {}", sub.relevance));
        }
        if (sub.rank < 1 || static_cast<std::size_t>(sub.rank) > q.candidates.size()) {
            throw ValidationError(fmt::format("rank must lie in 1..{}, got {}", q.candidates.size(), sub.rank));
        }
        RatingRecord r{sub.evaluator, session_id, sub.query, sub.candidate, c->sources, sub.relevance, sub.rank};
        const auto same = std::find_if(records.begin(), records.end(), [&](const RatingRecord& x) {
            return x.evaluator == r.evaluator && x.query == r.query && x.candidate == r.candidate;
        });
        if (same != records.end()) {
            *same = r;
        } else {
            records.push_back(r);
        }
        stored.push_back(std::move(r));
    }

    std::set<std::tuple<std::string, std::string, int>> ranks;
    for (const auto& r : records) {
        if (!ranks.emplace(r.evaluator, r.query, r.rank).second) {
            throw ValidationError(
                fmt::format("evaluator {} already gave rank {} to another candidate of {}", r.evaluator, r.rank, r.query));
        }
    }
    std::ostringstream out;
    agreement::write_rating_log(records, out);
    write_atomic(rating_log(session_id), out.str());
    return stored;
}

}  // namespace pubvec::service
