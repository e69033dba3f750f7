#include <map>
#include <set>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pubvec/service.hpp"

namespace pubvec::service {

using nlohmann::json;
using agreement::RatingRecord;

namespace {

json text_of(const Document* d) {
    if (d == nullptr) return {{"title", ""}, {"abstract", ""}};
    return {{"title", d->title}, {"abstract", d->abstract}};
}

json rating_json(const RatingRecord& r) {
    return {{"evaluator", r.evaluator}, {"query", r.query}, {"candidate", r.candidate}, {"relevance", r.relevance},
            {"rank", r.rank}};
}

}  // namespace

std::string session_view_json(const RatingSession& s, std::span<const RatingRecord> ratings, const DocumentLookup& lookup) {
    std::map<std::string, std::map<std::string, std::size_t>> done;  // query -> evaluator -> rated
    std::set<std::string> roster;
    for (const auto& r : ratings) {
        ++done[r.query][r.evaluator];
        roster.insert(r.evaluator);
    }
    json queries = json::array();
    for (const auto& q : s.queries) {
        json complete = json::array();
        for (const auto& [evaluator, count] : done[q.ref]) {
            if (count == q.candidates.size()) complete.push_back(evaluator);
        }
        json item = text_of(lookup(q.pmid));
        item["query"] = q.ref;
        item["candidates"] = q.candidates.size();
        item["complete"] = complete;
        queries.push_back(std::move(item));
    }
    const json j{{"session", s.id}, {"status", "open"}, {"evaluators", roster}, {"queries", queries}};
    return j.dump();
}

std::string candidates_view_json(const RatingSession& s, const SessionQuery& q, const DocumentLookup& lookup,
                                 std::span<const RatingRecord> evaluator_ratings) {
    json cands = json::array();
    for (const auto& c : q.candidates) {
        json item = text_of(lookup(c.pmid));
        item["candidate"] = c.ref;
        cands.push_back(std::move(item));
    }
    json prior = json::array();
    for (const auto& r : evaluator_ratings) {
        if (r.query == q.ref) prior.push_back({{"candidate", r.candidate}, {"relevance", r.relevance}, {"rank", r.rank}});
    }
    json j = text_of(lookup(q.pmid));
    j["session"] = s.id;
    j["query"] = q.ref;
    j["candidates"] = cands;
    j["ratings"] = prior;
    return j.dump();
}

std::string rating_view_json(std::span<const RatingRecord> records) {
    json stored = json::array();
    for (const auto& r : records) stored.push_back(rating_json(r));
    return json{{"stored", stored}}.dump();
}

std::string agreement_view_json(const agreement::AgreementReport& report, bool reveal) {
    json conc = json::array();
    for (const auto& c : report.concordance) conc.push_back({{"a", c.a}, {"b", c.b}, {"rate", c.rate}, {"pairs", c.pairs}});
    json interval = nullptr;
    if (report.interval) {
        const auto& ci = *report.interval;
        interval = {{"mean", ci.mean}, {"sd", ci.sd}, {"lo", ci.lo}, {"hi", ci.hi}, {"n", ci.n}};
    }
    json j{{"evaluators", report.kappa.evaluators},
           {"kappa", report.kappa.values},
           {"kappa_mean", report.kappa.mean},
           {"items", report.kappa.items},
           {"weighting", agreement::weighting_name(report.options.weighting)},
           {"sampling", agreement::sampling_name(report.options.sampling)},
           {"concordance_pairs", report.options.concordance_pairs},
           {"seed", report.options.seed},
           {"concordance", conc},
           {"interval", interval}};
    if (reveal) {
        json models = json::object();
        for (const auto& [s, m] : report.summary) {
            models[std::string(source_name(s))] = {{"bad", m.relevance[0]},
                                                   {"partial", m.relevance[1]},
                                                   {"full", m.relevance[2]},
                                                   {"records", m.records},
                                                   {"mean_rank", m.mean_rank}};
        }
        j["models"] = models;
    }
    return j.dump();
}

namespace {

void reply(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& what) {
    reply(res, status, json{{"error", what}}.dump());
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
        try {
            handler(req, res);
        } catch (const NotFoundError& e) {
            reply_error(res, 404, e.what());
        } catch (const ValidationError& e) {
            reply_error(res, 400, e.what());
        } catch (const ParseError& e) {
            reply_error(res, 400, e.what());
        } catch (const pmra::TransportError& e) {
            reply_error(res, 502, e.what());
        } catch (const json::exception& e) {
            reply_error(res, 400, std::string("bad request body: ") + e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, e.what());
        }
    };
}

json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j;
    try {
        j = json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("request body: ") + e.what(), e.byte);
    }
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
}

template <typename T>
std::optional<T> query_number(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    const auto text = req.get_param_value(name);
    try {
        std::size_t used = 0;
        const auto v = std::stoll(text, &used);
        if (used != text.size() || v < 0) throw std::invalid_argument(name);
        return static_cast<T>(v);
    } catch (const std::exception&) {
        throw ValidationError(fmt::format("parameter {} must be a non-negative integer, got '{}'", name, text));
    }
}

RatingSubmission submission_of(const json& j) {
    RatingSubmission s;
    s.evaluator = j.at("evaluator").get<std::string>();
    s.query = j.at("query").get<std::string>();
    s.candidate = j.at("candidate").get<std::string>();
    s.relevance = j.at("relevance").get<int>();
    s.rank = j.at("rank").get<int>();
    return s;
}

DocumentLookup lookup_of(Service& service) {
    auto docs = service.documents();
    return [docs](Pmid id) { return docs->find(id); };
}

}  // namespace

void install_routes(httplib::Server& server, Service& service) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, 200, R"({"status":"ok"})"); });

    server.Post("/sessions", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                    const auto body = body_of(req);
                    SessionRequest r;
                    r.queries = body.value("queries", r.queries);
                    r.k = body.value("k", r.k);
                    if (body.contains("seed")) r.seed = body.at("seed").get<std::uint64_t>();
                    if (body.contains("embedding")) r.embedding = parse_provider(body.at("embedding").get<std::string>());
                    if (r.embedding == Source::pmra) throw ValidationError("embedding must be pv_dbow or pv_dm");
                    const auto s = service.create_session(r);
                    reply(res, 201, session_view_json(s, {}, lookup_of(service)));
                }));

    server.Get("/sessions/:id", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                   const auto id = req.path_params.at("id");
                   const auto s = service.sessions().load(id);
                   reply(res, 200, session_view_json(s, service.sessions().ratings(id), lookup_of(service)));
               }));

    server.Get("/sessions/:id/queries/:qid/candidates",
               guarded([&service](const httplib::Request& req, httplib::Response& res) {
                   const auto id = req.path_params.at("id");
                   const auto s = service.sessions().load(id);
                   const auto& q = s.query(req.path_params.at("qid"));
                   std::vector<RatingRecord> mine;
                   if (req.has_param("evaluator")) {
                       const auto who = req.get_param_value("evaluator");
                       for (auto& r : service.sessions().ratings(id)) {
                           if (r.evaluator == who) mine.push_back(std::move(r));
                       }
                   }
                   reply(res, 200, candidates_view_json(s, q, lookup_of(service), mine));
               }));

    server.Post("/sessions/:id/ratings", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                    const auto body = body_of(req);
                    std::vector<RatingSubmission> batch;
                    if (body.contains("ratings")) {
                        for (const auto& r : body.at("ratings")) batch.push_back(submission_of(r));
                    } else {
                        batch.push_back(submission_of(body));
                    }
                    const auto stored = service.sessions().submit(req.path_params.at("id"), batch);
                    reply(res, 200, rating_view_json(stored));
                }));

    server.Get("/sessions/:id/agreement", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                   agreement::AgreementOptions o;
                   if (req.has_param("weighting")) o.weighting = agreement::parse_weighting(req.get_param_value("weighting"));
                   if (req.has_param("sampling")) o.sampling = agreement::parse_sampling(req.get_param_value("sampling"));
                   if (auto v = query_number<std::size_t>(req, "pairs")) o.concordance_pairs = *v;
                   o.seed = query_number<std::uint64_t>(req, "seed").value_or(service.config().seed);
                   const bool reveal = req.has_param("reveal") && req.get_param_value("reveal") == "1";
                   reply(res, 200, agreement_view_json(service.agreement(req.path_params.at("id"), o), reveal));
               }));

    server.Get("/related", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                   const auto source = parse_provider(req.has_param("provider") ? req.get_param_value("provider") : "pv_dbow");
                   const auto k = query_number<std::size_t>(req, "k").value_or(10);
                   RelatedResult r;
                   if (req.has_param("id")) {
                       const auto id = query_number<std::uint64_t>(req, "id").value_or(0);
                       if (id == 0) throw ValidationError("id must be a positive PMID");
                       r = service.related(Pmid(id), source, k);
                   } else if (req.has_param("text")) {
                       r = service.related_text(req.get_param_value("text"), source, k);
                   } else {
                       throw ValidationError("give id or text");
                   }
                   json items = json::array();
                   for (const auto& it : r.items) items.push_back({{"pmid", it.pmid.value}, {"score", it.score}, {"title", it.title}});
                   json j{{"provider", source_name(r.source)}, {"k", k}, {"short", r.short_list}, {"neighbors", items}};
                   j["query"] = r.query ? json(r.query->value) : json(nullptr);
                   reply(res, 200, j.dump());
               }));

    server.Post("/eval/:task", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                    const auto body = body_of(req);
                    EvalRequest r;
                    r.task = eval::parse_task(req.path_params.at("task"));
                    r.source = parse_provider(body.value("provider", std::string("pv_dbow")));
                    if (body.contains("queries")) r.queries = body.at("queries").get<std::size_t>();
                    if (body.contains("k")) r.k = body.at("k").get<std::size_t>();
                    if (body.contains("samples")) r.samples = body.at("samples").get<std::size_t>();
                    if (body.contains("seed")) r.seed = body.at("seed").get<std::uint64_t>();
                    const auto out = service.run_eval(r);
                    const auto trend = [](const std::optional<eval::Trend>& t) {
                        return t ? json{{"slope", t->slope}, {"intercept", t->intercept}} : json(nullptr);
                    };
                    const json j{{"task", eval::task_name(r.task)},
                                 {"provider", source_name(r.source)},
                                 {"points", out.summary.points_all},
                                 {"points_filtered", out.summary.points_filtered},
                                 {"failed_queries", out.series.failed_queries},
                                 {"skipped_neighbors", out.series.skipped_neighbors},
                                 {"all", trend(out.summary.all)},
                                 {"filtered", trend(out.summary.filtered)},
                                 {"tsv", out.tsv.string()}};
                    reply(res, 200, j.dump());
                }));
}

}  // namespace pubvec::service
