#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pubvec/service.hpp"

// Response schemas for the evaluator-facing endpoints, shared by the unit
// and acceptance tests.
namespace blind {

using nlohmann::json;

// Minimal structural schema: {"type", "properties", "required", "items"}.
// Objects allow no keys beyond "properties".
inline void check_schema(const json& schema, const json& value, const std::string& path, std::vector<std::string>& errors) {
    const auto type = schema.at("type").get<std::string>();
    const bool ok = (type == "object" && value.is_object()) || (type == "array" && value.is_array()) ||
                    (type == "string" && value.is_string()) || (type == "integer" && value.is_number_integer()) ||
                    (type == "number" && value.is_number()) || (type == "boolean" && value.is_boolean()) ||
                    (type == "nullable_object" && (value.is_null() || value.is_object()));
    if (!ok) {
        errors.push_back(path + ": expected " + type);
        return;
    }
    if (value.is_object()) {
        const auto& props = schema.at("properties");
        for (const auto& [k, v] : value.items()) {
            if (!props.contains(k)) {
                errors.push_back(path + ": unexpected key '" + k + "'");
            } else {
                check_schema(props.at(k), v, path + "." + k, errors);
            }
        }
        for (const auto& r : schema.value("required", json::array())) {
            if (!value.contains(r.get<std::string>())) errors.push_back(path + ": missing '" + r.get<std::string>() + "'");
        }
    }
    if (value.is_array() && schema.contains("items")) {
        for (std::size_t i = 0; i < value.size(); ++i) check_schema(schema.at("items"), value[i], path + "[" + std::to_string(i) + "]", errors);
    }
}

inline json obj(json props, std::vector<std::string> required) {
    return {{"type", "object"}, {"properties", std::move(props)}, {"required", required}};
}
inline json arr(json items) { return {{"type", "array"}, {"items", std::move(items)}}; }
inline json ty(const char* t) { return {{"type", t}}; }

inline const json kRating = obj({{"candidate", ty("string")}, {"relevance", ty("integer")}, {"rank", ty("integer")}},
                         {"candidate", "relevance", "rank"});

inline const json kSessionSchema = obj(
    {{"session", ty("string")},
     {"status", ty("string")},
     {"evaluators", arr(ty("string"))},
     {"queries", arr(obj({{"query", ty("string")},
                          {"title", ty("string")},
                          {"abstract", ty("string")},
                          {"candidates", ty("integer")},
                          {"complete", arr(ty("string"))}},
                         {"query", "title", "abstract", "candidates", "complete"}))}},
    {"session", "status", "evaluators", "queries"});

inline const json kCandidatesSchema = obj({{"session", ty("string")},
                                    {"query", ty("string")},
                                    {"title", ty("string")},
                                    {"abstract", ty("string")},
                                    {"candidates", arr(obj({{"candidate", ty("string")}, {"title", ty("string")}, {"abstract", ty("string")}},
                                                           {"candidate", "title", "abstract"}))},
                                    {"ratings", arr(kRating)}},
                                   {"session", "query", "title", "abstract", "candidates", "ratings"});

inline const json kStoredSchema = obj({{"stored", arr(obj({{"evaluator", ty("string")},
                                                    {"query", ty("string")},
                                                    {"candidate", ty("string")},
                                                    {"relevance", ty("integer")},
                                                    {"rank", ty("integer")}},
                                                   {"evaluator", "query", "candidate", "relevance", "rank"}))}},
                               {"stored"});

inline const json kAgreementSchema = obj({{"evaluators", arr(ty("string"))},
                                   {"kappa", arr(arr(ty("number")))},
                                   {"kappa_mean", ty("number")},
                                   {"items", ty("integer")},
                                   {"weighting", ty("string")},
                                   {"sampling", ty("string")},
                                   {"concordance_pairs", ty("integer")},
                                   {"seed", ty("integer")},
                                   {"concordance", arr(obj({{"a", ty("string")}, {"b", ty("string")}, {"rate", ty("number")}, {"pairs", ty("integer")}},
                                                           {"a", "b", "rate", "pairs"}))},
                                   {"interval", ty("nullable_object")}},
                                  {"evaluators", "kappa", "kappa_mean", "concordance", "interval"});

// Schema violations plus anything that could unblind an evaluator:
// source names anywhere in the body, or any PMID of the session.
inline std::vector<std::string> violations(const json& schema, const std::string& body,
                                           const pubvec::service::RatingSession& s) {
    std::vector<std::string> errors;
    json value;
    try {
        value = json::parse(body);
    } catch (const json::exception& e) {
        return {std::string("not JSON: ") + e.what()};
    }
    check_schema(schema, value, "$", errors);
    for (const char* name : {"pmra", "pv_dbow", "pv_dm", "pv-dbow", "pv-dm", "source", "provider", "pmid"}) {
        if (body.find(name) != std::string::npos) errors.push_back(std::string("body mentions '") + name + "'");
    }
    for (const auto& q : s.queries) {
        if (body.find(to_string(q.pmid)) != std::string::npos) errors.push_back("query PMID " + to_string(q.pmid));
        for (const auto& c : q.candidates) {
            if (body.find(to_string(c.pmid)) != std::string::npos) errors.push_back("candidate PMID " + to_string(c.pmid));
        }
    }
    return errors;
}

}  // namespace blind
