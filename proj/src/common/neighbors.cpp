#include "pubvec/neighbors.hpp"

#include "pubvec/corpus.hpp"

namespace pubvec {

std::string_view source_name(Source s) {
    switch (s) {
        case Source::pmra: return "pmra";
        case Source::pv_dbow: return "pv_dbow";
        case Source::pv_dm: return "pv_dm";
    }
    return "unknown";
}

Source parse_source(std::string_view name) {
    if (name == "pmra") return Source::pmra;
    if (name == "pv_dbow") return Source::pv_dbow;
    if (name == "pv_dm") return Source::pv_dm;
    throw ValidationError("unknown source: " + std::string(name));
}

ScriptedProvider::ScriptedProvider(Source source, std::unordered_map<Pmid, std::vector<Neighbor>> lists)
    : source_(source), lists_(std::move(lists)) {}

NeighborList ScriptedProvider::neighbors(const Document& query, std::size_t k) {
    const auto it = lists_.find(query.pmid);
    if (it == lists_.end()) throw NotFoundError("no scripted neighbours for " + to_string(query.pmid));
    NeighborList out;
    out.query_id = query.pmid;
    out.source = source_;
    for (const auto& n : it->second) {
        if (out.neighbors.size() == k) break;
        if (n.id != query.pmid) out.neighbors.push_back(n);
    }
    out.short_list = out.neighbors.size() < k;
    return out;
}

}  // namespace pubvec
