#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pubvec/common.hpp"

namespace pubvec {

struct Document;

/// Where a similarity score came from.
enum class Source { pmra, pv_dbow, pv_dm };

std::string_view source_name(Source s);
Source parse_source(std::string_view name);  // throws ValidationError

struct Neighbor {
    Pmid id;
    double score = 0.0;

    bool operator==(const Neighbor&) const = default;
};

/// Ranked neighbours of one query, best first. `short_list` is set when
/// fewer than the requested k were available.
struct NeighborList {
    Pmid query_id;
    std::vector<Neighbor> neighbors;
    Source source = Source::pmra;
    bool short_list = false;

    bool operator==(const NeighborList&) const = default;
};

/// Anything that can rank related documents for a query document.
class NeighborProvider {
public:
    virtual ~NeighborProvider() = default;
    virtual Source source() const = 0;
    virtual NeighborList neighbors(const Document& query, std::size_t k) = 0;
};

using NeighborProviderPtr = std::shared_ptr<NeighborProvider>;

/// Serves fixed lists keyed by query id, truncated to k. Unknown queries
/// throw NotFoundError.
class ScriptedProvider final : public NeighborProvider {
public:
    ScriptedProvider(Source source, std::unordered_map<Pmid, std::vector<Neighbor>> lists);

    Source source() const override { return source_; }
    NeighborList neighbors(const Document& query, std::size_t k) override;

private:
    Source source_;
    std::unordered_map<Pmid, std::vector<Neighbor>> lists_;
};

}  // namespace pubvec
