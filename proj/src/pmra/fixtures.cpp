#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>

#include "pubvec/pmra.hpp"
#include "pubvec/textproc.hpp"

namespace pubvec::pmra {

std::string render_elink_response(Pmid query, std::span<const Neighbor> links) {
    std::string out =
        "<?xml version=\"1.0\" encoding=\"UTF-8\" ?>\n"
        "<!DOCTYPE eLinkResult PUBLIC \"-//NLM//DTD elink 20101123//EN\" "
        "\"https://eutils.ncbi.nlm.nih.gov/eutils/dtd/20101123/elink.dtd\">\n"
        "<eLinkResult>\n  <LinkSet>\n    <DbFrom>pubmed</DbFrom>\n";
    out += fmt::format("    <IdList>\n      <Id>{}</Id>\n    </IdList>\n", query.value);
    out += "    <LinkSetDb>\n      <DbTo>pubmed</DbTo>\n      <LinkName>pubmed_pubmed</LinkName>\n";
    const double top = links.empty() ? 1.0 : links.front().score;
    out += fmt::format("      <Link>\n        <Id>{}</Id>\n        <Score>{:.0f}</Score>\n      </Link>\n", query.value,
                       std::max(top, 1.0) * 4.0);
    for (const auto& n : links) {
        out += fmt::format("      <Link>\n        <Id>{}</Id>\n        <Score>{:.0f}</Score>\n      </Link>\n",
                           n.id.value, n.score);
    }
    out += "    </LinkSetDb>\n  </LinkSet>\n</eLinkResult>\n";
    return out;
}

namespace {

double jaccard(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t common = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++common;
            ++i;
            ++j;
        }
    }
    return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

struct Interner {
    std::unordered_map<std::string, std::uint32_t> ids;

    std::vector<std::uint32_t> set_of(const std::vector<std::string>& words) {
        std::vector<std::uint32_t> out;
        for (const auto& w : words) out.push_back(ids.emplace(w, static_cast<std::uint32_t>(ids.size())).first->second);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

}  // namespace

std::size_t write_synthetic_fixtures(std::span<const Document> docs, const std::filesystem::path& dir, std::size_t k,
                                     double min_score, double max_score) {
    if (k == 0) throw ValidationError("fixture neighbours need k >= 1");
    if (!(max_score > min_score)) throw ValidationError("fixture score range is empty");
    const auto& stop = textproc::StopwordList::english();
    Interner descriptors;
    Interner tokens;
    std::vector<std::vector<std::uint32_t>> desc_sets;
    std::vector<std::vector<std::uint32_t>> token_sets;
    for (const auto& d : docs) {
        desc_sets.push_back(descriptors.set_of(descriptor_labels(d)));
        std::vector<std::string> kept;
        for (auto& t : normalize_document(d)) {
            if (!stop.contains(t)) kept.push_back(std::move(t));
        }
        token_sets.push_back(tokens.set_of(kept));
    }

    std::filesystem::create_directories(dir);
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t q = 0; q < docs.size(); ++q) {
        scored.clear();
        for (std::size_t c = 0; c < docs.size(); ++c) {
            if (c == q || docs[c].pmid == docs[q].pmid) continue;
            const double sim = 0.7 * jaccard(desc_sets[q], desc_sets[c]) + 0.3 * jaccard(token_sets[q], token_sets[c]);
            scored.emplace_back(sim, c);
        }
        const auto n = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                          [&](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return docs[a.second].pmid < docs[b.second].pmid;
                          });
        std::vector<Neighbor> links;
        for (std::size_t i = 0; i < n; ++i) {
            links.push_back({docs[scored[i].second].pmid, std::round(min_score + (max_score - min_score) * scored[i].first)});
        }
        std::ofstream out(dir / (to_string(docs[q].pmid) + ".xml"), std::ios::binary | std::ios::trunc);
        out << render_elink_response(docs[q].pmid, links);
        if (!out) throw Error("cannot write fixture for " + to_string(docs[q].pmid));
    }
    return docs.size();
}

}  // namespace pubvec::pmra
