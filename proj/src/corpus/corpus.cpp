#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "pubvec/corpus.hpp"
#include "pubvec/textproc.hpp"

namespace pubvec {

std::vector<std::string> descriptor_labels(const Document& doc) {
    std::vector<std::string> labels;
    labels.reserve(doc.mesh.size());
    for (const auto& m : doc.mesh) labels.push_back(m.descriptor);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

bool is_eligible(const Document& doc) { return !doc.abstract.empty() && !doc.mesh.empty(); }

std::vector<Document> filter_eligible(std::vector<Document> docs) {
    std::erase_if(docs, [](const Document& d) { return !is_eligible(d); });
    return docs;
}

std::vector<std::string> normalize_document(const Document& doc) {
    auto tokens = textproc::tokenize(doc.title);
    auto body = textproc::tokenize(doc.abstract);
    tokens.insert(tokens.end(), std::make_move_iterator(body.begin()), std::make_move_iterator(body.end()));
    return tokens;
}

CorpusSplit split_corpus(std::span<const Pmid> ids, double test_fraction, std::uint64_t seed) {
    if (ids.empty()) throw ValidationError("split_corpus: empty store");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("split_corpus: test_fraction must be in (0, 1)");

    const std::size_t n = ids.size();
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));

    // Partial Fisher-Yates over positions; the first n_test slots are the test set.
    std::vector<std::size_t> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = i;
    Rng rng(seed);
    for (std::size_t i = 0; i < n_test; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.index(n - i));
        std::swap(positions[i], positions[j]);
    }
    std::vector<bool> is_test(n, false);
    for (std::size_t i = 0; i < n_test; ++i) is_test[positions[i]] = true;

    CorpusSplit split;
    split.test_fraction = test_fraction;
    split.seed = seed;
    split.test_ids.reserve(n_test);
    split.train_ids.reserve(n - n_test);
    for (std::size_t i = 0; i < n; ++i) (is_test[i] ? split.test_ids : split.train_ids).push_back(ids[i]);
    return split;
}

void save_split(const CorpusSplit& split, const std::filesystem::path& path) {
    nlohmann::json j;
    j["test_fraction"] = split.test_fraction;
    j["seed"] = split.seed;
    auto& train = j["train_ids"] = nlohmann::json::array();
    for (auto id : split.train_ids) train.push_back(id.value);
    auto& test = j["test_ids"] = nlohmann::json::array();
    for (auto id : split.test_ids) test.push_back(id.value);
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write " + tmp);
        out << j.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

CorpusSplit load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("no split at " + path.string());
    const auto j = nlohmann::json::parse(in);
    CorpusSplit split;
    split.test_fraction = j.at("test_fraction").get<double>();
    split.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& v : j.at("train_ids")) split.train_ids.emplace_back(v.get<std::uint64_t>());
    for (const auto& v : j.at("test_ids")) split.test_ids.emplace_back(v.get<std::uint64_t>());
    return split;
}

DocumentIndex::DocumentIndex(std::vector<Document> docs) {
    docs_.reserve(docs.size());
    for (auto& d : docs) add(std::move(d));
}

void DocumentIndex::add(Document doc) {
    if (auto it = by_id_.find(doc.pmid); it != by_id_.end()) {
        docs_[it->second] = std::move(doc);
        return;
    }
    by_id_.emplace(doc.pmid, docs_.size());
    docs_.push_back(std::move(doc));
}

const Document* DocumentIndex::find(Pmid id) const {
    const auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

const Document& DocumentIndex::at(Pmid id) const {
    const auto* d = find(id);
    if (d == nullptr) throw NotFoundError("unknown document " + to_string(id));
    return *d;
}

}  // namespace pubvec
