#include "pubvec/embedding/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pubvec/embedding/objective.hpp"

namespace pubvec::embedding {

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> corpus, std::uint32_t min_count,
                             OutputLayer layer) {
    std::unordered_map<std::string, std::uint64_t> counts;
    for (const auto& doc : corpus) {
        for (const auto& tok : doc) ++counts[tok];
    }
    return from_counts({counts.begin(), counts.end()}, min_count, layer);
}

Vocabulary Vocabulary::from_counts(std::vector<std::pair<std::string, std::uint64_t>> counts, std::uint32_t min_count,
                                   OutputLayer layer) {
    std::erase_if(counts, [&](const auto& wc) { return wc.second < min_count; });
    if (counts.empty()) throw ValidationError("vocabulary is empty after applying min_count");
    std::sort(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    Vocabulary v;
    v.layer_ = layer;
    v.words_.reserve(counts.size());
    for (auto& [word, count] : counts) {
        if (v.index_.contains(word)) throw ValidationError("duplicate vocabulary word: " + word);
        v.index_.emplace(word, static_cast<std::uint32_t>(v.words_.size()));
        v.total_ += count;
        v.words_.push_back(VocabWord{std::move(word), count, {}, {}});
    }
    if (layer == OutputLayer::hierarchical_softmax) {
        v.build_huffman();
    } else {
        v.build_noise();
    }
    return v;
}

// Two-queue Huffman construction over counts sorted in descending order:
// leaves are consumed from the tail, merged nodes are created in
// non-decreasing order, so each step picks the two smallest in O(1).
void Vocabulary::build_huffman() {
    const std::size_t n = words_.size();
    if (n < 2) return;
    std::vector<std::uint64_t> count(2 * n, std::numeric_limits<std::uint64_t>::max());
    std::vector<std::size_t> parent(2 * n, 0);
    std::vector<std::uint8_t> binary(2 * n, 0);
    for (std::size_t i = 0; i < n; ++i) count[i] = words_[i].count;

    std::ptrdiff_t leaf = static_cast<std::ptrdiff_t>(n) - 1;
    std::size_t inner = n;
    auto pick = [&] {
        if (leaf >= 0 && count[static_cast<std::size_t>(leaf)] < count[inner]) {
            return static_cast<std::size_t>(leaf--);
        }
        return inner++;
    };
    for (std::size_t a = 0; a + 1 < n; ++a) {
        const std::size_t m1 = pick();
        const std::size_t m2 = pick();
        count[n + a] = count[m1] + count[m2];
        parent[m1] = n + a;
        parent[m2] = n + a;
        binary[m2] = 1;
    }

    const std::size_t root = 2 * n - 2;
    for (std::size_t w = 0; w < n; ++w) {
        auto& entry = words_[w];
        entry.code.clear();
        entry.point.clear();
        for (std::size_t node = w; node != root; node = parent[node]) {
            entry.code.push_back(binary[node]);
            entry.point.push_back(static_cast<std::uint32_t>(parent[node] - n));
        }
        std::reverse(entry.code.begin(), entry.code.end());
        std::reverse(entry.point.begin(), entry.point.end());
    }
}

void Vocabulary::build_noise() {
    noise_cdf_.resize(words_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < words_.size(); ++i) {
        acc += std::pow(static_cast<double>(words_[i].count), 0.75);
        noise_cdf_[i] = acc;
    }
    for (auto& c : noise_cdf_) c /= acc;
    noise_cdf_.back() = 1.0;
}

std::optional<std::uint32_t> Vocabulary::index_of(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::uint32_t> Vocabulary::to_indices(std::span<const std::string> tokens) const {
    std::vector<std::uint32_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        const auto it = index_.find(t);
        if (it != index_.end()) out.push_back(it->second);
    }
    return out;
}

std::uint32_t Vocabulary::sample_noise(Rng& rng) const {
    const double u = rng.unit();
    const auto it = std::upper_bound(noise_cdf_.begin(), noise_cdf_.end(), u);
    const auto idx = static_cast<std::size_t>(it - noise_cdf_.begin());
    return static_cast<std::uint32_t>(std::min(idx, noise_cdf_.size() - 1));
}

std::size_t Vocabulary::output_rows() const {
    if (layer_ == OutputLayer::hierarchical_softmax) return words_.size() > 1 ? words_.size() - 1 : 0;
    return words_.size();
}

bool Vocabulary::operator==(const Vocabulary& other) const {
    if (layer_ != other.layer_ || total_ != other.total_ || words_.size() != other.words_.size()) return false;
    for (std::size_t i = 0; i < words_.size(); ++i) {
        const auto& a = words_[i];
        const auto& b = other.words_[i];
        if (a.word != b.word || a.count != b.count || a.code != b.code || a.point != b.point) return false;
    }
    return noise_cdf_ == other.noise_cdf_;
}

double subsample_keep_prob(double f, double t) {
    if (t <= 0.0 || f <= 0.0) return 1.0;
    const double p = (std::sqrt(f / t) + 1.0) * (t / f);
    return std::clamp(p, 0.0, 1.0);
}

void append_targets(const Vocabulary& vocab, std::uint32_t word, std::uint32_t negative, Rng& rng,
                    std::vector<OutputTarget>& out) {
    if (vocab.layer() == OutputLayer::hierarchical_softmax) {
        const auto& w = vocab.word(word);
        for (std::size_t i = 0; i < w.point.size(); ++i) {
            out.push_back({w.point[i], static_cast<std::uint8_t>(1 - w.code[i])});
        }
        return;
    }
    out.push_back({word, 1});
    for (std::uint32_t i = 0; i < negative; ++i) {
        const auto noise = vocab.sample_noise(rng);
        if (noise != word) out.push_back({noise, 0});
    }
}

}  // namespace pubvec::embedding
