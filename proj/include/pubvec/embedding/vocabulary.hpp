#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pubvec/common.hpp"
#include "pubvec/embedding/hyperparams.hpp"

namespace pubvec::embedding {

struct VocabWord {
    std::string word;
    std::uint64_t count = 0;
    std::vector<std::uint32_t> point;  // inner-node rows, root first (hierarchical softmax)
    std::vector<std::uint8_t> code;    // branch bits along the same path
};

/// Words kept after the min_count cut, indexed by descending frequency
/// (ties broken by the word itself). Builds the Huffman tree for
/// hierarchical softmax or the unigram^0.75 noise distribution for
/// negative sampling, depending on the output layer.
class Vocabulary {
public:
    Vocabulary() = default;

    /// Throws ValidationError when nothing survives min_count.
    static Vocabulary build(std::span<const std::vector<std::string>> corpus, std::uint32_t min_count, OutputLayer layer);
    static Vocabulary from_counts(std::vector<std::pair<std::string, std::uint64_t>> counts, std::uint32_t min_count,
                                  OutputLayer layer);

    std::size_t size() const { return words_.size(); }
    OutputLayer layer() const { return layer_; }
    const VocabWord& word(std::uint32_t index) const { return words_[index]; }
    const std::vector<VocabWord>& words() const { return words_; }
    std::optional<std::uint32_t> index_of(std::string_view word) const;

    /// Sum of counts of retained words.
    std::uint64_t total_count() const { return total_; }
    double frequency(std::uint32_t index) const {
        return static_cast<double>(words_[index].count) / static_cast<double>(total_);
    }

    /// In-vocabulary indices of `tokens`, out-of-vocabulary tokens dropped.
    std::vector<std::uint32_t> to_indices(std::span<const std::string> tokens) const;

    /// Cumulative noise distribution (negative sampling only); ends at 1.0.
    const std::vector<double>& noise_cdf() const { return noise_cdf_; }
    std::uint32_t sample_noise(Rng& rng) const;

    /// Rows of the output matrix: |V|-1 inner nodes or |V| word outputs.
    std::size_t output_rows() const;

    bool operator==(const Vocabulary& other) const;

private:
    void build_huffman();
    void build_noise();

    std::vector<VocabWord> words_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::uint64_t total_ = 0;
    OutputLayer layer_ = OutputLayer::negative_sampling;
    std::vector<double> noise_cdf_;
};

/// Probability of keeping an occurrence of a word with corpus frequency
/// fraction `f` under threshold `t`: (sqrt(f/t) + 1) * t/f clipped to
/// [0, 1]. t = 0 disables subsampling.
double subsample_keep_prob(double f, double t);

}  // namespace pubvec::embedding
