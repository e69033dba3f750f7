#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pubvec/common.hpp"
#include "pubvec/embedding/hyperparams.hpp"
#include "pubvec/embedding/vocabulary.hpp"
#include "pubvec/neighbors.hpp"

namespace pubvec::embedding {

struct TrainingDocument {
    Pmid id;
    std::vector<std::string> tokens;
};

struct TrainOptions {
    unsigned workers = 1;  // more than one trades determinism for speed
    std::function<void(std::uint32_t epoch, double mean_loss)> on_epoch;
};

struct TrainingReport {
    std::vector<double> epoch_mean_loss;  // per prediction
    std::uint64_t corpus_words = 0;       // in-vocabulary tokens per epoch
};

/// A trained paragraph-vector model: vocabulary, word, document and
/// output matrices, all row-major float32.
class EmbeddingModel {
public:
    EmbeddingModel() = default;

    const HyperParams& params() const { return params_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    std::size_t dimension() const { return params_.vector_size; }
    std::size_t document_count() const { return doc_ids_.size(); }

    std::optional<std::size_t> document_row(Pmid id) const;
    Pmid document_id(std::size_t row) const { return doc_ids_[row]; }
    const std::vector<Pmid>& document_ids() const { return doc_ids_; }
    std::span<const float> document_vector(std::size_t row) const;
    std::span<const float> word_vector(std::uint32_t index) const;

    const std::vector<float>& word_matrix() const { return words_; }
    const std::vector<float>& document_matrix() const { return docs_; }
    const std::vector<float>& output_matrix() const { return outputs_; }
    const TrainingReport& report() const { return report_; }

    /// L2 norm of each document row, computed once for ranking.
    double document_norm(std::size_t row) const { return doc_norms_[row]; }

private:
    friend EmbeddingModel train(std::span<const TrainingDocument>, const HyperParams&, const TrainOptions&);
    friend EmbeddingModel load_model(const std::filesystem::path&);
    void finish();

    HyperParams params_;
    Vocabulary vocab_;
    std::vector<Pmid> doc_ids_;
    std::unordered_map<Pmid, std::size_t> doc_rows_;
    std::vector<float> words_;
    std::vector<float> docs_;
    std::vector<float> outputs_;
    std::vector<double> doc_norms_;
    TrainingReport report_;
};

/// Trains document and word vectors with SGD. Learning rate decays
/// linearly from alpha to alpha * min_alpha_ratio over all epochs.
/// Deterministic for a given seed when workers == 1.
EmbeddingModel train(std::span<const TrainingDocument> corpus, const HyperParams& params,
                     const TrainOptions& options = {});

/// Learns a vector for unseen text against the frozen model. Unknown
/// tokens are dropped; throws ValidationError if none remain.
std::vector<float> infer_vector(const EmbeddingModel& model, std::span<const std::string> tokens,
                                std::optional<std::uint32_t> epochs = std::nullopt, std::uint64_t seed = 0);

double l2_norm(std::span<const float> v);

/// Cosine similarity in double precision. Throws ValidationError on
/// dimension mismatch or a zero vector.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Exhaustive top-k by cosine against all document vectors. Ties keep
/// model row order. Sets short_list when fewer than k remain.
NeighborList top_k_neighbors(const EmbeddingModel& model, std::span<const float> query, std::size_t k,
                             const std::unordered_set<Pmid>& exclude = {});

void save_model(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_model(const std::filesystem::path& path);  // throws ParseError

Source source_of(const HyperParams& params);

/// Neighbours from a trained model. Documents the model was trained on use
/// their stored vector; anything else is inferred from title and abstract.
/// The query itself is never returned.
class EmbeddingProvider final : public NeighborProvider {
public:
    explicit EmbeddingProvider(std::shared_ptr<const EmbeddingModel> model,
                               std::optional<std::uint32_t> infer_epochs = std::nullopt, std::uint64_t seed = 0);

    Source source() const override { return source_of(model_->params()); }
    NeighborList neighbors(const Document& query, std::size_t k) override;

    /// Neighbours of free text (no document id to exclude).
    NeighborList neighbors_of_text(const std::string& text, std::size_t k) const;

    const EmbeddingModel& model() const { return *model_; }

private:
    std::shared_ptr<const EmbeddingModel> model_;
    std::optional<std::uint32_t> infer_epochs_;
    std::uint64_t seed_;
};

}  // namespace pubvec::embedding
