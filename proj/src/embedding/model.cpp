#include "pubvec/embedding/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "pubvec/corpus.hpp"
#include "pubvec/embedding/objective.hpp"
#include "pubvec/textproc.hpp"

namespace pubvec::embedding {

namespace {

struct Workspace {
    std::vector<OutputTarget> targets;
    std::vector<float*> inputs;
    std::vector<float> hidden;
    std::vector<float> err;
    std::vector<std::uint32_t> kept;
};

struct StepContext {
    const Vocabulary& vocab;
    const HyperParams& params;
    float* words;  // row-major |V| x d
    MatrixView<float> outputs;
    std::size_t d;
};

struct DocResult {
    double loss = 0.0;
    std::uint64_t predictions = 0;
};

DocResult run_document(const StepContext& c, float* doc_vec, std::span<const std::uint32_t> indices, Rng& rng,
                       SgdSink<float>& sink, Workspace& ws) {
    ws.kept.clear();
    for (const auto idx : indices) {
        const double keep = subsample_keep_prob(c.vocab.frequency(idx), c.params.sample);
        if (keep >= 1.0 || rng.unit() < keep) ws.kept.push_back(idx);
    }

    DocResult result;
    const auto n = ws.kept.size();
    for (std::size_t pos = 0; pos < n; ++pos) {
        const auto target = ws.kept[pos];
        ws.targets.clear();
        append_targets(c.vocab, target, c.params.negative, rng, ws.targets);
        ws.inputs.clear();
        ws.inputs.push_back(doc_vec);
        if (c.params.dm == Architecture::pv_dm) {
            const auto reduced = c.params.window - rng.index(c.params.window);
            const std::size_t lo = pos >= reduced ? pos - reduced : 0;
            const std::size_t hi = std::min(n - 1, pos + reduced);
            for (std::size_t j = lo; j <= hi; ++j) {
                if (j != pos) ws.inputs.push_back(c.words + static_cast<std::size_t>(ws.kept[j]) * c.d);
            }
        }
        result.loss += window_step<float>(ws.inputs, ws.targets, c.outputs, sink, ws.hidden, ws.err);
        ++result.predictions;
    }
    return result;
}

void init_uniform(std::vector<float>& m, std::size_t d, Rng& rng) {
    const double half = 0.5 / static_cast<double>(d);
    for (auto& x : m) x = static_cast<float>(rng.uniform(-half, half));
}

float learning_rate(const HyperParams& p, std::uint64_t done, std::uint64_t total) {
    const double progress = total == 0 ? 0.0 : std::min(1.0, static_cast<double>(done) / static_cast<double>(total));
    return static_cast<float>(p.alpha * (1.0 - (1.0 - p.min_alpha_ratio) * progress));
}

double dot_double(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

}  // namespace

std::optional<std::size_t> EmbeddingModel::document_row(Pmid id) const {
    const auto it = doc_rows_.find(id);
    if (it == doc_rows_.end()) return std::nullopt;
    return it->second;
}

std::span<const float> EmbeddingModel::document_vector(std::size_t row) const {
    return {docs_.data() + row * dimension(), dimension()};
}

std::span<const float> EmbeddingModel::word_vector(std::uint32_t index) const {
    return {words_.data() + static_cast<std::size_t>(index) * dimension(), dimension()};
}

void EmbeddingModel::finish() {
    doc_rows_.clear();
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        if (!doc_rows_.emplace(doc_ids_[i], i).second) {
            throw ValidationError("duplicate document id " + to_string(doc_ids_[i]));
        }
    }
    doc_norms_.assign(doc_ids_.size(), 0.0);
    if (docs_.size() != doc_ids_.size() * dimension()) return;
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) doc_norms_[i] = l2_norm(document_vector(i));
}

EmbeddingModel train(std::span<const TrainingDocument> corpus, const HyperParams& params, const TrainOptions& options) {
    params.validate();
    if (corpus.empty()) throw ValidationError("training corpus is empty");

    std::vector<std::vector<std::string>> texts;
    texts.reserve(corpus.size());
    for (const auto& doc : corpus) texts.push_back(doc.tokens);

    EmbeddingModel model;
    model.params_ = params;
    model.vocab_ = Vocabulary::build(texts, params.min_count, params.hs);
    texts.clear();
    texts.shrink_to_fit();

    std::vector<std::vector<std::uint32_t>> indexed;
    indexed.reserve(corpus.size());
    for (const auto& doc : corpus) {
        model.doc_ids_.push_back(doc.id);
        indexed.push_back(model.vocab_.to_indices(doc.tokens));
        model.report_.corpus_words += indexed.back().size();
    }
    model.finish();  // rejects duplicate ids before any work

    const std::size_t d = params.vector_size;
    const auto& vocab = model.vocab_;
    model.words_.resize(vocab.size() * d);
    model.docs_.resize(corpus.size() * d);
    model.outputs_.assign(vocab.output_rows() * d, 0.0f);
    Rng word_init(mix_seed(params.seed, 1));
    init_uniform(model.words_, d, word_init);
    Rng doc_init(mix_seed(params.seed, 2));
    init_uniform(model.docs_, d, doc_init);

    const StepContext ctx{vocab, params, model.words_.data(),
                          MatrixView<float>{model.outputs_.data(), vocab.output_rows(), d}, d};
    const std::uint64_t total = model.report_.corpus_words * params.epochs;
    std::atomic<std::uint64_t> processed{0};
    const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(corpus.size())));

    for (std::uint32_t epoch = 0; epoch < params.epochs; ++epoch) {
        std::vector<DocResult> partial(workers);
        auto work = [&](unsigned w) {
            Rng rng(mix_seed(params.seed, 1000 + static_cast<std::uint64_t>(epoch) * workers + w));
            Workspace ws;
            SgdSink<float> sink;
            const std::size_t begin = corpus.size() * w / workers;
            const std::size_t end = corpus.size() * (w + 1) / workers;
            for (std::size_t i = begin; i < end; ++i) {
                sink.lr = learning_rate(params, processed.load(std::memory_order_relaxed), total);
                const auto r = run_document(ctx, model.docs_.data() + i * d, indexed[i], rng, sink, ws);
                partial[w].loss += r.loss;
                partial[w].predictions += r.predictions;
                processed.fetch_add(indexed[i].size(), std::memory_order_relaxed);
            }
        };
        if (workers == 1) {
            work(0);
        } else {
            std::vector<std::jthread> threads;
            for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
        }
        DocResult sum;
        for (const auto& p : partial) {
            sum.loss += p.loss;
            sum.predictions += p.predictions;
        }
        const double mean = sum.predictions ? sum.loss / static_cast<double>(sum.predictions) : 0.0;
        model.report_.epoch_mean_loss.push_back(mean);
        if (options.on_epoch) options.on_epoch(epoch, mean);
    }
    model.finish();
    return model;
}

std::vector<float> infer_vector(const EmbeddingModel& model, std::span<const std::string> tokens,
                                std::optional<std::uint32_t> epochs, std::uint64_t seed) {
    const auto& params = model.params();
    const auto& vocab = model.vocabulary();
    const auto indices = vocab.to_indices(tokens);
    if (indices.empty()) throw ValidationError("no in-vocabulary tokens to infer a vector from");
    const std::uint32_t n_epochs = epochs.value_or(params.epochs);
    if (n_epochs == 0) throw ValidationError("inference epochs must be positive");

    std::uint64_t text_hash = 0xcbf29ce484222325ULL;
    for (const auto idx : indices) text_hash = (text_hash ^ idx) * 0x100000001b3ULL;
    Rng rng(mix_seed(seed, text_hash));

    const std::size_t d = model.dimension();
    std::vector<float> vec(d);
    init_uniform(vec, d, rng);

    // The word and output matrices are only read: the sink below freezes them.
    const StepContext ctx{vocab, params, const_cast<float*>(model.word_matrix().data()),
                          MatrixView<float>{const_cast<float*>(model.output_matrix().data()), vocab.output_rows(), d},
                          d};
    SgdSink<float> sink;
    sink.learn_words = false;
    sink.learn_outputs = false;
    Workspace ws;
    const std::uint64_t total = static_cast<std::uint64_t>(indices.size()) * n_epochs;
    for (std::uint32_t e = 0; e < n_epochs; ++e) {
        sink.lr = learning_rate(params, static_cast<std::uint64_t>(e) * indices.size(), total);
        run_document(ctx, vec.data(), indices, rng, sink, ws);
    }
    return vec;
}

double l2_norm(std::span<const float> v) { return std::sqrt(dot_double(v, v)); }

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw ValidationError(fmt::format("dimension mismatch: {} vs {}", a.size(), b.size()));
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw ValidationError("cosine similarity of a zero vector");
    return dot_double(a, b) / (na * nb);
}

NeighborList top_k_neighbors(const EmbeddingModel& model, std::span<const float> query, std::size_t k,
                             const std::unordered_set<Pmid>& exclude) {
    if (query.size() != model.dimension()) {
        throw ValidationError(fmt::format("dimension mismatch: {} vs {}", query.size(), model.dimension()));
    }
    const double qn = l2_norm(query);
    if (qn == 0.0) throw ValidationError("cosine similarity of a zero vector");

    struct Scored {
        double score;
        std::size_t row;
    };
    std::vector<Scored> scored;
    scored.reserve(model.document_count());
    for (std::size_t row = 0; row < model.document_count(); ++row) {
        if (exclude.contains(model.document_id(row))) continue;
        const double dn = model.document_norm(row);
        if (dn == 0.0) continue;
        scored.push_back({dot_double(query, model.document_vector(row)) / (qn * dn), row});
    }
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                      [](const Scored& a, const Scored& b) { return a.score != b.score ? a.score > b.score : a.row < b.row; });

    NeighborList out;
    out.source = source_of(model.params());
    out.short_list = take < k;
    out.neighbors.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.neighbors.push_back({model.document_id(scored[i].row), scored[i].score});
    return out;
}

Source source_of(const HyperParams& params) {
    return params.dm == Architecture::pv_dm ? Source::pv_dm : Source::pv_dbow;
}

EmbeddingProvider::EmbeddingProvider(std::shared_ptr<const EmbeddingModel> model,
                                     std::optional<std::uint32_t> infer_epochs, std::uint64_t seed)
    : model_(std::move(model)), infer_epochs_(infer_epochs), seed_(seed) {
    if (!model_) throw ValidationError("embedding provider needs a model");
}

NeighborList EmbeddingProvider::neighbors(const Document& query, std::size_t k) {
    const std::unordered_set<Pmid> exclude{query.pmid};
    NeighborList out;
    if (const auto row = model_->document_row(query.pmid)) {
        out = top_k_neighbors(*model_, model_->document_vector(*row), k, exclude);
    } else {
        const auto tokens = normalize_document(query);
        const auto vec = infer_vector(*model_, tokens, infer_epochs_, seed_);
        out = top_k_neighbors(*model_, vec, k, exclude);
    }
    out.query_id = query.pmid;
    return out;
}

NeighborList EmbeddingProvider::neighbors_of_text(const std::string& text, std::size_t k) const {
    const auto tokens = textproc::tokenize(text);
    const auto vec = infer_vector(*model_, tokens, infer_epochs_, seed_);
    return top_k_neighbors(*model_, vec, k);
}

}  // namespace pubvec::embedding
