#include <fstream>

#include <fmt/format.h>

#include "pubvec/service.hpp"
#include "pubvec/textproc.hpp"

namespace pubvec::service {

Service::Service(ServiceConfig config)
    : config_(std::move(config)), layout_{config_.data_dir, config_.store_dir.value_or("")}, sessions_(layout_) {
    if (!config_.elink.cache_dir) config_.elink.cache_dir = layout_.cache();
}

std::shared_ptr<const DocumentIndex> Service::documents() {
    std::lock_guard lock(mutex_);
    if (!docs_) docs_ = std::make_shared<const DocumentIndex>(DocumentStore(layout_.store()).load_index());
    return docs_;
}

std::shared_ptr<const CorpusSplit> Service::split() {
    std::lock_guard lock(mutex_);
    if (!split_) {
        DocumentStore store(layout_.store());
        if (!store.has_split()) throw ValidationError("the store has no train/test split; run ingest first");
        split_ = std::make_shared<const CorpusSplit>(store.split());
    }
    return split_;
}

std::shared_ptr<const embedding::EmbeddingModel> Service::model(Source s) {
    const auto path = layout_.model(s);
    std::lock_guard lock(mutex_);
    auto& m = models_[s];
    if (!m) m = std::make_shared<const embedding::EmbeddingModel>(embedding::load_model(path));
    return m;
}

NeighborProviderPtr Service::provider(Source s) {
    {
        std::lock_guard lock(mutex_);
        if (auto it = providers_.find(s); it != providers_.end()) return it->second;
    }
    NeighborProviderPtr p;
    if (s == Source::pmra) {
        p = std::make_shared<pmra::PmraProvider>(std::make_shared<pmra::ElinkClient>(config_.elink));
    } else {
        p = std::make_shared<embedding::EmbeddingProvider>(model(s), config_.infer_epochs, config_.seed);
    }
    std::lock_guard lock(mutex_);
    return providers_.emplace(s, std::move(p)).first->second;
}

void Service::set_provider(Source s, NeighborProviderPtr provider) {
    std::lock_guard lock(mutex_);
    providers_[s] = std::move(provider);
}

RatingSession Service::create_session(const SessionRequest& request) {
    const auto docs = documents();
    const auto sp = split();
    const DocumentLookup lookup = [docs](Pmid id) { return docs->find(id); };
    auto session = build_session(sp->test_ids, request.queries, request.k, request.seed.value_or(config_.seed),
                                 *provider(request.embedding), *provider(Source::pmra), lookup);
    sessions_.save(session);
    return session;
}

RelatedResult Service::finish_related(const NeighborList& list, Source s) {
    const auto docs = documents();
    RelatedResult out;
    out.source = s;
    out.short_list = list.short_list;
    std::optional<pmra::ScoreNormalizer> norm;
    if (s == Source::pmra) norm.emplace(config_.pmra_min, config_.pmra_max);
    for (const auto& n : list.neighbors) {
        const Document* d = docs->find(n.id);
        out.items.push_back({n.id, norm ? (*norm)(n.score) : n.score, d ? d->title : std::string()});
    }
    return out;
}

RelatedResult Service::related(Pmid id, Source s, std::size_t k) {
    if (k == 0) throw ValidationError("k must be at least 1");
    const auto docs = documents();
    const Document* doc = docs->find(id);
    if (doc == nullptr) throw NotFoundError("document " + to_string(id) + " not in store");
    auto out = finish_related(provider(s)->neighbors(*doc, k), s);
    out.query = id;
    return out;
}

RelatedResult Service::related_text(const std::string& text, Source s, std::size_t k) {
    if (k == 0) throw ValidationError("k must be at least 1");
    if (s == Source::pmra) throw ValidationError("pmra cannot rank free text; query by id");
    const auto p = std::dynamic_pointer_cast<embedding::EmbeddingProvider>(provider(s));
    if (!p) throw ValidationError(fmt::format("provider {} cannot rank free text", source_name(s)));
    return finish_related(p->neighbors_of_text(text, k), s);
}

const eval::CooccurrenceMatrix& Service::matrix(bool stemmed) {
    const auto docs = documents();
    std::lock_guard lock(mutex_);
    auto& m = matrices_[stemmed];
    if (!m) {
        std::vector<std::vector<std::string>> tokens;
        tokens.reserve(docs->size());
        for (const auto& d : docs->documents()) tokens.push_back(normalize_document(d));
        m = std::make_unique<eval::CooccurrenceMatrix>(
            eval::CooccurrenceMatrix::build(tokens, stemmed, textproc::StopwordList::english()));
    }
    return *m;
}

EvalResult Service::run_eval(const EvalRequest& request) {
    const auto docs = documents();
    const auto sp = split();
    auto params = eval::default_task_params(request.task);
    if (request.queries) params.queries = *request.queries;
    if (request.k) params.k = *request.k;
    if (request.samples) params.samples = *request.samples;
    params.seed = request.seed.value_or(config_.seed);

    std::vector<Document> queries;
    const std::size_t n = params.queries ? std::min(params.queries, sp->test_ids.size()) : sp->test_ids.size();
    queries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) queries.push_back(docs->at(sp->test_ids[i]));

    eval::TaskInputs inputs;
    inputs.lookup = [docs](Pmid id) { return docs->find(id); };
    if (request.task == eval::TaskKind::words) inputs.words = &matrix(false);
    if (request.task == eval::TaskKind::stems) inputs.stems = &matrix(true);

    EvalResult out;
    out.series = eval::run_task(request.task, *provider(request.source), queries, inputs, params);
    out.summary = eval::summarize(out.series);
    const auto stem = fmt::format("{}-{}", eval::task_name(request.task), source_name(request.source));
    std::filesystem::create_directories(layout_.eval());
    out.tsv = layout_.eval() / (stem + ".tsv");
    out.summary_file = layout_.eval() / (stem + ".summary.tsv");
    {
        std::ofstream f(out.tsv, std::ios::binary | std::ios::trunc);
        eval::write_series_tsv(out.series, f);
        if (!f) throw Error("cannot write " + out.tsv.string());
    }
    {
        std::ofstream f(out.summary_file, std::ios::binary | std::ios::trunc);
        eval::write_summary(out.series, f);
        if (!f) throw Error("cannot write " + out.summary_file.string());
    }
    return out;
}

agreement::AgreementReport Service::agreement(const std::string& session_id, const agreement::AgreementOptions& options) {
    const auto records = sessions_.ratings(session_id);
    if (records.empty()) throw ValidationError("session " + session_id + " has no ratings yet");
    return agreement::build_report(records, options);
}

}  // namespace pubvec::service
