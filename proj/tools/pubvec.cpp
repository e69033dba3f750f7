// pubvec: command-line front end over the library and the HTTP service.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>

#include "pubvec/agreement.hpp"
#include "pubvec/embedding/model.hpp"
#include "pubvec/gridsearch.hpp"
#include "pubvec/pmra.hpp"
#include "pubvec/service.hpp"
#include "pubvec/store.hpp"
#include "pubvec/synth.hpp"

using namespace pubvec;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::optional<fs::path> config_file;
    std::optional<fs::path> data_dir;
    std::optional<fs::path> store;
    std::optional<std::uint64_t> seed;
};

service::ServiceConfig resolve(const Globals& g) {
    auto c = service::load_config(g.config_file);
    if (g.data_dir) c.data_dir = *g.data_dir;
    if (g.store) c.store_dir = *g.store;
    if (g.seed) c.seed = *g.seed;
    return c;
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    return out;
}

void use_model_file(service::Service& svc, const fs::path& path) {
    auto model = std::make_shared<const embedding::EmbeddingModel>(embedding::load_model(path));
    const auto source = embedding::source_of(model->params());
    svc.set_provider(source, std::make_shared<embedding::EmbeddingProvider>(model, svc.config().infer_epochs,
                                                                            svc.config().seed));
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Related-article search with paragraph vectors, pmra comparison and blind rating sessions"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_file, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--data-dir", g.data_dir, "Data directory (overrides config and PUBVEC_DATA_DIR)");
    app.add_option("--store", g.store, "Document store directory (default <data-dir>/store)");
    app.add_option("--seed", g.seed, "Default seed");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Parse MEDLINE XML into the store and write the train/test split");
    std::vector<fs::path> inputs;
    double test_fraction = 0.01;
    unsigned ingest_workers = 1;
    ingest->add_option("--in", inputs, "MEDLINE XML files (.xml or .xml.gz)")->required()->check(CLI::ExistingFile);
    ingest->add_option("--test-fraction", test_fraction, "Held-out share")->check(CLI::Range(0.0, 1.0));
    ingest->add_option("--workers", ingest_workers, "Parallel parsers")->check(CLI::PositiveNumber);

    // train
    auto* train = app.add_subcommand("train", "Train a paragraph-vector model on the training split");
    fs::path params_file;
    std::optional<fs::path> model_out;
    bool all_docs = false;
    unsigned train_workers = 1;
    train->add_option("--params", params_file, "Hyperparameter JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--out", model_out, "Model file (default <data-dir>/models/<arch>.model)");
    train->add_flag("--all-docs", all_docs, "Include the test split");
    train->add_option("--workers", train_workers, "Training threads; more than 1 is not deterministic")
        ->check(CLI::PositiveNumber);

    // grid-search
    auto* grid = app.add_subcommand("grid-search", "Score every hyperparameter combination by MeSH overlap");
    fs::path grid_file;
    gridsearch::GridOptions grid_opts;
    std::optional<fs::path> grid_out;
    grid->add_option("--grid", grid_file, "Grid JSON")->required()->check(CLI::ExistingFile);
    grid->add_option("--sample", grid_opts.sample_size, "Documents sampled from the store");
    grid->add_option("--workers", grid_opts.workers, "Combinations trained in parallel")->check(CLI::PositiveNumber);
    grid->add_option("--k", grid_opts.k, "Neighbours scored per query");
    grid->add_option("--out", grid_out, "TSV output (default stdout)");

    // related
    auto* related = app.add_subcommand("related", "Nearest articles for a stored PMID or free text");
    std::optional<std::uint64_t> rel_id;
    std::optional<std::string> rel_text;
    std::string rel_provider = "pv-dbow";
    std::size_t rel_k = 10;
    std::optional<fs::path> rel_model;
    auto* id_opt = related->add_option("--id", rel_id, "Query PMID");
    related->add_option("--text", rel_text, "Free-text query")->excludes(id_opt);
    related->add_option("--provider", rel_provider, "pmra, pv-dbow or pv-dm");
    related->add_option("--k", rel_k, "Neighbours");
    related->add_option("--model", rel_model, "Model file instead of the data directory's")->check(CLI::ExistingFile);

    // eval
    auto* evalc = app.add_subcommand("eval", "Run one benchmark task over the test split");
    std::string task_name = "length";
    std::string eval_provider = "pv-dbow";
    service::EvalRequest eval_req;
    std::optional<fs::path> eval_model;
    evalc->add_option("--task", task_name, "length, words, stems or mesh")->required();
    evalc->add_option("--provider", eval_provider, "pmra, pv-dbow or pv-dm");
    evalc->add_option("--model", eval_model, "Model file instead of the data directory's")->check(CLI::ExistingFile);
    evalc->add_option("--queries", eval_req.queries, "Limit the number of test queries");
    evalc->add_option("--k", eval_req.k, "Neighbours per query");
    evalc->add_option("--samples", eval_req.samples, "Co-occurrence pairs per (query, neighbour)");

    // pmra
    auto* pmrac = app.add_subcommand("pmra", "Fetch PubMed's related articles for one PMID");
    std::uint64_t pmra_pmid = 0;
    std::size_t pmra_k = 10;
    bool offline = false;
    std::optional<fs::path> fixtures;
    bool raw = false;
    pmrac->add_option("--pmid", pmra_pmid, "Query PMID")->required();
    pmrac->add_option("--k", pmra_k, "Neighbours");
    pmrac->add_flag("--offline", offline, "Fixtures and cache only");
    pmrac->add_option("--fixtures", fixtures, "Fixture directory")->check(CLI::ExistingDirectory);
    pmrac->add_flag("--raw", raw, "Print the response body");

    // session
    auto* session = app.add_subcommand("session", "Blind rating sessions");
    session->require_subcommand(1);
    auto* s_create = session->add_subcommand("create", "Pool pmra and embedding neighbours for random test queries");
    service::SessionRequest s_req;
    std::string s_embedding = "pv-dbow";
    s_create->add_option("--queries", s_req.queries, "Query documents");
    s_create->add_option("--k", s_req.k, "Neighbours per provider");
    s_create->add_option("--embedding", s_embedding, "pv-dbow or pv-dm");
    s_create->add_option("--session-seed", s_req.seed, "Shuffle seed (default: global seed)");
    auto* s_list = session->add_subcommand("list", "List session ids");
    auto* s_show = session->add_subcommand("show", "Print a session with its source map");
    std::string s_id;
    s_show->add_option("id", s_id, "Session id")->required();
    auto* s_rate = session->add_subcommand("rate", "Submit one rating");
    service::RatingSubmission sub;
    s_rate->add_option("id", s_id, "Session id")->required();
    s_rate->add_option("--evaluator", sub.evaluator)->required();
    s_rate->add_option("--query", sub.query)->required();
    s_rate->add_option("--candidate", sub.candidate)->required();
    s_rate->add_option("--relevance", sub.relevance, "0 bad, 1 partial, 2 full")->required();
    s_rate->add_option("--rank", sub.rank, "1 is most relevant")->required();

    // agreement
    auto* agree = app.add_subcommand("agreement", "Kappa, rank concordance and per-model summaries");
    std::optional<std::string> a_session;
    std::optional<fs::path> a_log;
    std::string weighting = "none";
    std::string sampling = "pooled";
    agreement::AgreementOptions a_opts;
    std::optional<fs::path> kappa_tsv;
    auto* session_opt = agree->add_option("--session", a_session, "Session id in the data directory");
    agree->add_option("--log", a_log, "Rating log file")->check(CLI::ExistingFile)->excludes(session_opt);
    agree->add_option("--weighting", weighting, "none, linear or quadratic");
    agree->add_option("--sampling", sampling, "pooled or per-query");
    agree->add_option("--pairs", a_opts.concordance_pairs, "Concordance pairs per evaluator pair");
    agree->add_option("--confidence", a_opts.confidence, "Interval confidence")->check(CLI::Range(0.0, 1.0));
    agree->add_option("--kappa-tsv", kappa_tsv, "Also write the kappa matrix as TSV");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    std::optional<std::string> host;
    std::optional<int> port;
    serve->add_option("--host", host);
    serve->add_option("--port", port);

    // synth-corpus
    auto* synth_cmd = app.add_subcommand("synth-corpus", "Write a synthetic MEDLINE file for offline runs");
    synth::SynthConfig sc;
    fs::path synth_out;
    std::optional<fs::path> elink_fixtures;
    std::size_t fixture_k = 20;
    synth_cmd->add_option("--out", synth_out, "Output file; .gz compresses")->required();
    synth_cmd->add_option("--documents", sc.documents);
    synth_cmd->add_option("--topics", sc.topics);
    synth_cmd->add_option("--synth-seed", sc.seed);
    synth_cmd->add_option("--inflection", sc.inflection_prob, "Share of content words given an inflected ending")
        ->check(CLI::Range(0.0, 1.0));
    synth_cmd->add_option("--elink-fixtures", elink_fixtures, "Also write offline eLink responses here");
    synth_cmd->add_option("--fixture-k", fixture_k, "Links per fixture");

    CLI11_PARSE(app, argc, argv);

    try {
        auto config = resolve(g);

        if (*ingest) {
            const auto store_dir = service::DataLayout{config.data_dir, config.store_dir.value_or("")}.store();
            const auto report = ingest_files(inputs, store_dir, ingest_workers);
            std::cout << report.to_text();
            DocumentStore store(store_dir);
            const auto split = split_corpus(store.ids(), test_fraction, config.seed);
            store.write_split(split);
            std::cout << fmt::format("train\t{}\ntest\t{}\n", split.train_ids.size(), split.test_ids.size());
            return report.errors.empty() ? 0 : 2;
        }

        if (*train) {
            const service::DataLayout layout{config.data_dir, config.store_dir.value_or("")};
            auto params = embedding::load_hyperparams(params_file);
            if (g.seed) params.seed = *g.seed;
            DocumentStore store(layout.store());
            std::vector<embedding::TrainingDocument> corpus;
            if (all_docs || !store.has_split()) {
                if (!all_docs) std::cerr << "no split in store; training on every document\n";
                for (const auto& d : store.load_all()) corpus.push_back({d.pmid, normalize_document(d)});
            } else {
                for (const auto id : store.split().train_ids) {
                    const auto d = store.get(id);
                    corpus.push_back({d.pmid, normalize_document(d)});
                }
            }
            embedding::TrainOptions opts;
            opts.workers = train_workers;
            opts.on_epoch = [&](std::uint32_t epoch, double loss) {
                std::cerr << fmt::format("epoch {}/{} loss {:.5f}\n", epoch + 1, params.epochs, loss);
            };
            const auto model = embedding::train(corpus, params, opts);
            const auto out = model_out.value_or(layout.model(embedding::source_of(params)));
            if (out.has_parent_path()) fs::create_directories(out.parent_path());
            embedding::save_model(model, out);
            std::cout << fmt::format("documents\t{}\nvocabulary\t{}\nmodel\t{}\n", model.document_count(),
                                     model.vocabulary().size(), out.string());
            return 0;
        }

        if (*grid) {
            const service::DataLayout layout{config.data_dir, config.store_dir.value_or("")};
            const auto spec = gridsearch::GridSpec::load(grid_file);
            grid_opts.seed = config.seed;
            const auto docs = DocumentStore(layout.store()).load_all();
            const auto report = gridsearch::run_grid_search(docs, spec, grid_opts);
            if (grid_out) {
                auto out = open_out(*grid_out);
                gridsearch::write_grid_tsv(report, out);
            } else {
                gridsearch::write_grid_tsv(report, std::cout);
            }
            return 0;
        }

        if (*related) {
            service::Service svc(config);
            const auto source = service::parse_provider(rel_provider);
            if (rel_model) use_model_file(svc, *rel_model);
            service::RelatedResult r;
            if (rel_id) {
                r = svc.related(Pmid(*rel_id), source, rel_k);
            } else if (rel_text) {
                r = svc.related_text(*rel_text, source, rel_k);
            } else {
                throw ValidationError("give --id or --text");
            }
            std::size_t rank = 0;
            for (const auto& it : r.items) std::cout << fmt::format("{}\t{}\t{:.6f}\t{}\n", ++rank, it.pmid.value, it.score, it.title);
            if (r.short_list) std::cerr << "fewer than k neighbours available\n";
            return 0;
        }

        if (*evalc) {
            service::Service svc(config);
            eval_req.task = eval::parse_task(task_name);
            eval_req.source = service::parse_provider(eval_provider);
            if (eval_model) use_model_file(svc, *eval_model);
            const auto out = svc.run_eval(eval_req);
            eval::write_summary(out.series, std::cout);
            std::cout << fmt::format("# series\t{}\n# summary\t{}\n", out.tsv.string(), out.summary_file.string());
            return 0;
        }

        if (*pmrac) {
            auto ec = config.elink;
            if (!ec.cache_dir) ec.cache_dir = config.data_dir / "cache";
            if (offline) ec.offline = true;
            if (fixtures) ec.fixture_dir = *fixtures;
            pmra::ElinkClient client(ec);
            if (raw) {
                std::cout << client.fetch_raw(Pmid(pmra_pmid));
                return 0;
            }
            const auto list = client.fetch(Pmid(pmra_pmid), pmra_k);
            for (const auto& n : list.neighbors) std::cout << fmt::format("{}\t{:.0f}\n", n.id.value, n.score);
            return 0;
        }

        if (*session) {
            service::Service svc(config);
            if (*s_create) {
                s_req.embedding = service::parse_provider(s_embedding);
                const auto s = svc.create_session(s_req);
                std::size_t candidates = 0;
                for (const auto& q : s.queries) candidates += q.candidates.size();
                std::cout << fmt::format("session\t{}\nqueries\t{}\ncandidates\t{}\nunresolved\t{}\n", s.id,
                                         s.queries.size(), candidates, s.unresolved);
            } else if (*s_list) {
                for (const auto& id : svc.sessions().list()) std::cout << id << '\n';
            } else if (*s_show) {
                std::cout << service::session_to_json(svc.sessions().load(s_id)) << '\n';
            } else if (*s_rate) {
                const std::vector<service::RatingSubmission> batch{sub};
                std::cout << agreement::to_json_line(svc.sessions().submit(s_id, batch).front()) << '\n';
            }
            return 0;
        }

        if (*agree) {
            a_opts.weighting = agreement::parse_weighting(weighting);
            a_opts.sampling = agreement::parse_sampling(sampling);
            a_opts.seed = config.seed;
            agreement::AgreementReport report;
            if (a_log) {
                report = agreement::build_report(agreement::read_rating_log(*a_log), a_opts);
            } else if (a_session) {
                service::Service svc(config);
                report = svc.agreement(*a_session, a_opts);
            } else {
                throw ValidationError("give --session or --log");
            }
            agreement::write_report(report, std::cout);
            if (kappa_tsv) {
                auto out = open_out(*kappa_tsv);
                agreement::write_kappa_tsv(report.kappa, out);
            }
            return 0;
        }

        if (*serve) {
            if (host) config.host = *host;
            if (port) config.port = *port;
            service::Service svc(config);
            httplib::Server server;
            const unsigned threads = config.threads;
            server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
            service::install_routes(server, svc);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << fmt::format("listening on http://{}:{} (data {})\n", config.host, config.port,
                                     config.data_dir.string());
            if (!server.listen(config.host, config.port)) {
                std::cerr << "cannot listen on " << config.host << ":" << config.port << '\n';
                return 1;
            }
            return 0;
        }

        if (*synth_cmd) {
            if (g.seed && sc.seed == synth::SynthConfig{}.seed) sc.seed = *g.seed;
            const auto corpus = synth::generate_corpus(sc);
            const bool gz = synth_out.extension() == ".gz";
            if (synth_out.has_parent_path()) fs::create_directories(synth_out.parent_path());
            synth::write_medline_file(corpus.documents, synth_out, gz);
            std::cout << fmt::format("documents\t{}\nfile\t{}\n", corpus.documents.size(), synth_out.string());
            if (elink_fixtures) {
                const auto eligible = filter_eligible(corpus.documents);
                const auto n = pmra::write_synthetic_fixtures(eligible, *elink_fixtures, fixture_k, config.pmra_min,
                                                              config.pmra_max);
                std::cout << fmt::format("fixtures\t{}\n", n);
            }
            return 0;
        }
    } catch (const NotFoundError& e) {
        std::cerr << "not found: " << e.what() << '\n';
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "invalid: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
