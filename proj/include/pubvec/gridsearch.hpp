#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pubvec/corpus.hpp"
#include "pubvec/embedding/hyperparams.hpp"
#include "pubvec/neighbors.hpp"

namespace pubvec::gridsearch {

using embedding::HyperParams;

/// Candidate values for the six tuned parameters. Everything else comes
/// from `fixed`.
struct GridSpec {
    std::vector<int> dm;
    std::vector<std::uint32_t> vector_size;
    std::vector<double> sample;
    std::vector<double> alpha;
    std::vector<std::uint32_t> window;
    std::vector<int> hs;
    HyperParams fixed;

    void validate() const;  // throws ValidationError
    std::size_t size() const;

    /// {"dm": [...], "vector_size": [...], "sample": [...], "alpha": [...],
    ///  "window": [...], "hs": [...], "fixed": {"epochs": 10, ...}}
    static GridSpec parse(const std::string& json_text);
    static GridSpec load(const std::filesystem::path& path);
};

/// Cartesian product in lexicographic order of the lists as given, dm
/// varying slowest and hs fastest.
std::vector<HyperParams> enumerate_grid(const GridSpec& spec);

struct AccuracyResult {
    double accuracy = 0.0;            // percentage in [0, 100]
    std::size_t pairs = 0;            // (query, neighbour) pairs averaged
    std::size_t scored_queries = 0;
    std::size_t skipped_queries = 0;  // provider failed or returned nothing
    std::size_t unresolved_neighbors = 0;
};

/// Mean over (query, neighbour) pairs of 100 * |desc(Q) & desc(C)| / |desc(Q)|,
/// descriptor labels only. Queries without descriptors are skipped, as are
/// neighbours the lookup cannot resolve.
AccuracyResult mesh_overlap_accuracy(NeighborProvider& provider, std::span<const Document> queries,
                                     const DocumentLookup& lookup, std::size_t k);

struct GridOptions {
    std::size_t sample_size = 100000;
    double train_fraction = 0.85;
    std::size_t k = 10;
    unsigned workers = 1;
    std::uint64_t seed = 1;  // sample, split and model initialisation
};

/// Builds a provider for one parameter combination from the training share.
using ProviderFactory =
    std::function<NeighborProviderPtr(const HyperParams& params, std::span<const Document> train_docs)>;

/// Trains a paragraph-vector model on the training documents.
ProviderFactory embedding_provider_factory();

struct GridResult {
    std::size_t index = 0;
    HyperParams params;
    std::optional<double> accuracy;  // empty when the combination failed
    std::string error;
    AccuracyResult detail;
    double seconds = 0.0;
};

struct GridReport {
    std::vector<GridResult> results;  // in grid order
    std::optional<std::size_t> best_dbow;
    std::optional<std::size_t> best_dm;
    std::size_t sample_size = 0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t k = 0;
    std::uint64_t seed = 0;
};

/// The overall winner fills its architecture's slot; the other slot takes
/// the best combination of the other architecture with the winner's
/// vector_size, or stays empty. Ties go to the earlier grid index.
void select_winners(GridReport& report);

/// Samples `sample_size` documents, splits them train/test, trains and
/// scores every combination (k neighbours, MeSH overlap) in parallel and
/// selects the winners. Failures are recorded and the grid continues.
GridReport run_grid_search(std::span<const Document> corpus, const GridSpec& spec, const GridOptions& options,
                           const ProviderFactory& factory = embedding_provider_factory());

/// One TSV row per combination after a '#' metadata header, then a '#'
/// summary block naming the selected pair.
void write_grid_tsv(const GridReport& report, std::ostream& out);

}  // namespace pubvec::gridsearch
