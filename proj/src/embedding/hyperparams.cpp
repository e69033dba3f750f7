#include "pubvec/embedding/hyperparams.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pubvec/common.hpp"

namespace pubvec::embedding {

namespace {

void require(bool ok, const char* field, const std::string& detail) {
    if (!ok) throw ValidationError(fmt::format("hyperparameter {}: {}", field, detail));
}

}  // namespace

void HyperParams::validate() const {
    require(dm == Architecture::pv_dbow || dm == Architecture::pv_dm, "dm", "must be 0 or 1");
    require(hs == OutputLayer::negative_sampling || hs == OutputLayer::hierarchical_softmax, "hs", "must be 0 or 1");
    require(vector_size > 0, "vector_size", "must be positive");
    require(std::isfinite(sample) && sample >= 0.0, "sample", "must be >= 0");
    require(std::isfinite(alpha) && alpha > 0.0, "alpha", "must be > 0");
    require(window > 0, "window", "must be positive");
    require(epochs > 0, "epochs", "must be positive");
    require(hs == OutputLayer::hierarchical_softmax || negative > 0, "negative",
            "must be positive when hs=0");
    require(min_count > 0, "min_count", "must be positive");
    require(std::isfinite(min_alpha_ratio) && min_alpha_ratio >= 0.0 && min_alpha_ratio <= 1.0, "min_alpha_ratio",
            "must lie in [0, 1]");
}

std::string HyperParams::describe() const {
    return fmt::format("dm={} vector_size={} sample={} alpha={} window={} hs={} epochs={} negative={} min_count={} seed={}",
                       to_int(dm), vector_size, sample, alpha, window, to_int(hs), epochs, negative, min_count, seed);
}

Architecture architecture_from_int(long v) {
    if (v == 0) return Architecture::pv_dbow;
    if (v == 1) return Architecture::pv_dm;
    throw ValidationError(fmt::format("hyperparameter dm: must be 0 or 1, got {}", v));
}

OutputLayer output_layer_from_int(long v) {
    if (v == 0) return OutputLayer::negative_sampling;
    if (v == 1) return OutputLayer::hierarchical_softmax;
    throw ValidationError(fmt::format("hyperparameter hs: must be 0 or 1, got {}", v));
}

HyperParams parse_hyperparams(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("hyperparameters: ") + e.what(), e.byte);
    }
    if (!j.is_object()) throw ValidationError("hyperparameters must be a JSON object");
    static const std::set<std::string> known{"dm",     "vector_size", "sample",    "alpha",    "window",         "hs",
                                             "epochs", "negative",    "min_count", "seed",     "min_alpha_ratio"};
    HyperParams p;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key.starts_with('_')) continue;
            if (!known.contains(key)) throw ValidationError("unknown hyperparameter: " + key);
        }
        if (j.contains("dm")) p.dm = architecture_from_int(j.at("dm").get<long>());
        if (j.contains("hs")) p.hs = output_layer_from_int(j.at("hs").get<long>());
        p.vector_size = j.value("vector_size", p.vector_size);
        p.sample = j.value("sample", p.sample);
        p.alpha = j.value("alpha", p.alpha);
        p.window = j.value("window", p.window);
        p.epochs = j.value("epochs", p.epochs);
        p.negative = j.value("negative", p.negative);
        p.min_count = j.value("min_count", p.min_count);
        p.seed = j.value("seed", p.seed);
        p.min_alpha_ratio = j.value("min_alpha_ratio", p.min_alpha_ratio);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("hyperparameters: ") + e.what());
    }
    p.validate();
    return p;
}

HyperParams load_hyperparams(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open hyperparameter file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_hyperparams(ss.str());
}

std::string hyperparams_to_json(const HyperParams& p) {
    const nlohmann::json j{{"dm", to_int(p.dm)},         {"vector_size", p.vector_size}, {"sample", p.sample},
                           {"alpha", p.alpha},           {"window", p.window},           {"hs", to_int(p.hs)},
                           {"epochs", p.epochs},         {"negative", p.negative},       {"min_count", p.min_count},
                           {"seed", p.seed},             {"min_alpha_ratio", p.min_alpha_ratio}};
    return j.dump(2);
}

}  // namespace pubvec::embedding
