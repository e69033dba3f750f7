#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pubvec/service.hpp"

namespace pubvec::service {

using nlohmann::json;

std::optional<std::string> process_env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

ServiceConfig parse_config(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what(), e.byte);
    }
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    ServiceConfig c;
    try {
        if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
        if (j.contains("store_dir")) c.store_dir = j.at("store_dir").get<std::string>();
        c.seed = j.value("seed", c.seed);
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.threads = j.value("threads", c.threads);
        if (j.contains("infer_epochs")) c.infer_epochs = j.at("infer_epochs").get<std::uint32_t>();
        if (j.contains("pmra_normalization")) {
            const auto& n = j.at("pmra_normalization");
            c.pmra_min = n.value("min", c.pmra_min);
            c.pmra_max = n.value("max", c.pmra_max);
        }
        if (j.contains("elink")) {
            const auto& e = j.at("elink");
            auto& x = c.elink;
            x.base_url = e.value("base_url", x.base_url);
            x.api_key = e.value("api_key", x.api_key);
            if (e.contains("rate")) x.rate = e.at("rate").get<double>();
            x.max_attempts = e.value("max_attempts", x.max_attempts);
            x.timeout_seconds = e.value("timeout", x.timeout_seconds);
            x.offline = e.value("offline", x.offline);
            if (e.contains("fixture_dir")) x.fixture_dir = e.at("fixture_dir").get<std::string>();
            if (e.contains("cache_dir")) x.cache_dir = e.at("cache_dir").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    if (c.threads == 0) throw ValidationError("config: threads must be positive");
    if (!(c.pmra_max > c.pmra_min)) throw ValidationError("config: pmra_normalization needs max > min");
    return c;
}

namespace {

template <typename T>
T env_number(const std::string& name, const std::string& text) {
    try {
        std::size_t used = 0;
        T v;
        if constexpr (std::is_floating_point_v<T>) {
            v = std::stod(text, &used);
        } else {
            v = std::stoull(text, &used);
        }
        if (used != text.size()) throw std::invalid_argument(name);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(fmt::format("{}: cannot parse '{}'", name, text));
    }
}

}  // namespace

void apply_env(ServiceConfig& config, const EnvLookup& env) {
    if (auto v = env("PUBVEC_DATA_DIR")) config.data_dir = *v;
    if (auto v = env("PUBVEC_SEED")) config.seed = env_number<std::uint64_t>("PUBVEC_SEED", *v);
    if (auto v = env("PUBVEC_ELINK_RATE")) {
        const double rate = env_number<double>("PUBVEC_ELINK_RATE", *v);
        if (!(rate > 0.0)) throw ValidationError("PUBVEC_ELINK_RATE must be positive");
        config.elink.rate = rate;
    }
    if (auto v = env("PUBVEC_ELINK_API_KEY")) config.elink.api_key = *v;
    if (auto v = env("PUBVEC_ELINK_OFFLINE")) config.elink.offline = *v != "0" && *v != "false";
    if (auto v = env("PUBVEC_ELINK_FIXTURES")) config.elink.fixture_dir = *v;
}

ServiceConfig load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
    ServiceConfig c;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw NotFoundError("cannot open config " + file->string());
        std::ostringstream ss;
        ss << in.rdbuf();
        c = parse_config(ss.str());
    }
    apply_env(c, env);
    return c;
}

Source parse_provider(std::string_view name) {
    std::string s(name);
    for (auto& ch : s) {
        if (ch == '-') ch = '_';
    }
    return parse_source(s);
}

std::filesystem::path DataLayout::model(Source s) const {
    if (s == Source::pmra) throw ValidationError("pmra has no local model");
    return models() / (std::string(source_name(s)) + ".model");
}

}  // namespace pubvec::service
