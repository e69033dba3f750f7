#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace pubvec::embedding {

enum class Architecture : std::uint8_t { pv_dbow = 0, pv_dm = 1 };
enum class OutputLayer : std::uint8_t { negative_sampling = 0, hierarchical_softmax = 1 };

/// Training configuration. The first six fields are the tuned ones; the
/// rest are fixed settings with conventional defaults.
struct HyperParams {
    Architecture dm = Architecture::pv_dbow;
    std::uint32_t vector_size = 100;
    double sample = 1e-4;  // subsampling threshold; 0 disables
    double alpha = 0.025;  // initial learning rate
    std::uint32_t window = 5;
    OutputLayer hs = OutputLayer::negative_sampling;

    std::uint32_t epochs = 10;
    std::uint32_t negative = 5;  // noise words per target when hs is off
    std::uint32_t min_count = 5;
    std::uint64_t seed = 1;
    double min_alpha_ratio = 1e-4;  // final learning rate = alpha * ratio

    /// Throws ValidationError naming the offending field.
    void validate() const;

    /// "dm=0 vector_size=512 sample=0.0001 alpha=0.01 window=9 hs=1 ..."
    std::string describe() const;

    bool operator==(const HyperParams&) const = default;
};

constexpr int to_int(Architecture a) { return static_cast<int>(a); }
constexpr int to_int(OutputLayer o) { return static_cast<int>(o); }
Architecture architecture_from_int(long v);
OutputLayer output_layer_from_int(long v);

/// JSON object with any subset of the HyperParams field names; missing
/// fields keep their defaults. Unknown keys are rejected.
HyperParams parse_hyperparams(const std::string& json_text);  // throws ParseError / ValidationError
HyperParams load_hyperparams(const std::filesystem::path& path);
std::string hyperparams_to_json(const HyperParams& params);

}  // namespace pubvec::embedding
