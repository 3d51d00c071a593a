#pragma once

// Network checkpoint files: JSON header with layer dims and activation, then
// the live parameters as flat 64-bit little-endian doubles, layer-major,
// weights (row-major) before bias within each layer.

#include <filesystem>
#include <fstream>

#include "coopnav/binfile.hpp"
#include "coopnav/mlp.hpp"

namespace coopnav {

inline constexpr char kParamsMagic[9] = "CNAVPAR1";
inline constexpr int kParamsVersion = 1;

inline std::string to_string(OutputActivation a) {
    return a == OutputActivation::Logistic ? "logistic" : "identity";
}

inline OutputActivation output_activation_from_string(const std::string& s) {
    if (s == "logistic") return OutputActivation::Logistic;
    if (s == "identity") return OutputActivation::Identity;
    throw FileCorruptError("unknown output activation: " + s);
}

inline void save_params(const std::filesystem::path& path, const MlpSpec& spec,
                        const MlpParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    nlohmann::json header = {
        {"format", "coopnav-params"},
        {"version", kParamsVersion},
        {"layer_dims", {spec.input_dim, spec.hidden1, spec.hidden2, spec.output_dim}},
        {"layers", kNumLayers},
        {"output_activation", to_string(spec.output_activation)},
    };
    binfile::write_header(out, kParamsMagic, header);
    for (int l = 0; l < kNumLayers; ++l) {
        binfile::write_values<double>(out, params.weight[l].data);
        binfile::write_values<double>(out, params.bias[l]);
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct LoadedParams {
    MlpSpec spec;
    MlpParams params;
};

inline LoadedParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileMissingError("cannot open for read: " + path.string());
    nlohmann::json header = binfile::read_header(in, kParamsMagic);
    if (header.value("version", -1) != kParamsVersion)
        throw FileVersionError("unsupported params version in " + path.string());
    auto dims = header.at("layer_dims").get<std::vector<int>>();
    if (dims.size() != 4 || header.value("layers", 0) != kNumLayers)
        throw FileDimensionError("bad layer dims in " + path.string());
    LoadedParams lp;
    lp.spec.input_dim = dims[0];
    lp.spec.hidden1 = dims[1];
    lp.spec.hidden2 = dims[2];
    lp.spec.output_dim = dims[3];
    lp.spec.output_activation =
        output_activation_from_string(header.at("output_activation").get<std::string>());
    lp.params = make_zero_params(lp.spec);
    for (int l = 0; l < kNumLayers; ++l) {
        binfile::read_values<double>(in, lp.params.weight[l].data);
        binfile::read_values<double>(in, std::span<double>(lp.params.bias[l]));
    }
    binfile::expect_eof(in);
    return lp;
}

}  // namespace coopnav
