#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gembml/config.hpp"
#include "gembml/gaussian.hpp"
#include "gembml/meta.hpp"

namespace gembml {

using nlohmann::json;

inline json to_json(const DiagGaussian& g) {
    return json{{"mean", g.mean}, {"log_var", g.log_var}};
}

inline DiagGaussian diag_gaussian_from_json(const json& j) {
    return DiagGaussian(j.at("mean").get<Vec>(), j.at("log_var").get<Vec>());
}

/// Write-to-temp then rename, so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline void write_checkpoint(const std::filesystem::path& path, int iteration,
                             const MetaParams& theta, const std::string& config_hash,
                             uint64_t seed) {
    json j{{"iteration", iteration},
           {"theta", to_json(theta.theta)},
           {"config_hash", config_hash},
           {"seed", seed}};
    if (theta.fixed_variance) j["fixed_variance"] = *theta.fixed_variance;
    write_file_atomic(path, j.dump(2) + "\n");
}

inline MetaParams read_checkpoint(const std::filesystem::path& path, int* iteration_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    json j;
    in >> j;
    MetaParams p;
    p.theta = diag_gaussian_from_json(j.at("theta"));
    if (j.contains("fixed_variance")) p.fixed_variance = j["fixed_variance"].get<double>();
    if (iteration_out) *iteration_out = j.at("iteration").get<int>();
    return p;
}

}  // namespace gembml
