#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prune_ast/config.hpp"
#include "prune_ast/frontend.hpp"
#include "prune_ast/pruning.hpp"

namespace prune_ast::cli {

inline constexpr float kDefaultNormMean = -4.2677f;
inline constexpr float kDefaultNormStd = 4.5690f;

struct RunConfig {
    ModelConfig model;
    PruneConfig prune;
    FrontendConfig frontend;
    float norm_mean = kDefaultNormMean;
    float norm_std = kDefaultNormStd;
    std::uint64_t seed = 0;
    std::vector<std::filesystem::path> inputs;
    std::filesystem::path out_dir = ".";
    std::filesystem::path weights;
    std::size_t jobs = 1;
};

/// Values given on the command line; unset fields fall back to the config file, then defaults.
struct Overrides {
    std::optional<std::string> config_path;
    std::optional<std::string> weights;
    std::optional<double> keep_rate;
    std::optional<std::string> metric;
    std::optional<std::string> prune_blocks;
    std::optional<std::string> aggregation;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::string> out_dir;
};

/// "4,7,10" -> {4, 7, 10}; "" or "none" -> {}.
std::set<std::size_t> parse_block_list(const std::string& text);

/// Config file layout (all sections optional):
///   {"model": {...}, "prune": {"locations":[4,7,10],"keep_rate":0.5,"metric":"attn-mp"},
///    "frontend": {...}, "normalization": {"mean":..., "std":...}, "seed": 0, "jobs": 1,
///    "weights": "...", "out_dir": "..."}
/// A bare prune object ({"locations":..., "keep_rate":..., "metric":...}) is also accepted.
RunConfig resolve_config(const Overrides& o);

struct ValidationNeeds {
    bool weights = false;
    bool inputs = false;
};

/// Collects every violated field before failing with Errc::config.
void validate(const RunConfig& rc, const ValidationNeeds& needs);

nlohmann::json to_json(const RunConfig& rc);

}  // namespace prune_ast::cli
