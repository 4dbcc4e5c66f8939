#include "prune_ast/config.hpp"

#include <vector>

#include "prune_ast/error.hpp"

namespace prune_ast {

std::string_view to_string(Aggregation a) noexcept {
    return a == Aggregation::cls ? "cls" : "mean";
}

Aggregation parse_aggregation(std::string_view s) {
    if (s == "cls") return Aggregation::cls;
    if (s == "mean" || s == "mean-pooling" || s == "mp") return Aggregation::mean_pooling;
    fail(Errc::config, "aggregation must be 'cls' or 'mean', got '" + std::string(s) + "'");
}

ModelConfig ModelConfig::vit_base(Aggregation agg) {
    ModelConfig c;
    c.depth = 12;
    c.dim = 768;
    c.heads = 12;
    c.num_classes = 527;
    c.aggregation = agg;
    return c;
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.depth = 6;
    c.dim = 64;
    c.heads = 4;
    return c;
}

void ModelConfig::validate() const {
    std::vector<std::string> problems;
    if (depth < 1) problems.emplace_back("model.depth must be >= 1");
    if (dim < 1) problems.emplace_back("model.dim must be >= 1");
    if (heads < 1 || (dim % heads) != 0) problems.emplace_back("model.heads must divide model.dim");
    if (mlp_ratio < 1) problems.emplace_back("model.mlp_ratio must be >= 1");
    if (patch_dim != 256) problems.emplace_back("model.patch_dim must be 256 (16x16 patches)");
    if (num_classes < 1) problems.emplace_back("model.num_classes must be >= 1");
    if (max_tokens < 1) problems.emplace_back("model.max_tokens must be >= 1");
    if (!(ln_eps > 0.0f)) problems.emplace_back("model.ln_eps must be positive");
    if (problems.empty()) return;
    std::string msg = "invalid model config:";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(Errc::config, msg);
}

}  // namespace prune_ast
