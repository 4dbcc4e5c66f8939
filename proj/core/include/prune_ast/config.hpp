#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace prune_ast {

enum class Aggregation { mean_pooling, cls };

std::string_view to_string(Aggregation a) noexcept;
Aggregation parse_aggregation(std::string_view s);

struct ModelConfig {
    std::size_t depth = 12;
    std::size_t dim = 64;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    std::size_t patch_dim = 256;
    std::size_t num_classes = 10;
    /// Rows of the learned positional table; inputs may not exceed this token count.
    std::size_t max_tokens = 512;
    Aggregation aggregation = Aggregation::mean_pooling;
    float ln_eps = 1e-6f;

    std::size_t head_dim() const noexcept { return dim / heads; }
    std::size_t mlp_hidden() const noexcept { return dim * mlp_ratio; }

    /// depth 12, D 768, H 12, AudioSet's 527 classes.
    static ModelConfig vit_base(Aggregation agg = Aggregation::cls);
    /// depth 6, D 64, H 4.
    static ModelConfig toy();

    /// Throws Error(config) naming every violated field.
    void validate() const;
};

}  // namespace prune_ast
