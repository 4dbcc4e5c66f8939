#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prune_ast/config.hpp"
#include "prune_ast/tensor.hpp"

namespace prune_ast {

inline constexpr std::array<char, 4> kWeightMagic = {'T', 'P', 'W', 'T'};
inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<float> data;

    std::size_t numel() const noexcept;
    bool operator==(const Tensor&) const = default;
};

/// Ordered by name, which is also the on-disk entry order.
using TensorMap = std::map<std::string, Tensor>;

/// Little-endian container:
///   "TPWT" | u32 version | u32 entry count
///   per entry: u32 name length | name bytes | u32 rank | u32 dims[rank] | f32 payload
std::vector<unsigned char> encode_weight_file(const TensorMap& tensors);
TensorMap decode_weight_file(std::span<const unsigned char> bytes);

void save_weights(const TensorMap& tensors, const std::filesystem::path& path);
TensorMap read_weight_file(const std::filesystem::path& path);

/// Name -> dims every model of this config must carry.
std::map<std::string, std::vector<std::size_t>> expected_shapes(const ModelConfig& cfg);

/// Throws missing_entry / shape_mismatch naming the offending tensor.
void validate_against(const TensorMap& tensors, const ModelConfig& cfg);

/// xoshiro256** with splitmix64 seeding, as published by Blackman and Vigna.
class Xoshiro256StarStar {
public:
    explicit Xoshiro256StarStar(std::uint64_t seed);

    std::uint64_t next() noexcept;
    /// 53-bit uniform in [0, 1).
    double uniform() noexcept;
    /// Box-Muller cosine branch; consumes two draws.
    double normal() noexcept;
    /// Standard normal redrawn until |z| <= bound.
    double truncated_normal(double bound) noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
};

/// Projections, positional table and CLS token ~ N(0, sigma^2) clipped at +-2 sigma.
/// Biases are zero, layer-norm scales are one. Tensors are filled in name order.
TensorMap random_init(const ModelConfig& cfg, std::uint64_t seed, double sigma = 0.02);

struct BlockWeights {
    std::vector<float> norm1_w, norm1_b;
    Matrix qkv_w;
    std::vector<float> qkv_b;
    Matrix proj_w;
    std::vector<float> proj_b;
    std::vector<float> norm2_w, norm2_b;
    Matrix fc1_w;
    std::vector<float> fc1_b;
    Matrix fc2_w;
    std::vector<float> fc2_b;
};

/// Typed view of a validated TensorMap. Linear weights are stored (in, out).
struct VitWeights {
    ModelConfig config;
    Matrix patch_w;
    std::vector<float> patch_b;
    Matrix pos_embed;
    std::vector<float> cls_token;
    std::vector<float> cls_pos;
    std::vector<BlockWeights> blocks;
    std::vector<float> norm_w, norm_b;
    Matrix head_w;
    std::vector<float> head_b;

    static VitWeights from_tensors(const TensorMap& tensors, const ModelConfig& cfg);
};

VitWeights load_weights(const std::filesystem::path& path, const ModelConfig& cfg);

}  // namespace prune_ast
