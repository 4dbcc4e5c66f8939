#include "prune_ast/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>

#include "prune_ast/error.hpp"

namespace prune_ast {

namespace {

constexpr std::size_t kHeaderBytes = 12;
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

class Reader {
public:
    explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::span<const unsigned char> take(std::size_t n, const char* what) {
        need(n, what);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

private:
    void need(std::size_t n, const char* what) const {
        if (n > remaining()) {
            fail(Errc::truncated, std::string("weight file truncated while reading ") + what);
        }
    }

    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

std::string dims_string(const std::vector<std::size_t>& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

enum class InitKind { trunc_normal, zeros, ones };

InitKind init_kind(const std::string& name) {
    auto ends_with = [&](std::string_view suffix) {
        return name.size() >= suffix.size() &&
               name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".bias")) return InitKind::zeros;
    if (name.find("norm") != std::string::npos && ends_with(".weight")) return InitKind::ones;
    return InitKind::trunc_normal;
}

const Tensor& get(const TensorMap& t, const std::string& name) {
    auto it = t.find(name);
    if (it == t.end()) fail(Errc::missing_entry, "weights: missing entry '" + name + "'");
    return it->second;
}

Matrix as_matrix(const TensorMap& t, const std::string& name) {
    const Tensor& x = get(t, name);
    return Matrix(x.dims.at(0), x.dims.at(1), x.data);
}

std::vector<float> as_vector(const TensorMap& t, const std::string& name) {
    return get(t, name).data;
}

}  // namespace

std::size_t Tensor::numel() const noexcept {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<unsigned char> encode_weight_file(const TensorMap& tensors) {
    std::vector<unsigned char> out(kWeightMagic.begin(), kWeightMagic.end());
    put_u32(out, kWeightFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (t.data.size() != t.numel()) {
            fail(Errc::shape_mismatch, "weights: entry '" + name + "' payload does not match dims " +
                                           dims_string(t.dims));
        }
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
        for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

TensorMap decode_weight_file(std::span<const unsigned char> bytes) {
    if (bytes.size() < kHeaderBytes) fail(Errc::truncated, "weight file shorter than its header");
    if (std::memcmp(bytes.data(), kWeightMagic.data(), kWeightMagic.size()) != 0) {
        fail(Errc::bad_magic, "weight file: bad magic (expected TPWT)");
    }
    Reader r(bytes.subspan(4));
    const std::uint32_t version = r.u32("version");
    if (version != kWeightFormatVersion) {
        fail(Errc::version_mismatch, "weight file: version " + std::to_string(version) +
                                         ", expected " + std::to_string(kWeightFormatVersion));
    }
    const std::uint32_t count = r.u32("entry count");
    TensorMap out;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint32_t name_len = r.u32("name length");
        if (name_len == 0) fail(Errc::parse_error, "weight file: empty entry name");
        const auto name_bytes = r.take(name_len, "entry name");
        std::string name(name_bytes.begin(), name_bytes.end());
        const std::uint32_t rank = r.u32("rank");
        if (rank > kMaxRank) {
            fail(Errc::parse_error, "weight file: entry '" + name + "' has rank " +
                                        std::to_string(rank));
        }
        Tensor t;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::size_t dim = r.u32("dims");
            if (dim != 0 && numel > r.remaining() / 4 / dim) {
                fail(Errc::truncated, "weight file: entry '" + name + "' payload exceeds file size");
            }
            numel *= dim;
            t.dims.push_back(dim);
        }
        const auto payload = r.take(numel * 4, "payload");
        t.data.resize(numel);
        for (std::size_t i = 0; i < numel; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[i * 4 + b]) << (8 * b);
            t.data[i] = std::bit_cast<float>(bits);
        }
        if (!out.emplace(std::move(name), std::move(t)).second) {
            fail(Errc::duplicate_entry, "weight file: duplicate entry '" +
                                            std::string(name_bytes.begin(), name_bytes.end()) + "'");
        }
    }
    if (r.remaining() != 0) {
        fail(Errc::trailing_bytes, "weight file: " + std::to_string(r.remaining()) +
                                       " bytes after the last entry");
    }
    return out;
}

void save_weights(const TensorMap& tensors, const std::filesystem::path& path) {
    const auto bytes = encode_weight_file(tensors);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io_failure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::io_failure, "short write to " + path.string());
}

TensorMap read_weight_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_failure, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return decode_weight_file(bytes);
}

std::map<std::string, std::vector<std::size_t>> expected_shapes(const ModelConfig& cfg) {
    const std::size_t d = cfg.dim;
    std::map<std::string, std::vector<std::size_t>> s;
    s["patch_embed.weight"] = {cfg.patch_dim, d};
    s["patch_embed.bias"] = {d};
    s["pos_embed"] = {cfg.max_tokens, d};
    if (cfg.aggregation == Aggregation::cls) {
        s["cls_token"] = {1, d};
        s["cls_pos"] = {1, d};
    }
    for (std::size_t b = 0; b < cfg.depth; ++b) {
        const std::string p = "blocks." + std::to_string(b) + ".";
        s[p + "norm1.weight"] = {d};
        s[p + "norm1.bias"] = {d};
        s[p + "qkv.weight"] = {d, 3 * d};
        s[p + "qkv.bias"] = {3 * d};
        s[p + "proj.weight"] = {d, d};
        s[p + "proj.bias"] = {d};
        s[p + "norm2.weight"] = {d};
        s[p + "norm2.bias"] = {d};
        s[p + "fc1.weight"] = {d, cfg.mlp_hidden()};
        s[p + "fc1.bias"] = {cfg.mlp_hidden()};
        s[p + "fc2.weight"] = {cfg.mlp_hidden(), d};
        s[p + "fc2.bias"] = {d};
    }
    s["norm.weight"] = {d};
    s["norm.bias"] = {d};
    s["head.weight"] = {d, cfg.num_classes};
    s["head.bias"] = {cfg.num_classes};
    return s;
}

void validate_against(const TensorMap& tensors, const ModelConfig& cfg) {
    for (const auto& [name, dims] : expected_shapes(cfg)) {
        const Tensor& t = get(tensors, name);
        if (t.dims != dims) {
            fail(Errc::shape_mismatch, "weights: entry '" + name + "' has dims " +
                                           dims_string(t.dims) + ", expected " + dims_string(dims));
        }
    }
}

Xoshiro256StarStar::Xoshiro256StarStar(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t Xoshiro256StarStar::next() noexcept {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
}

double Xoshiro256StarStar::uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Xoshiro256StarStar::normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Xoshiro256StarStar::truncated_normal(double bound) noexcept {
    for (;;) {
        const double z = normal();
        if (std::abs(z) <= bound) return z;
    }
}

TensorMap random_init(const ModelConfig& cfg, std::uint64_t seed, double sigma) {
    cfg.validate();
    Xoshiro256StarStar rng(seed);
    TensorMap out;
    for (const auto& [name, dims] : expected_shapes(cfg)) {
        Tensor t;
        t.dims = dims;
        t.data.resize(t.numel());
        switch (init_kind(name)) {
            case InitKind::zeros: break;
            case InitKind::ones: std::fill(t.data.begin(), t.data.end(), 1.0f); break;
            case InitKind::trunc_normal:
                for (float& v : t.data) v = static_cast<float>(sigma * rng.truncated_normal(2.0));
                break;
        }
        out.emplace(name, std::move(t));
    }
    return out;
}

VitWeights VitWeights::from_tensors(const TensorMap& t, const ModelConfig& cfg) {
    cfg.validate();
    validate_against(t, cfg);
    VitWeights w;
    w.config = cfg;
    w.patch_w = as_matrix(t, "patch_embed.weight");
    w.patch_b = as_vector(t, "patch_embed.bias");
    w.pos_embed = as_matrix(t, "pos_embed");
    if (cfg.aggregation == Aggregation::cls) {
        w.cls_token = as_vector(t, "cls_token");
        w.cls_pos = as_vector(t, "cls_pos");
    }
    for (std::size_t b = 0; b < cfg.depth; ++b) {
        const std::string p = "blocks." + std::to_string(b) + ".";
        BlockWeights bw;
        bw.norm1_w = as_vector(t, p + "norm1.weight");
        bw.norm1_b = as_vector(t, p + "norm1.bias");
        bw.qkv_w = as_matrix(t, p + "qkv.weight");
        bw.qkv_b = as_vector(t, p + "qkv.bias");
        bw.proj_w = as_matrix(t, p + "proj.weight");
        bw.proj_b = as_vector(t, p + "proj.bias");
        bw.norm2_w = as_vector(t, p + "norm2.weight");
        bw.norm2_b = as_vector(t, p + "norm2.bias");
        bw.fc1_w = as_matrix(t, p + "fc1.weight");
        bw.fc1_b = as_vector(t, p + "fc1.bias");
        bw.fc2_w = as_matrix(t, p + "fc2.weight");
        bw.fc2_b = as_vector(t, p + "fc2.bias");
        w.blocks.push_back(std::move(bw));
    }
    w.norm_w = as_vector(t, "norm.weight");
    w.norm_b = as_vector(t, "norm.bias");
    w.head_w = as_matrix(t, "head.weight");
    w.head_b = as_vector(t, "head.bias");
    return w;
}

VitWeights load_weights(const std::filesystem::path& path, const ModelConfig& cfg) {
    return VitWeights::from_tensors(read_weight_file(path), cfg);
}

}  // namespace prune_ast
