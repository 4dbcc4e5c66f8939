#include "prune_ast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prune_ast/error.hpp"

namespace prune_ast {

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        fail(Errc::shape_mismatch, "matrix data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_string());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
    return m;
}

std::string Matrix::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        fail(Errc::shape_mismatch,
             "matmul: " + a.shape_string() + " x " + b.shape_string() + " inner dims differ");
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        auto lhs = a.row(i);
        for (std::size_t k = 0; k < inner; ++k) {
            const float s = lhs[k];
            auto rhs = b.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += s * rhs[j];
        }
    }
    return out;
}

Matrix add_row_bias(Matrix a, std::span<const float> bias) {
    if (bias.size() != a.cols()) {
        fail(Errc::shape_mismatch, "bias length " + std::to_string(bias.size()) +
                                       " does not match columns of " + a.shape_string());
    }
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = a.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
    return a;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        fail(Errc::shape_mismatch, "add: " + a.shape_string() + " vs " + b.shape_string());
    }
    Matrix out = a;
    auto dst = out.data();
    auto src = b.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    return out;
}

Matrix softmax_rows(const Matrix& m, float scale) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto src = m.row(r);
        auto dst = out.row(r);
        if (src.empty()) continue;
        float mx = src[0] * scale;
        for (float v : src) mx = std::max(mx, v * scale);
        double sum = 0.0;
        for (std::size_t c = 0; c < src.size(); ++c) {
            const double e = std::exp(static_cast<double>(src[c] * scale - mx));
            dst[c] = static_cast<float>(e);
            sum += e;
        }
        for (std::size_t c = 0; c < src.size(); ++c) {
            dst[c] = static_cast<float>(static_cast<double>(dst[c]) / sum);
        }
    }
    return out;
}

Matrix layer_norm(const Matrix& m, std::span<const float> gamma, std::span<const float> beta,
                  float eps) {
    if (gamma.size() != m.cols() || beta.size() != m.cols()) {
        fail(Errc::shape_mismatch, "layer_norm: gamma/beta length " + std::to_string(gamma.size()) +
                                       "/" + std::to_string(beta.size()) + " vs " +
                                       m.shape_string());
    }
    Matrix out(m.rows(), m.cols());
    const double n = static_cast<double>(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto src = m.row(r);
        auto dst = out.row(r);
        double mean = 0.0;
        for (float v : src) mean += v;
        mean /= n;
        double var = 0.0;
        for (float v : src) var += (v - mean) * (v - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < src.size(); ++c) {
            dst[c] = static_cast<float>((src[c] - mean) * inv * gamma[c] + beta[c]);
        }
    }
    return out;
}

float gelu(float x) {
    const double xd = x;
    return static_cast<float>(0.5 * xd * (1.0 + std::erf(xd / std::sqrt(2.0))));
}

Matrix gelu(const Matrix& m) {
    Matrix out = m;
    for (float& v : out.data()) v = gelu(v);
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
    return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
    Matrix out(indices.size(), m.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= m.rows()) {
            fail(Errc::out_of_range, "gather_rows: index " + std::to_string(indices[i]) +
                                         " out of range for " + m.shape_string());
        }
        std::copy_n(m.row(indices[i]).begin(), m.cols(), out.row(i).begin());
    }
    return out;
}

std::vector<std::size_t> topk_indices(std::span<const float> scores, std::size_t k) {
    if (k < 1 || k > scores.size()) {
        fail(Errc::out_of_range, "topk: k=" + std::to_string(k) + " outside [1, " +
                                     std::to_string(scores.size()) + "]");
    }
    for (float s : scores) {
        if (!std::isfinite(s)) fail(Errc::numerical, "topk: non-finite score");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Total order: higher score first, lower index on ties.
    auto before = [&](std::size_t lhs, std::size_t rhs) {
        return scores[lhs] != scores[rhs] ? scores[lhs] > scores[rhs] : lhs < rhs;
    };
    if (k < order.size()) {
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1),
                         order.end(), before);
    }
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

bool all_finite(const Matrix& m) noexcept {
    return std::all_of(m.data().begin(), m.data().end(), [](float v) { return std::isfinite(v); });
}

}  // namespace prune_ast
