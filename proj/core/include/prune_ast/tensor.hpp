#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace prune_ast {

/// Dense row-major matrix of 32-bit floats.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    std::string shape_string() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// a + bias broadcast over rows.
Matrix add_row_bias(Matrix a, std::span<const float> bias);

/// Elementwise a + b; shapes must match.
Matrix add(const Matrix& a, const Matrix& b);

/// Row-wise softmax of (m * scale), max-subtracted.
Matrix softmax_rows(const Matrix& m, float scale = 1.0f);

Matrix layer_norm(const Matrix& m, std::span<const float> gamma, std::span<const float> beta,
                  float eps);

/// Exact erf-based GELU.
Matrix gelu(const Matrix& m);
float gelu(float x);

Matrix transpose(const Matrix& m);

/// Rows of `m` selected by `indices`, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

/// Indices of the k largest scores. Ties go to the lower index; the result is ascending.
std::vector<std::size_t> topk_indices(std::span<const float> scores, std::size_t k);

bool all_finite(const Matrix& m) noexcept;

}  // namespace prune_ast
