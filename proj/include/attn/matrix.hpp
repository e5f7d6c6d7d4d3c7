#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace attn {

/// Dense row-major matrix of doubles. Entries are validated to be finite
/// when constructed from user data; in-place mutation through operator()
/// is the caller's responsibility.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

    std::span<const double> row(std::size_t i) const {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<double> row(std::size_t i) {
        return {data_.data() + i * cols_, cols_};
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    double max_abs() const;
    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Matrix transposed() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// max_{i,j} |A_{i,j} - B_{i,j}|; throws on shape mismatch.
double max_abs_diff(const Matrix& a, const Matrix& b);

Matrix multiply(const Matrix& a, const Matrix& b);            // a * b
Matrix multiply_bt(const Matrix& a, const Matrix& b);         // a * b^T
Matrix multiply_at(const Matrix& a, const Matrix& b);         // a^T * b
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// CSV matrix I/O: one row per line, comma-separated decimals, no header.
/// Doubles are written with 17 significant digits so load(store(m)) == m
/// bitwise. Malformed input reports the offending line number.
Matrix load_matrix(const std::string& path);
void store_matrix(const Matrix& m, const std::string& path);

}  // namespace attn
