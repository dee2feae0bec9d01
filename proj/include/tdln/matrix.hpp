// Dense row-major matrix of 64-bit reals with deterministic arithmetic.
//
// Every reduction runs left-to-right in index order and the build disables
// FMA contraction, so results are bit-identical across runs regardless of
// optimization or thread count.
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tdln {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, Vector data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                        " != " + std::to_string(rows_) + "x" +
                                        std::to_string(cols_));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

inline std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// a * b with per-cell left-to-right accumulation over k. The i-k-j loop
// order performs the same addition sequence per output cell as the naive
// i-j-k triple loop, so the two agree bit for bit.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: dimension mismatch " + shape_str(a) + " * " +
                                    shape_str(b));
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* crow = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    if (!c.all_finite()) throw std::runtime_error("matmul: non-finite result");
    return c;
}

// w * x for vector x, row sums accumulated left-to-right.
inline Vector matvec(const Matrix& w, const Vector& x) {
    if (w.cols() != x.size())
        throw std::invalid_argument("matvec: dimension mismatch " + shape_str(w) + " * " +
                                    std::to_string(x.size()));
    Vector y(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double* row = w.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < w.cols(); ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

// w^T * x, accumulated in row order of w.
inline Vector matvec_transposed(const Matrix& w, const Vector& x) {
    if (w.rows() != x.size())
        throw std::invalid_argument("matvec_transposed: dimension mismatch " + shape_str(w) +
                                    "^T * " + std::to_string(x.size()));
    Vector y(w.cols(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        const double xi = x[i];
        const double* row = w.row(i);
        for (std::size_t j = 0; j < w.cols(); ++j) y[j] += xi * row[j];
    }
    return y;
}

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

}  // namespace tdln
