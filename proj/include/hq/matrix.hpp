#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hq {

// Dense row-major matrix of doubles. Weight matrices are n x m with m
// column vectors w_j; batches are stored as (dim x batch_size).
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(size_t i, size_t j) { return data_[i * cols_ + j]; }
    double at(size_t i, size_t j) const { return data_[i * cols_ + j]; }

    double* row(size_t i) { return data_.data() + i * cols_; }
    const double* row(size_t i) const { return data_.data() + i * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool same_shape(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    void fill(double v) { data_.assign(data_.size(), v); }

    bool all_finite() const;

    // extracts column j as a vector
    std::vector<double> column(size_t j) const;

private:
    size_t rows_, cols_;
    std::vector<double> data_;
};

// y = A^T * x   (A: n x m, x: n x b, y: m x b)
Matrix transpose_times(const Matrix& a, const Matrix& x);
// g = A * x     (A: n x m, x: m x b, g: n x b)
Matrix times(const Matrix& a, const Matrix& x);
// g = x * y^T   (x: n x b, y: m x b, g: n x m)
Matrix outer_accumulate(const Matrix& x, const Matrix& y);

Matrix hadamard(const Matrix& a, const Matrix& b);

void check_same_shape(const Matrix& a, const Matrix& b, const std::string& where);
void check_finite(const Matrix& a, const std::string& where);

// Thread cap for the batched matmuls above. Reads HQ_THREADS once; results
// are identical for any thread count (rows are partitioned, no shared sums).
size_t max_threads();

} // namespace hq
