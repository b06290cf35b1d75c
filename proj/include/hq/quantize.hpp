#pragma once

#include "hq/matrix.hpp"

#include <cstdint>
#include <vector>

namespace hq {

// Ternary counterpart of a weight matrix. Each column j keeps |I_delta|
// entries of magnitude 1/sqrt(|I_delta|), so live reconstructed columns
// have unit L2 norm.
struct TernaryWeights {
    size_t rows = 0, cols = 0;
    std::vector<int8_t> signs;    // row-major, values in {-1,0,+1}
    std::vector<size_t> support;  // |I_delta| per column
    std::vector<double> scale;    // 1/sqrt(|I_delta|), 0 for dead columns

    int8_t sign(size_t i, size_t j) const { return signs[i * cols + j]; }
    double value(size_t i, size_t j) const { return sign(i, j) * scale[j]; }
    Matrix reconstruct() const;
};

// Binary keep-mask with the pruning ratio that produced it.
struct PruneMask {
    Matrix m;        // entries in {0,1}
    double ratio = 0.0;

    static PruneMask all_ones(size_t rows, size_t cols);
    bool keeps(size_t i, size_t j) const { return m.at(i, j) != 0.0; }
    size_t zero_count() const;
};

// Ternary quantizer: w > delta -> +1/sqrt(|I|), |w| <= delta -> 0,
// w < -delta -> -1/sqrt(|I|), with |I| counted per column.
TernaryWeights ternary(const Matrix& w, double delta);

// The ceil(r*n*m)-th smallest |w| (0 when r = 0); masking |w| <= delta
// then zeroes the r-fraction of smallest-magnitude entries.
double threshold_percentile(const Matrix& w, double r);

PruneMask mask(const Matrix& w, double r);

Matrix prune(const Matrix& w, double r);

// Survivors become sign(w)/sqrt(column survivor count); pruned entries stay
// zero. Columns come out exactly unit-norm. All-zero column is a hard error.
Matrix reinitialize(const Matrix& w, const PruneMask& m);

// Straight-through backward: identity on surviving entries, zero elsewhere.
Matrix ste_backward(const Matrix& grad_out, const PruneMask& m);

} // namespace hq
