#include "hq/quantize.hpp"

#include <algorithm>
#include <cmath>

namespace hq {

Matrix TernaryWeights::reconstruct() const {
    Matrix out(rows, cols);
    for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j)
            out.at(i, j) = value(i, j);
    return out;
}

PruneMask PruneMask::all_ones(size_t rows, size_t cols) {
    return PruneMask{Matrix(rows, cols, 1.0), 0.0};
}

size_t PruneMask::zero_count() const {
    size_t z = 0;
    for (double v : m.raw())
        if (v == 0.0) ++z;
    return z;
}

TernaryWeights ternary(const Matrix& w, double delta) {
    check_finite(w, "ternary");
    if (delta < 0.0) throw std::runtime_error("ternary: negative threshold");
    TernaryWeights t;
    t.rows = w.rows();
    t.cols = w.cols();
    t.signs.assign(w.size(), 0);
    t.support.assign(w.cols(), 0);
    t.scale.assign(w.cols(), 0.0);
    for (size_t i = 0; i < w.rows(); ++i) {
        for (size_t j = 0; j < w.cols(); ++j) {
            double v = w.at(i, j);
            if (v > delta) {
                t.signs[i * t.cols + j] = 1;
                ++t.support[j];
            } else if (v < -delta) {
                t.signs[i * t.cols + j] = -1;
                ++t.support[j];
            }
        }
    }
    for (size_t j = 0; j < w.cols(); ++j)
        if (t.support[j] > 0) t.scale[j] = 1.0 / std::sqrt(static_cast<double>(t.support[j]));
    return t;
}

double threshold_percentile(const Matrix& w, double r) {
    if (r < 0.0 || r >= 1.0)
        throw std::runtime_error("threshold_percentile: ratio must be in [0,1)");
    if (r == 0.0) return 0.0;
    std::vector<double> mags(w.size());
    for (size_t i = 0; i < w.size(); ++i) mags[i] = std::fabs(w.raw()[i]);
    size_t k = static_cast<size_t>(std::ceil(r * static_cast<double>(w.size())));
    if (k == 0) return 0.0;
    std::nth_element(mags.begin(), mags.begin() + (k - 1), mags.end());
    return mags[k - 1];
}

PruneMask mask(const Matrix& w, double r) {
    double delta = threshold_percentile(w, r);
    PruneMask pm{Matrix(w.rows(), w.cols()), r};
    for (size_t i = 0; i < w.size(); ++i)
        pm.m.raw()[i] = std::fabs(w.raw()[i]) > delta ? 1.0 : 0.0;
    return pm;
}

Matrix prune(const Matrix& w, double r) {
    return hadamard(w, mask(w, r).m);
}

Matrix reinitialize(const Matrix& w, const PruneMask& m) {
    check_same_shape(w.raw().empty() ? w : w, m.m, "reinitialize");
    Matrix pruned = hadamard(w, m.m);
    TernaryWeights t = ternary(pruned, 0.0);
    for (size_t j = 0; j < t.cols; ++j)
        if (t.support[j] == 0)
            throw std::runtime_error("reinitialize: column " + std::to_string(j) +
                                     " has no survivors (dead column)");
    return t.reconstruct();
}

Matrix ste_backward(const Matrix& grad_out, const PruneMask& m) {
    check_same_shape(grad_out, m.m, "ste_backward");
    return hadamard(grad_out, m.m);
}

} // namespace hq
