#include "hq/matrix.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

namespace hq {

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::vector<double> Matrix::column(size_t j) const {
    std::vector<double> out(rows_);
    for (size_t i = 0; i < rows_; ++i) out[i] = at(i, j);
    return out;
}

void check_same_shape(const Matrix& a, const Matrix& b, const std::string& where) {
    if (!a.same_shape(b))
        throw std::runtime_error(where + ": shape mismatch (" +
                                 std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                                 std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

void check_finite(const Matrix& a, const std::string& where) {
    if (!a.all_finite())
        throw std::runtime_error(where + ": non-finite values");
}

size_t max_threads() {
    static size_t cached = [] {
        size_t hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        if (const char* env = std::getenv("HQ_THREADS")) {
            long v = std::strtol(env, nullptr, 10);
            if (v >= 1 && static_cast<size_t>(v) < hw) hw = static_cast<size_t>(v);
        }
        return hw;
    }();
    return cached;
}

namespace {

// Runs fn(lo, hi) over a partition of [0, n). Each range writes disjoint
// output rows, so the result is thread-count independent.
template <typename Fn>
void parallel_rows(size_t n, Fn fn) {
    size_t nt = std::min(max_threads(), n == 0 ? size_t(1) : n);
    if (nt <= 1 || n < 64) {
        fn(size_t(0), n);
        return;
    }
    std::vector<std::thread> workers;
    size_t chunk = (n + nt - 1) / nt;
    for (size_t t = 0; t < nt; ++t) {
        size_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        workers.emplace_back([=] { fn(lo, hi); });
    }
    for (auto& w : workers) w.join();
}

} // namespace

Matrix transpose_times(const Matrix& a, const Matrix& x) {
    if (a.rows() != x.rows())
        throw std::runtime_error("transpose_times: inner dimension mismatch");
    const size_t n = a.rows(), m = a.cols(), b = x.cols();
    Matrix y(m, b, 0.0);
    parallel_rows(m, [&](size_t jlo, size_t jhi) {
        for (size_t i = 0; i < n; ++i) {
            const double* arow = a.row(i);
            const double* xrow = x.row(i);
            for (size_t j = jlo; j < jhi; ++j) {
                double w = arow[j];
                if (w == 0.0) continue;
                double* yrow = y.row(j);
                for (size_t k = 0; k < b; ++k) yrow[k] += w * xrow[k];
            }
        }
    });
    return y;
}

Matrix times(const Matrix& a, const Matrix& x) {
    if (a.cols() != x.rows())
        throw std::runtime_error("times: inner dimension mismatch");
    const size_t n = a.rows(), m = a.cols(), b = x.cols();
    Matrix g(n, b, 0.0);
    parallel_rows(n, [&](size_t ilo, size_t ihi) {
        for (size_t i = ilo; i < ihi; ++i) {
            const double* arow = a.row(i);
            double* grow = g.row(i);
            for (size_t j = 0; j < m; ++j) {
                double w = arow[j];
                if (w == 0.0) continue;
                const double* xrow = x.row(j);
                for (size_t k = 0; k < b; ++k) grow[k] += w * xrow[k];
            }
        }
    });
    return g;
}

Matrix outer_accumulate(const Matrix& x, const Matrix& y) {
    if (x.cols() != y.cols())
        throw std::runtime_error("outer_accumulate: batch dimension mismatch");
    const size_t n = x.rows(), m = y.rows(), b = x.cols();
    Matrix g(n, m, 0.0);
    parallel_rows(n, [&](size_t ilo, size_t ihi) {
        for (size_t i = ilo; i < ihi; ++i) {
            const double* xrow = x.row(i);
            double* grow = g.row(i);
            for (size_t j = 0; j < m; ++j) {
                const double* yrow = y.row(j);
                double acc = 0.0;
                for (size_t k = 0; k < b; ++k) acc += xrow[k] * yrow[k];
                grow[j] = acc;
            }
        }
    });
    return g;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) out.raw()[i] = a.raw()[i] * b.raw()[i];
    return out;
}

} // namespace hq
