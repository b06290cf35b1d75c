#include "hq/sphere.hpp"

#include <cmath>

namespace hq {

Matrix normalize_columns(const Matrix& v) {
    Matrix out(v.rows(), v.cols());
    for (size_t j = 0; j < v.cols(); ++j) {
        double sq = 0.0;
        for (size_t i = 0; i < v.rows(); ++i) sq += v.at(i, j) * v.at(i, j);
        if (sq == 0.0)
            throw std::runtime_error("normalize_columns: column " + std::to_string(j) +
                                     " is zero (degenerate direction)");
        double inv = 1.0 / std::sqrt(sq);
        for (size_t i = 0; i < v.rows(); ++i) out.at(i, j) = v.at(i, j) * inv;
    }
    return out;
}

Matrix input_normalize(const Matrix& x, size_t* degenerate_count) {
    Matrix out(x.rows(), x.cols());
    size_t degenerate = 0;
    for (size_t k = 0; k < x.cols(); ++k) {
        double sq = 0.0;
        for (size_t i = 0; i < x.rows(); ++i) sq += x.at(i, k) * x.at(i, k);
        if (sq == 0.0) {
            ++degenerate;
            double u = 1.0 / std::sqrt(static_cast<double>(x.rows()));
            for (size_t i = 0; i < x.rows(); ++i) out.at(i, k) = u;
            continue;
        }
        double inv = 1.0 / std::sqrt(sq);
        for (size_t i = 0; i < x.rows(); ++i) out.at(i, k) = x.at(i, k) * inv;
    }
    if (degenerate_count) *degenerate_count = degenerate;
    return out;
}

SphereLayer::SphereLayer(size_t in_dim, size_t out_dim, Activation act, Rng& rng, bool hyper)
    : v_(in_dim, out_dim), mask_(PruneMask::all_ones(in_dim, out_dim)), act_(act), hyper_(hyper) {
    double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (size_t i = 0; i < v_.size(); ++i) v_.raw()[i] = rng.normal() * scale;
    refresh();
}

void SphereLayer::refresh() {
    Matrix masked = hadamard(v_, mask_.m);
    w_ = hyper_ ? normalize_columns(masked) : masked;
    cached_ = false;
    verbatim_ = false;
}

void SphereLayer::set_raw(const Matrix& v) {
    check_same_shape(v, mask_.m, "SphereLayer::set_raw");
    check_finite(v, "SphereLayer::set_raw");
    v_ = v;
    refresh();
}

void SphereLayer::set_mask(const PruneMask& m) {
    check_same_shape(m.m, v_, "SphereLayer::set_mask");
    mask_ = m;
    refresh();
}

void SphereLayer::set_weights_verbatim(const Matrix& w) {
    check_finite(w, "SphereLayer::set_weights_verbatim");
    v_ = w;
    w_ = w;
    mask_ = PruneMask::all_ones(w.rows(), w.cols());
    cached_ = false;
    verbatim_ = true;
}

Matrix SphereLayer::forward(const Matrix& x, const Matrix* quantized) {
    if (x.rows() != v_.rows())
        throw std::runtime_error("SphereLayer::forward: input dim " + std::to_string(x.rows()) +
                                 " != layer dim " + std::to_string(v_.rows()));
    if (x.cols() == 0) throw std::runtime_error("SphereLayer::forward: empty batch");
    x_raw_ = x;
    x_hat_ = input_normalize(x);
    used_w_ = quantized ? hadamard(*quantized, mask_.m) : w_;
    pre_ = transpose_times(used_w_, x_hat_);
    cached_ = true;
    if (act_ == Activation::Identity) return pre_;
    Matrix y = pre_;
    for (double& v : y.raw())
        if (v < 0.0) v = 0.0;
    return y;
}

SphereLayer::Grads SphereLayer::backward(const Matrix& grad_y) {
    if (!cached_)
        throw std::runtime_error("SphereLayer::backward called before forward");
    check_same_shape(grad_y, pre_, "SphereLayer::backward");

    Matrix grad_pre = grad_y;
    if (act_ == Activation::Relu) {
        for (size_t i = 0; i < grad_pre.size(); ++i)
            if (pre_.raw()[i] <= 0.0) grad_pre.raw()[i] = 0.0;
    }

    Grads g;
    g.w = hadamard(outer_accumulate(x_hat_, grad_pre), mask_.m);

    // input gradient, through x_hat = x / ||x||
    Matrix grad_xhat = times(used_w_, grad_pre);
    g.x = Matrix(x_raw_.rows(), x_raw_.cols());
    for (size_t k = 0; k < x_raw_.cols(); ++k) {
        double sq = 0.0;
        for (size_t i = 0; i < x_raw_.rows(); ++i) sq += x_raw_.at(i, k) * x_raw_.at(i, k);
        if (sq == 0.0) continue; // degenerate sample was replaced by a constant
        double inv_norm = 1.0 / std::sqrt(sq);
        double dot = 0.0;
        for (size_t i = 0; i < x_raw_.rows(); ++i) dot += x_hat_.at(i, k) * grad_xhat.at(i, k);
        for (size_t i = 0; i < x_raw_.rows(); ++i)
            g.x.at(i, k) = (grad_xhat.at(i, k) - dot * x_hat_.at(i, k)) * inv_norm;
    }

    if (!hyper_ || verbatim_) {
        g.v = g.w;
        return g;
    }

    // raw gradient, through w_j = (v .* m)_j / ||(v .* m)_j||
    Matrix masked_v = hadamard(v_, mask_.m);
    g.v = Matrix(v_.rows(), v_.cols());
    for (size_t j = 0; j < v_.cols(); ++j) {
        double sq = 0.0, dot = 0.0;
        for (size_t i = 0; i < v_.rows(); ++i) {
            sq += masked_v.at(i, j) * masked_v.at(i, j);
            dot += w_.at(i, j) * g.w.at(i, j);
        }
        double inv_norm = 1.0 / std::sqrt(sq);
        for (size_t i = 0; i < v_.rows(); ++i)
            g.v.at(i, j) = (g.w.at(i, j) - dot * w_.at(i, j)) * inv_norm * mask_.m.at(i, j);
    }
    return g;
}

MlpModel MlpModel::make(const std::vector<size_t>& dims, Rng& rng, bool hyper,
                        bool exempt_first, bool exempt_last) {
    if (dims.size() < 2) throw std::runtime_error("MlpModel::make: need at least two dims");
    MlpModel m;
    for (size_t k = 0; k + 1 < dims.size(); ++k) {
        Activation act = (k + 2 == dims.size()) ? Activation::Identity : Activation::Relu;
        m.layers.emplace_back(dims[k], dims[k + 1], act, rng, hyper);
        if (act == Activation::Relu) {
            // there are no bias terms and the inputs reaching a relu layer
            // are nonnegative, so a unit whose column starts negative on the
            // data never fires and can never recover; half-normal init keeps
            // every unit alive at the start
            SphereLayer& layer = m.layers.back();
            Matrix v = layer.raw();
            for (double& x : v.raw()) x = std::fabs(x);
            layer.set_raw(v);
        }
        bool exempt = (k == 0 && exempt_first) || (k + 2 == dims.size() && exempt_last);
        m.quantize_exempt.push_back(exempt);
    }
    return m;
}

size_t MlpModel::quantized_layer_count() const {
    size_t n = 0;
    for (bool e : quantize_exempt)
        if (!e) ++n;
    return n;
}

Matrix MlpModel::forward(const Matrix& x, const std::vector<const Matrix*>* quantized) {
    Matrix cur = x;
    for (size_t k = 0; k < layers.size(); ++k) {
        const Matrix* q = quantized ? (*quantized)[k] : nullptr;
        cur = layers[k].forward(cur, q);
    }
    return cur;
}

std::vector<SphereLayer::Grads> MlpModel::backward_all(const Matrix& grad_out) {
    std::vector<SphereLayer::Grads> grads(layers.size());
    Matrix g = grad_out;
    for (size_t k = layers.size(); k-- > 0;) {
        grads[k] = layers[k].backward(g);
        g = grads[k].x;
    }
    return grads;
}

std::vector<Matrix> MlpModel::backward(const Matrix& grad_out) {
    auto all = backward_all(grad_out);
    std::vector<Matrix> grads(layers.size());
    for (size_t k = 0; k < layers.size(); ++k) grads[k] = std::move(all[k].v);
    return grads;
}

std::vector<Matrix> MlpModel::backward_effective(const Matrix& grad_out) {
    auto all = backward_all(grad_out);
    std::vector<Matrix> grads(layers.size());
    for (size_t k = 0; k < layers.size(); ++k) grads[k] = std::move(all[k].w);
    return grads;
}

} // namespace hq
