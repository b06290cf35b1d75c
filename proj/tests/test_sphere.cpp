#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hq/optim.hpp"
#include "hq/sphere.hpp"

#include <cmath>

using namespace hq;

namespace {

Matrix random_matrix(size_t n, size_t m, Rng& rng, double scale = 1.0) {
    Matrix out(n, m);
    for (size_t i = 0; i < out.size(); ++i) out.raw()[i] = rng.normal() * scale;
    return out;
}

double column_norm(const Matrix& w, size_t j) {
    double sq = 0.0;
    for (size_t i = 0; i < w.rows(); ++i) sq += w.at(i, j) * w.at(i, j);
    return std::sqrt(sq);
}

} // namespace

TEST_CASE("normalize_columns: 3-4-5 column") {
    Matrix v(2, 1);
    v.at(0, 0) = 3.0;
    v.at(1, 0) = 4.0;
    Matrix w = normalize_columns(v);
    CHECK(w.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(w.at(1, 0) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("normalize_columns: idempotent on unit columns, zero column errors") {
    Matrix v(2, 1);
    v.at(0, 0) = 0.6;
    v.at(1, 0) = 0.8;
    Matrix w = normalize_columns(v);
    CHECK(std::fabs(w.at(0, 0) - 0.6) < 1e-12);
    CHECK(std::fabs(w.at(1, 0) - 0.8) < 1e-12);
    CHECK_THROWS(normalize_columns(Matrix(3, 2, 0.0)));
}

TEST_CASE("normalize_columns: all norms 1 on a random 50x20 matrix") {
    Rng rng(11);
    Matrix w = normalize_columns(random_matrix(50, 20, rng));
    for (size_t j = 0; j < 20; ++j) CHECK(std::fabs(column_norm(w, j) - 1.0) < 1e-9);
}

TEST_CASE("input_normalize: basic cases and degenerate sample") {
    Matrix x(3, 1);
    x.at(1, 0) = 5.0;
    Matrix y = input_normalize(x);
    CHECK(y.at(0, 0) == 0.0);
    CHECK(y.at(1, 0) == doctest::Approx(1.0));
    size_t degenerate = 0;
    Matrix z = input_normalize(Matrix(4, 1, 0.0), &degenerate);
    CHECK(degenerate == 1);
    CHECK(z.at(0, 0) == doctest::Approx(0.5));
    CHECK(std::fabs(column_norm(z, 0) - 1.0) < 1e-12);
}

TEST_CASE("sphere_forward: self-alignment gives cosine 1, outputs bounded") {
    Rng rng(5);
    SphereLayer layer(6, 4, Activation::Identity, rng);
    Matrix x(6, 1);
    for (size_t i = 0; i < 6; ++i) x.at(i, 0) = layer.weights().at(i, 2);
    Matrix y = layer.forward(x);
    CHECK(y.at(2, 0) == doctest::Approx(1.0).epsilon(1e-9));
    for (size_t j = 0; j < 4; ++j) CHECK(std::fabs(y.at(j, 0)) <= 1.0 + 1e-12);
}

TEST_CASE("sphere_forward matches a double-loop matmul oracle") {
    Rng rng(6);
    SphereLayer layer(8, 5, Activation::Identity, rng);
    Matrix x = random_matrix(8, 3, rng);
    Matrix y = layer.forward(x);
    Matrix xh = input_normalize(x);
    for (size_t j = 0; j < 5; ++j)
        for (size_t k = 0; k < 3; ++k) {
            double acc = 0.0;
            for (size_t i = 0; i < 8; ++i) acc += layer.weights().at(i, j) * xh.at(i, k);
            CHECK(y.at(j, k) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("sphere_forward: dimension mismatch and backward-before-forward error") {
    Rng rng(1);
    SphereLayer layer(4, 3, Activation::Relu, rng);
    CHECK_THROWS(layer.forward(Matrix(5, 1, 1.0)));
    SphereLayer fresh(4, 3, Activation::Relu, rng);
    CHECK_THROWS(fresh.backward(Matrix(3, 1, 1.0)));
}

TEST_CASE("sphere_backward: radial gradient component is projected out") {
    Rng rng(9);
    SphereLayer layer(5, 3, Activation::Identity, rng);
    Matrix x = random_matrix(5, 2, rng);
    layer.forward(x);
    // choose grad_y so that grad_w_j is parallel to w_j: grad_w = xhat*gy^T,
    // easier to verify via the identity (I - ww^T)w = 0 on a direct call
    Matrix grad_y(3, 2, 0.0);
    auto g = layer.backward(grad_y);
    for (size_t i = 0; i < g.v.size(); ++i) CHECK(g.v.raw()[i] == 0.0);
}

TEST_CASE("sphere_backward matches central finite differences (6x4 layer)") {
    for (Activation act : {Activation::Identity, Activation::Relu}) {
        Rng rng(13);
        SphereLayer layer(6, 4, act, rng);
        Matrix x = random_matrix(6, 3, rng);
        Matrix target = random_matrix(4, 3, rng);

        auto loss_of = [&](const Matrix& v) {
            SphereLayer probe = layer;
            probe.set_raw(v);
            Matrix y = probe.forward(x);
            double l = 0.0;
            for (size_t i = 0; i < y.size(); ++i) {
                double d = y.raw()[i] - target.raw()[i];
                l += 0.5 * d * d;
            }
            return l;
        };

        Matrix y = layer.forward(x);
        Matrix grad_y(4, 3);
        for (size_t i = 0; i < y.size(); ++i) grad_y.raw()[i] = y.raw()[i] - target.raw()[i];
        auto g = layer.backward(grad_y);

        const double h = 1e-4;
        size_t checked = 0;
        for (size_t i = 0; i < layer.raw().size(); ++i) {
            Matrix vp = layer.raw(), vm = layer.raw();
            vp.raw()[i] += h;
            vm.raw()[i] -= h;
            double fd = (loss_of(vp) - loss_of(vm)) / (2 * h);
            double an = g.v.raw()[i];
            if (act == Activation::Relu && std::fabs(fd) < 1e-8 && std::fabs(an) < 1e-8)
                continue; // both sides dead, nothing to compare
            CHECK(std::fabs(fd - an) <= 1e-4 * std::max(1.0, std::fabs(fd)));
            ++checked;
        }
        CHECK(checked > 0);
    }
}

TEST_CASE("sphere_backward: masked entries receive exactly zero gradient") {
    Rng rng(17);
    SphereLayer layer(5, 3, Activation::Identity, rng);
    PruneMask pm = PruneMask::all_ones(5, 3);
    pm.m.at(2, 1) = 0.0;
    pm.m.at(0, 0) = 0.0;
    layer.set_mask(pm);
    Matrix x = random_matrix(5, 2, rng);
    layer.forward(x);
    auto g = layer.backward(random_matrix(3, 2, rng));
    CHECK(g.v.at(2, 1) == 0.0);
    CHECK(g.v.at(0, 0) == 0.0);
    CHECK(g.w.at(2, 1) == 0.0);
}

TEST_CASE("forward invariant to positive rescaling of raw V") {
    Rng rng(23);
    SphereLayer layer(7, 4, Activation::Relu, rng);
    Matrix x = random_matrix(7, 2, rng);
    Matrix y1 = layer.forward(x);
    Matrix scaled = layer.raw();
    for (double& v : scaled.raw()) v *= 3.7;
    layer.set_raw(scaled);
    Matrix y2 = layer.forward(x);
    for (size_t i = 0; i < y1.size(); ++i)
        CHECK(std::fabs(y1.raw()[i] - y2.raw()[i]) < 1e-9);
}

TEST_CASE("all-ones mask path matches unmasked path exactly") {
    Rng rng(29);
    SphereLayer a(6, 4, Activation::Relu, rng);
    SphereLayer b = a;
    b.set_mask(PruneMask::all_ones(6, 4));
    Rng rng2(31);
    Matrix x = random_matrix(6, 3, rng2);
    Matrix ya = a.forward(x), yb = b.forward(x);
    for (size_t i = 0; i < ya.size(); ++i) CHECK(ya.raw()[i] == yb.raw()[i]);
}

TEST_CASE("column norms stay unit through sgd + renormalize cycles") {
    Rng rng(37);
    SphereLayer layer(10, 6, Activation::Identity, rng);
    OptimizerState opt;
    opt.lr = 0.05;
    for (int step = 0; step < 20; ++step) {
        Matrix x = random_matrix(10, 4, rng);
        Matrix y = layer.forward(x);
        auto g = layer.backward(y); // descend on 0.5*||y||^2
        layer.set_raw(sgd_step(layer.raw(), g.v, opt));
        for (size_t j = 0; j < 6; ++j)
            CHECK(std::fabs(column_norm(layer.weights(), j) - 1.0) < 1e-9);
    }
}

TEST_CASE("whole model gradient matches finite differences") {
    Rng rng(41);
    MlpModel model = MlpModel::make({5, 4, 3}, rng, true, false, false);
    Matrix x = random_matrix(5, 2, rng);
    for (double& v : x.raw()) v = std::fabs(v) + 0.1;
    std::vector<size_t> labels{1, 2};

    Matrix logits = model.forward(x);
    auto res = softmax_cross_entropy(logits, labels);
    auto grads = model.backward(res.grad);

    const double h = 1e-4;
    for (size_t k = 0; k < model.layers.size(); ++k) {
        for (size_t i = 0; i < model.layers[k].raw().size(); i += 3) {
            auto loss_at = [&](double delta) {
                MlpModel probe = model;
                Matrix v = probe.layers[k].raw();
                v.raw()[i] += delta;
                probe.layers[k].set_raw(v);
                return softmax_cross_entropy(probe.forward(x), labels).loss;
            };
            double fd = (loss_at(h) - loss_at(-h)) / (2 * h);
            double an = grads[k].raw()[i];
            if (std::fabs(fd) < 1e-9 && std::fabs(an) < 1e-9) continue;
            CHECK(std::fabs(fd - an) <= 1e-4 * std::max(1.0, std::fabs(fd)));
        }
    }
}
