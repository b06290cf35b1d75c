#include "hq/geometry.hpp"

#include <cmath>

namespace hq {

namespace {

DriftStats drift_impl(const Matrix& w) {
    DriftStats d;
    double sp = 0.0, sn = 0.0;
    size_t cp = 0, cn = 0;
    for (double v : w.raw()) {
        if (v > 0.0) { sp += v; ++cp; }
        else if (v < 0.0) { sn += v; ++cn; }
    }
    if (cp) d.mu_pos = sp / static_cast<double>(cp);
    if (cn) d.mu_neg = sn / static_cast<double>(cn);
    double mean_support = static_cast<double>(cp + cn) / static_cast<double>(w.cols());
    d.q = mean_support > 0.0 ? 1.0 / std::sqrt(mean_support) : 0.0;
    return d;
}

} // namespace

double cosine_similarity_column(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::runtime_error("cosine_similarity_column: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw std::runtime_error("cosine_similarity_column: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine_similarity_layer(const TernaryWeights& t, const Matrix& w) {
    if (t.rows != w.rows() || t.cols != w.cols())
        throw std::runtime_error("cosine_similarity_layer: shape mismatch");
    double sum = 0.0;
    for (size_t j = 0; j < w.cols(); ++j) {
        if (t.support[j] == 0)
            throw std::runtime_error("cosine_similarity_layer: dead column " + std::to_string(j));
        std::vector<double> tcol(w.rows());
        for (size_t i = 0; i < w.rows(); ++i) tcol[i] = t.value(i, j);
        sum += cosine_similarity_column(tcol, w.column(j));
    }
    return sum / static_cast<double>(w.cols());
}

LayerGeometry layer_geometry(const Matrix& w) {
    LayerGeometry g;
    TernaryWeights t = ternary(w, 0.0);
    g.column_similarity.resize(w.cols());
    double sum = 0.0;
    for (size_t j = 0; j < w.cols(); ++j) {
        if (t.support[j] == 0)
            throw std::runtime_error("layer_geometry: dead column " + std::to_string(j));
        std::vector<double> tcol(w.rows());
        for (size_t i = 0; i < w.rows(); ++i) tcol[i] = t.value(i, j);
        g.column_similarity[j] = cosine_similarity_column(tcol, w.column(j));
        sum += g.column_similarity[j];
    }
    g.similarity = sum / static_cast<double>(w.cols());
    g.sparsity = sparsity(w);
    DriftStats d = drift_impl(w);
    g.mu_pos = d.mu_pos;
    g.mu_neg = d.mu_neg;
    g.q = d.q;
    return g;
}

double cosine_distance_model(const MlpModel& model) {
    size_t l = model.quantized_layer_count();
    if (l == 0)
        throw std::runtime_error("cosine_distance_model: no quantized layers");
    double sum = 0.0;
    for (size_t k = 0; k < model.layers.size(); ++k) {
        if (model.quantize_exempt[k]) continue;
        const Matrix& w = model.layers[k].weights();
        sum += cosine_similarity_layer(ternary(w, 0.0), w);
    }
    return 1.0 - sum / static_cast<double>(l);
}

ModelGeometry model_geometry(const MlpModel& model) {
    ModelGeometry mg;
    double sum = 0.0;
    for (size_t k = 0; k < model.layers.size(); ++k) {
        if (model.quantize_exempt[k]) continue;
        mg.layers.push_back(layer_geometry(model.layers[k].weights()));
        sum += mg.layers.back().similarity;
    }
    mg.quantized_layers = mg.layers.size();
    if (mg.quantized_layers == 0)
        throw std::runtime_error("model_geometry: no quantized layers");
    mg.distance = 1.0 - sum / static_cast<double>(mg.quantized_layers);
    return mg;
}

DriftStats zero_drift_stats(const Matrix& w) {
    DriftStats d = drift_impl(w);
    if (!d.mu_pos && !d.mu_neg)
        throw std::runtime_error("zero_drift_stats: matrix has no nonzero entries");
    return d;
}

double sparsity(const Matrix& w) {
    if (w.size() == 0) return 0.0;
    size_t z = 0;
    for (double v : w.raw())
        if (v == 0.0) ++z;
    return static_cast<double>(z) / static_cast<double>(w.size());
}

} // namespace hq
