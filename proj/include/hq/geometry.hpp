#pragma once

#include "hq/quantize.hpp"
#include "hq/sphere.hpp"

#include <optional>
#include <vector>

namespace hq {

struct LayerGeometry {
    std::vector<double> column_similarity;
    double similarity = 0.0;      // mean of column similarities
    double sparsity = 0.0;        // fraction of exact zeros
    std::optional<double> mu_pos; // mean of strictly positive entries
    std::optional<double> mu_neg; // mean of strictly negative entries
    double q = 0.0;               // 1/sqrt(mean live support per column)
};

struct ModelGeometry {
    std::vector<LayerGeometry> layers; // quantization-exempt layers excluded
    double distance = 0.0;             // D = 1 - mean layer similarity
    size_t quantized_layers = 0;
};

double cosine_similarity_column(const std::vector<double>& a, const std::vector<double>& b);

// Mean column cosine similarity between a ternary counterpart and the
// full-precision matrix. Dead columns are a hard error.
double cosine_similarity_layer(const TernaryWeights& t, const Matrix& w);

// D = 1 - (1/l) sum_k S(ternary(W_k, 0), W_k) over non-exempt layers.
double cosine_distance_model(const MlpModel& model);

ModelGeometry model_geometry(const MlpModel& model);

struct DriftStats {
    std::optional<double> mu_pos;
    std::optional<double> mu_neg;
    double q = 0.0;
};

DriftStats zero_drift_stats(const Matrix& w);

double sparsity(const Matrix& w);

LayerGeometry layer_geometry(const Matrix& w);

} // namespace hq
