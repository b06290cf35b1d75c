#pragma once

#include "hq/matrix.hpp"
#include "hq/quantize.hpp"
#include "hq/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hq {

enum class Activation { Relu, Identity };

// Scales each column of v to unit L2 norm. Zero column is a hard error.
Matrix normalize_columns(const Matrix& v);

// Scales each sample (column) of x to unit L2 norm. A zero sample is
// replaced by the uniform unit vector and counted in `degenerate_count`.
Matrix input_normalize(const Matrix& x, size_t* degenerate_count = nullptr);

// A layer whose effective weights live on the unit hypersphere:
// W = normalize_columns(V .* M), y = phi(W^T x_hat) with x_hat the
// unit-normalized input. With hyper=false the layer degenerates to a plain
// linear map W = V .* M (ablation control).
class SphereLayer {
public:
    SphereLayer() = default;
    SphereLayer(size_t in_dim, size_t out_dim, Activation act, Rng& rng, bool hyper = true);

    size_t in_dim() const { return v_.rows(); }
    size_t out_dim() const { return v_.cols(); }
    Activation activation() const { return act_; }
    bool hyper() const { return hyper_; }

    const Matrix& raw() const { return v_; }
    const Matrix& weights() const { return w_; }
    const PruneMask& mask() const { return mask_; }

    void set_raw(const Matrix& v);
    void set_mask(const PruneMask& m);
    void set_hyper(bool h) { hyper_ = h; refresh(); }
    void set_activation(Activation a) { act_ = a; }

    // Replaces the effective weights directly (used when a layer is baked
    // to its ternary reconstruction or loaded from a model file).
    void set_weights_verbatim(const Matrix& w);

    // y = phi((M .* Wq)^T x), where Wq defaults to the layer's own W but a
    // quantized stand-in may be supplied. Caches what backward needs.
    Matrix forward(const Matrix& x, const Matrix* quantized = nullptr);

    struct Grads {
        Matrix v;  // gradient w.r.t. raw parameters (masked)
        Matrix w;  // gradient w.r.t. effective weights, pre-projection (masked)
        Matrix x;  // gradient w.r.t. the layer input (pre input-normalization)
    };

    // Chain rule through phi, the matmul, the input normalization and the
    // column-normalization reparameterization:
    //   grad_v_j = (I - w_j w_j^T) grad_w_j / ||(v .* m)_j||
    Grads backward(const Matrix& grad_y);

    bool has_cached_forward() const { return cached_; }

private:
    void refresh(); // recompute w_ from v_, mask_, hyper_

    Matrix v_;       // raw parameters
    Matrix w_;       // effective (masked, normalized) weights
    PruneMask mask_;
    Activation act_ = Activation::Relu;
    bool hyper_ = true;
    bool verbatim_ = false; // weights set directly, v_ not authoritative

    // forward cache
    bool cached_ = false;
    Matrix x_raw_;   // input before normalization
    Matrix x_hat_;   // normalized input
    Matrix pre_;     // pre-activation
    Matrix used_w_;  // the weight matrix the forward actually used
};

// Feedforward stack. `quantize_exempt[k]` marks layers kept full precision.
struct MlpModel {
    std::vector<SphereLayer> layers;
    std::vector<bool> quantize_exempt;

    static MlpModel make(const std::vector<size_t>& dims, Rng& rng, bool hyper = true,
                         bool exempt_first = false, bool exempt_last = true);

    size_t layer_count() const { return layers.size(); }
    size_t quantized_layer_count() const;

    Matrix forward(const Matrix& x, const std::vector<const Matrix*>* quantized = nullptr);

    // Backpropagates grad at the output; returns per-layer raw-parameter
    // gradients (masked). Requires a preceding forward on every layer.
    std::vector<Matrix> backward(const Matrix& grad_out);

    // Gradients w.r.t. the effective weights (pre projection), for STE use.
    std::vector<Matrix> backward_effective(const Matrix& grad_out);

    // Full per-layer gradients (raw, effective and input) in one pass.
    std::vector<SphereLayer::Grads> backward_all(const Matrix& grad_out);
};

} // namespace hq
