#include "hq/optim.hpp"

#include <cmath>

namespace hq {

Matrix& OptimizerState::velocity_for(size_t idx, const Matrix& params) {
    if (velocity.size() <= idx) velocity.resize(idx + 1);
    if (velocity[idx].empty())
        velocity[idx] = Matrix(params.rows(), params.cols(), 0.0);
    if (!velocity[idx].same_shape(params))
        throw std::runtime_error("OptimizerState: velocity shape mismatch");
    return velocity[idx];
}

Matrix sgd_step(const Matrix& params, const Matrix& grads, OptimizerState& state,
                size_t param_index, const std::string& layer_name) {
    check_same_shape(params, grads, "sgd_step" + (layer_name.empty() ? "" : " [" + layer_name + "]"));
    if (!grads.all_finite())
        throw std::runtime_error("sgd_step: non-finite gradient" +
                                 (layer_name.empty() ? "" : " in layer " + layer_name));
    Matrix& v = state.velocity_for(param_index, params);
    Matrix out(params.rows(), params.cols());
    for (size_t i = 0; i < params.size(); ++i) {
        double vi = state.momentum * v.raw()[i] + grads.raw()[i] + state.weight_decay * params.raw()[i];
        v.raw()[i] = vi;
        out.raw()[i] = params.raw()[i] - state.lr * vi;
    }
    return out;
}

double cosine_annealing_lr(size_t epoch, const LrSchedule& sched) {
    if (sched.period == 0)
        throw std::runtime_error("cosine_annealing_lr: restart period must be >= 1");
    double phase = static_cast<double>(epoch % sched.period) / static_cast<double>(sched.period);
    return sched.eta_min + 0.5 * (sched.eta_max - sched.eta_min) * (1.0 + std::cos(3.141592653589793 * phase));
}

LossResult softmax_cross_entropy(const Matrix& logits, const std::vector<size_t>& labels) {
    const size_t classes = logits.rows(), batch = logits.cols();
    if (batch == 0) throw std::runtime_error("softmax_cross_entropy: empty batch");
    if (labels.size() != batch)
        throw std::runtime_error("softmax_cross_entropy: label count != batch size");

    LossResult res{0.0, Matrix(classes, batch)};
    for (size_t k = 0; k < batch; ++k) {
        if (labels[k] >= classes)
            throw std::runtime_error("softmax_cross_entropy: label out of range");
        double mx = logits.at(0, k);
        for (size_t c = 1; c < classes; ++c) mx = std::max(mx, logits.at(c, k));
        double sum = 0.0;
        for (size_t c = 0; c < classes; ++c) sum += std::exp(logits.at(c, k) - mx);
        double lse = mx + std::log(sum);
        res.loss += lse - logits.at(labels[k], k);
        for (size_t c = 0; c < classes; ++c) {
            double p = std::exp(logits.at(c, k) - lse);
            res.grad.at(c, k) = (p - (c == labels[k] ? 1.0 : 0.0)) / static_cast<double>(batch);
        }
    }
    res.loss /= static_cast<double>(batch);
    return res;
}

} // namespace hq
