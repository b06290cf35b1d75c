#pragma once

#include "hq/matrix.hpp"

#include <string>
#include <vector>

namespace hq {

// SGD with momentum and (decoupled-from-nothing, classic L2) weight decay:
//   v <- momentum * v + g + lambda * p
//   p <- p - eta * v
struct OptimizerState {
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    std::vector<Matrix> velocity; // one buffer per parameter tensor

    Matrix& velocity_for(size_t idx, const Matrix& params);
};

Matrix sgd_step(const Matrix& params, const Matrix& grads, OptimizerState& state,
                size_t param_index = 0, const std::string& layer_name = "");

// Cosine annealing with restarts every `period` epochs:
//   eta(t) = eta_min + (eta_max - eta_min) * (1 + cos(pi * (t mod T) / T)) / 2
struct LrSchedule {
    double eta_max = 0.001;
    double eta_min = 0.0;
    size_t period = 10;
};

double cosine_annealing_lr(size_t epoch, const LrSchedule& sched);

// Mean negative log-softmax over the batch. logits: (classes x batch);
// grad has the same shape, already divided by the batch size.
struct LossResult {
    double loss;
    Matrix grad;
};

LossResult softmax_cross_entropy(const Matrix& logits, const std::vector<size_t>& labels);

} // namespace hq
