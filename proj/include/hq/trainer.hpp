#pragma once

#include "hq/dataset.hpp"
#include "hq/geometry.hpp"
#include "hq/optim.hpp"
#include "hq/quantize.hpp"
#include "hq/sphere.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace hq {

enum class StepSchedule { Fixed, Cosine };

struct HQConfig {
    // pruning schedule
    double r_low = 0.3;
    double r_high = 0.7;
    double step = 0.01;
    StepSchedule step_schedule = StepSchedule::Cosine;
    size_t reinit_rounds = 0; // 0 = derive round count from step size
    bool reinit = true;

    // phase budgets
    size_t pretrain_epochs = 15;
    size_t epochs_per_round = 5;
    size_t quantize_epochs = 40;

    // optimizer / schedule
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0001;
    size_t lr_restart_period = 10;
    size_t batch_size = 128;

    // preprocess plateau exit: stop a round when val loss has not improved
    // by at least plateau_tol for plateau_patience epochs
    double plateau_tol = 1e-3;
    size_t plateau_patience = 3;

    // quantization
    double eta_delta = 0.05;
    size_t quantize_patience = 6; // epochs of declining val accuracy before stop

    uint64_t seed = 1;
};

struct MetricsRecord {
    std::string phase;
    size_t epoch = 0;
    int layer = -1; // -1 = model-level row
    double accuracy = std::numeric_limits<double>::quiet_NaN();
    double loss = std::numeric_limits<double>::quiet_NaN();
    double similarity = std::numeric_limits<double>::quiet_NaN();
    double distance = std::numeric_limits<double>::quiet_NaN();
    double sparsity = std::numeric_limits<double>::quiet_NaN();
    double delta = std::numeric_limits<double>::quiet_NaN();
    double mu_pos = std::numeric_limits<double>::quiet_NaN();
    double mu_neg = std::numeric_limits<double>::quiet_NaN();
    double q = std::numeric_limits<double>::quiet_NaN();
    double wall_ms = std::numeric_limits<double>::quiet_NaN();
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

struct HQState {
    enum class Phase { Pretrain, Preprocess, Quantize };
    Phase phase = Phase::Pretrain;
    double ratio = 0.0;
    std::vector<double> delta; // per layer, 0 for exempt layers
    size_t epoch = 0;
};

// The ratio sequence r_low .. r_high the preprocess loop walks through.
std::vector<double> ratio_schedule(const HQConfig& cfg);

// delta <- delta + eta * |mean grad over surviving entries| (empty mean = 0)
double update_threshold(double delta, const Matrix& grads, const PruneMask& m, double eta);

double evaluate_accuracy(MlpModel& model, const Dataset& data);

void pretrain(MlpModel& model, const Dataset& train, const Dataset& val,
              const HQConfig& cfg, Rng& rng, const MetricsSink& sink = nullptr);

// Iterative prune (+ optional reinitialize) + retrain. Masks end up inside
// the model's layers; they are also returned for inspection.
std::vector<PruneMask> preprocess(MlpModel& model, const Dataset& train, const Dataset& val,
                                  const HQConfig& cfg, Rng& rng,
                                  const MetricsSink& sink = nullptr);

// STE quantization loop with the learned per-layer threshold. Returns the
// per-layer thresholds of the best-validation-accuracy checkpoint, which is
// what the model is rolled back to. bake_ternary() then freezes weights.
std::vector<double> quantize_ternary(MlpModel& model, const Dataset& train, const Dataset& val,
                                     const HQConfig& cfg, Rng& rng,
                                     const MetricsSink& sink = nullptr);

// Replaces every quantized layer's weights by its ternary reconstruction at
// the given per-layer thresholds (masked entries stay zero).
void bake_ternary(MlpModel& model, const std::vector<double>& deltas);

} // namespace hq
