#include "hq/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace hq {

namespace {

Matrix gather_batch(const Dataset& data, const std::vector<size_t>& order, size_t lo, size_t hi,
                    std::vector<size_t>& labels_out) {
    size_t dim = data.images.rows();
    Matrix x(dim, hi - lo);
    labels_out.resize(hi - lo);
    for (size_t k = lo; k < hi; ++k) {
        size_t idx = order[k];
        for (size_t i = 0; i < dim; ++i) x.at(i, k - lo) = data.images.at(i, idx);
        labels_out[k - lo] = data.labels[idx];
    }
    return x;
}

std::vector<size_t> shuffled_order(size_t n, Rng& rng) {
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    return order;
}

// One plain SGD epoch over the full-precision (masked, renormalized) model.
double train_epoch(MlpModel& model, const Dataset& train, const HQConfig& cfg, double lr,
                   OptimizerState& opt, Rng& rng, const std::string& phase) {
    opt.lr = lr;
    std::vector<size_t> order = shuffled_order(train.size(), rng);
    double loss_sum = 0.0;
    std::vector<size_t> labels;
    for (size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
        size_t hi = std::min(order.size(), lo + cfg.batch_size);
        Matrix x = gather_batch(train, order, lo, hi, labels);
        Matrix logits = model.forward(x);
        LossResult res = softmax_cross_entropy(logits, labels);
        if (!std::isfinite(res.loss))
            throw std::runtime_error(phase + ": training diverged (non-finite loss)");
        loss_sum += res.loss * static_cast<double>(hi - lo);
        auto grads = model.backward(res.grad);
        for (size_t k = 0; k < model.layers.size(); ++k) {
            Matrix updated = sgd_step(model.layers[k].raw(), grads[k], opt, k,
                                      "layer" + std::to_string(k));
            model.layers[k].set_raw(updated);
        }
    }
    return loss_sum / static_cast<double>(order.size());
}

std::vector<Matrix> quantized_forward_weights(const MlpModel& model,
                                              const std::vector<double>& deltas,
                                              const std::string& where) {
    std::vector<Matrix> q(model.layers.size());
    for (size_t k = 0; k < model.layers.size(); ++k) {
        if (model.quantize_exempt[k]) continue;
        TernaryWeights t = ternary(model.layers[k].weights(), deltas[k]);
        for (size_t j = 0; j < t.cols; ++j)
            if (t.support[j] == 0)
                throw std::runtime_error(where + ": threshold killed column " + std::to_string(j) +
                                         " of layer " + std::to_string(k));
        q[k] = t.reconstruct();
    }
    return q;
}

double quantize_epoch(MlpModel& model, const Dataset& train, const HQConfig& cfg, double lr,
                      OptimizerState& opt, std::vector<double>& deltas, Rng& rng) {
    opt.lr = lr;
    std::vector<size_t> order = shuffled_order(train.size(), rng);
    double loss_sum = 0.0;
    std::vector<size_t> labels;
    for (size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
        size_t hi = std::min(order.size(), lo + cfg.batch_size);
        Matrix x = gather_batch(train, order, lo, hi, labels);

        std::vector<Matrix> q = quantized_forward_weights(model, deltas, "quantize");
        std::vector<const Matrix*> q_ptr(model.layers.size(), nullptr);
        for (size_t k = 0; k < model.layers.size(); ++k)
            if (!model.quantize_exempt[k]) q_ptr[k] = &q[k];

        Matrix logits = model.forward(x, &q_ptr);
        LossResult res = softmax_cross_entropy(logits, labels);
        if (!std::isfinite(res.loss))
            throw std::runtime_error("quantize: training diverged (non-finite loss)");
        loss_sum += res.loss * static_cast<double>(hi - lo);

        auto grads = model.backward_all(res.grad);
        for (size_t k = 0; k < model.layers.size(); ++k) {
            auto& layer = model.layers[k];
            if (model.quantize_exempt[k]) {
                Matrix updated = sgd_step(layer.raw(), grads[k].v, opt, k,
                                          "layer" + std::to_string(k));
                layer.set_raw(updated);
            } else {
                deltas[k] = update_threshold(deltas[k], grads[k].w, layer.mask(), cfg.eta_delta);
                Matrix g = ste_backward(grads[k].w, layer.mask());
                Matrix updated = sgd_step(layer.weights(), g, opt, k,
                                          "layer" + std::to_string(k));
                layer.set_raw(updated);
            }
        }
    }
    return loss_sum / static_cast<double>(order.size());
}

void emit_metrics(const MlpModel& model, const std::vector<double>* deltas,
                  const std::string& phase, size_t epoch, double acc, double loss,
                  double wall_ms, const MetricsSink& sink) {
    if (!sink) return;
    double sim_sum = 0.0;
    size_t quantized = 0, zeros = 0, total = 0;
    for (size_t k = 0; k < model.layers.size(); ++k) {
        if (model.quantize_exempt[k]) continue;
        const Matrix& w = model.layers[k].weights();
        LayerGeometry g = layer_geometry(w);
        double fw_sparsity = g.sparsity;
        if (deltas) {
            TernaryWeights t = ternary(w, (*deltas)[k]);
            fw_sparsity = sparsity(t.reconstruct());
        }
        MetricsRecord rec;
        rec.phase = phase;
        rec.epoch = epoch;
        rec.layer = static_cast<int>(k);
        rec.similarity = g.similarity;
        rec.sparsity = fw_sparsity;
        rec.delta = deltas ? (*deltas)[k] : 0.0;
        if (g.mu_pos) rec.mu_pos = *g.mu_pos;
        if (g.mu_neg) rec.mu_neg = *g.mu_neg;
        rec.q = g.q;
        sink(rec);
        sim_sum += g.similarity;
        ++quantized;
        zeros += static_cast<size_t>(std::llround(fw_sparsity * static_cast<double>(w.size())));
        total += w.size();
    }
    MetricsRecord rec;
    rec.phase = phase;
    rec.epoch = epoch;
    rec.layer = -1;
    rec.accuracy = acc;
    rec.loss = loss;
    if (quantized) {
        rec.distance = 1.0 - sim_sum / static_cast<double>(quantized);
        rec.sparsity = static_cast<double>(zeros) / static_cast<double>(total);
    }
    rec.wall_ms = wall_ms;
    sink(rec);
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

} // namespace

std::vector<double> ratio_schedule(const HQConfig& cfg) {
    if (cfg.r_low < 0.0 || cfg.r_low > cfg.r_high || cfg.r_high >= 1.0)
        throw std::runtime_error("ratio_schedule: need 0 <= r_low <= r_high < 1");
    if (cfg.reinit_rounds == 1 || cfg.r_high == cfg.r_low) return {cfg.r_high};

    size_t rounds;
    if (cfg.reinit_rounds > 1) {
        rounds = cfg.reinit_rounds;
    } else {
        if (cfg.step <= 0.0) throw std::runtime_error("ratio_schedule: step must be > 0");
        rounds = static_cast<size_t>(std::ceil((cfg.r_high - cfg.r_low) / cfg.step)) + 1;
    }
    std::vector<double> out;
    for (size_t k = 0; k < rounds; ++k) {
        double frac = static_cast<double>(k) / static_cast<double>(rounds - 1);
        if (cfg.step_schedule == StepSchedule::Cosine)
            frac = 0.5 * (1.0 - std::cos(3.141592653589793 * frac));
        out.push_back(cfg.r_low + (cfg.r_high - cfg.r_low) * frac);
    }
    out.back() = cfg.r_high;
    return out;
}

double update_threshold(double delta, const Matrix& grads, const PruneMask& m, double eta) {
    check_same_shape(grads, m.m, "update_threshold");
    double sum = 0.0;
    size_t live = 0;
    for (size_t i = 0; i < grads.size(); ++i) {
        if (m.m.raw()[i] == 0.0) continue;
        sum += grads.raw()[i];
        ++live;
    }
    if (live == 0) return delta;
    return delta + eta * std::fabs(sum / static_cast<double>(live));
}

double evaluate_accuracy(MlpModel& model, const Dataset& data) {
    if (data.size() == 0) throw std::runtime_error("evaluate_accuracy: empty dataset");
    const size_t chunk = 512;
    size_t correct = 0;
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<size_t> labels;
    for (size_t lo = 0; lo < data.size(); lo += chunk) {
        size_t hi = std::min(data.size(), lo + chunk);
        Matrix x = gather_batch(data, order, lo, hi, labels);
        Matrix logits = model.forward(x);
        for (size_t k = 0; k < hi - lo; ++k) {
            size_t arg = 0;
            for (size_t c = 1; c < logits.rows(); ++c)
                if (logits.at(c, k) > logits.at(arg, k)) arg = c;
            if (arg == labels[k]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

double evaluate_accuracy_quantized(MlpModel& model, const std::vector<double>& deltas,
                                   const Dataset& data) {
    std::vector<Matrix> q = quantized_forward_weights(model, deltas, "evaluate");
    std::vector<const Matrix*> q_ptr(model.layers.size(), nullptr);
    for (size_t k = 0; k < model.layers.size(); ++k)
        if (!model.quantize_exempt[k]) q_ptr[k] = &q[k];
    const size_t chunk = 512;
    size_t correct = 0;
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<size_t> labels;
    for (size_t lo = 0; lo < data.size(); lo += chunk) {
        size_t hi = std::min(data.size(), lo + chunk);
        Matrix x = gather_batch(data, order, lo, hi, labels);
        Matrix logits = model.forward(x, &q_ptr);
        for (size_t k = 0; k < hi - lo; ++k) {
            size_t arg = 0;
            for (size_t c = 1; c < logits.rows(); ++c)
                if (logits.at(c, k) > logits.at(arg, k)) arg = c;
            if (arg == labels[k]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

} // namespace

void pretrain(MlpModel& model, const Dataset& train, const Dataset& val, const HQConfig& cfg,
              Rng& rng, const MetricsSink& sink) {
    OptimizerState opt;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;
    LrSchedule sched{cfg.lr, 0.0, cfg.lr_restart_period};
    for (size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        Stopwatch sw;
        double loss = train_epoch(model, train, cfg, cosine_annealing_lr(epoch, sched), opt, rng,
                                  "pretrain");
        double acc = evaluate_accuracy(model, val);
        emit_metrics(model, nullptr, "pretrain", epoch, acc, loss, sw.ms(), sink);
    }
}

std::vector<PruneMask> preprocess(MlpModel& model, const Dataset& train, const Dataset& val,
                                  const HQConfig& cfg, Rng& rng, const MetricsSink& sink) {
    OptimizerState opt;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;
    LrSchedule sched{cfg.lr, 0.0, cfg.lr_restart_period};
    size_t epoch = 0;
    for (double r : ratio_schedule(cfg)) {
        for (size_t k = 0; k < model.layers.size(); ++k) {
            if (model.quantize_exempt[k]) continue;
            auto& layer = model.layers[k];
            PruneMask pm = mask(layer.weights(), r);
            for (size_t j = 0; j < pm.m.cols(); ++j) {
                size_t live = 0;
                for (size_t i = 0; i < pm.m.rows(); ++i)
                    if (pm.m.at(i, j) != 0.0) ++live;
                if (live == 0)
                    throw std::runtime_error("preprocess: over-pruning killed column " +
                                             std::to_string(j) + " of layer " + std::to_string(k) +
                                             " at ratio " + std::to_string(r));
            }
            layer.set_mask(pm);
            if (cfg.reinit) layer.set_raw(reinitialize(layer.weights(), pm));
        }
        double best_val_loss = std::numeric_limits<double>::infinity();
        size_t stale = 0;
        for (size_t e = 0; e < cfg.epochs_per_round; ++e, ++epoch) {
            Stopwatch sw;
            double loss = train_epoch(model, train, cfg, cosine_annealing_lr(epoch, sched), opt,
                                      rng, "preprocess");
            double acc = evaluate_accuracy(model, val);
            emit_metrics(model, nullptr, "preprocess", epoch, acc, loss, sw.ms(), sink);
            // plateau exit on validation loss
            std::vector<size_t> labels;
            std::vector<size_t> order(val.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            Matrix xv = gather_batch(val, order, 0, val.size(), labels);
            double val_loss = softmax_cross_entropy(model.forward(xv), labels).loss;
            if (val_loss < best_val_loss - cfg.plateau_tol) {
                best_val_loss = val_loss;
                stale = 0;
            } else if (++stale >= cfg.plateau_patience) {
                ++epoch;
                break;
            }
        }
    }
    std::vector<PruneMask> masks;
    for (auto& layer : model.layers) masks.push_back(layer.mask());
    return masks;
}

std::vector<double> quantize_ternary(MlpModel& model, const Dataset& train, const Dataset& val,
                                     const HQConfig& cfg, Rng& rng, const MetricsSink& sink) {
    OptimizerState opt;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;
    LrSchedule sched{cfg.lr, 0.0, cfg.lr_restart_period};
    std::vector<double> deltas(model.layers.size(), 0.0);

    std::vector<Matrix> best_raw;
    std::vector<double> best_deltas = deltas;
    double best_acc = -1.0;
    size_t declining = 0;

    for (size_t epoch = 0; epoch < cfg.quantize_epochs; ++epoch) {
        Stopwatch sw;
        double loss = quantize_epoch(model, train, cfg, cosine_annealing_lr(epoch, sched), opt,
                                     deltas, rng);
        double acc = evaluate_accuracy_quantized(model, deltas, val);
        emit_metrics(model, &deltas, "quantize", epoch, acc, loss, sw.ms(), sink);
        if (acc >= best_acc) {
            best_acc = acc;
            best_deltas = deltas;
            best_raw.clear();
            for (auto& layer : model.layers) best_raw.push_back(layer.raw());
            declining = 0;
        } else if (++declining >= cfg.quantize_patience) {
            break;
        }
    }
    if (!best_raw.empty())
        for (size_t k = 0; k < model.layers.size(); ++k) model.layers[k].set_raw(best_raw[k]);
    return best_deltas;
}

void bake_ternary(MlpModel& model, const std::vector<double>& deltas) {
    for (size_t k = 0; k < model.layers.size(); ++k) {
        if (model.quantize_exempt[k]) continue;
        auto& layer = model.layers[k];
        TernaryWeights t = ternary(layer.weights(), deltas[k]);
        for (size_t j = 0; j < t.cols; ++j)
            if (t.support[j] == 0)
                throw std::runtime_error("bake_ternary: dead column " + std::to_string(j) +
                                         " in layer " + std::to_string(k));
        Activation act = layer.activation();
        layer.set_weights_verbatim(t.reconstruct());
        layer.set_activation(act);
    }
}

} // namespace hq
