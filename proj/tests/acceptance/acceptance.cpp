// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any fail. Training-based checks share one
// synthetic dataset and a small MLP sized so the whole binary finishes in
// tens of minutes on one CPU.

#include "hq/codec.hpp"
#include "hq/experiment.hpp"
#include "hq/geometry.hpp"
#include "hq/quantize.hpp"
#include "hq/rng.hpp"
#include "hq/sphere.hpp"
#include "hq/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace hq;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::cout << "criterion " << criterion << ": " << (pass ? "PASS" : "FAIL")
              << " - " << detail << std::endl;
    if (!pass) ++g_failures;
}

Matrix random_unit_column(size_t n, Rng& rng) {
    Matrix w(n, 1);
    double sq = 0.0;
    for (size_t i = 0; i < n; ++i) {
        w.at(i, 0) = rng.normal();
        sq += w.at(i, 0) * w.at(i, 0);
    }
    double inv = 1.0 / std::sqrt(sq);
    for (size_t i = 0; i < n; ++i) w.at(i, 0) *= inv;
    return w;
}

double column_sim_to_ternary(const Matrix& w) {
    TernaryWeights t = ternary(w, 0.0);
    return cosine_similarity_column(t.reconstruct().column(0), w.column(0));
}

// ---------------------------------------------------------------- criterion 1
void criterion1() {
    bool ok = true;
    std::ostringstream msg;
    struct Case {
        std::vector<double> w;
        double expect;
    };
    std::vector<Case> cases = {{{0.3, 0.2, 0.0001}, 0.80},
                               {{0.3, 0.2, 0.0}, 0.98},
                               {{0.3, 0.0, 0.0}, 1.0}};
    for (const auto& c : cases) {
        Matrix w(c.w.size(), 1);
        for (size_t i = 0; i < c.w.size(); ++i) w.at(i, 0) = c.w[i];
        double s = column_sim_to_ternary(w);
        if (std::fabs(s - c.expect) > 0.005) ok = false;
        msg << s << " ";
    }
    report(1, ok, "worked-example similarities " + msg.str() +
                      "(expect 0.80 0.98 1.0, tol 0.005)");
}

// ---------------------------------------------------------------- criterion 2
void criterion2() {
    Rng rng(1001);
    size_t violations = 0, checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        size_t n = 4 + rng.index(509); // 4..512
        Matrix w = random_unit_column(n, rng);
        double base = column_sim_to_ternary(w);
        for (int ri = 1; ri <= 9; ++ri) {
            double r = 0.1 * ri;
            if (static_cast<size_t>(std::ceil(r * double(n))) >= n) continue;
            Matrix p = prune(w, r);
            double nn = 0.0;
            for (size_t i = 0; i < n; ++i) nn += p.at(i, 0) * p.at(i, 0);
            if (nn == 0.0) continue;
            double inv = 1.0 / std::sqrt(nn);
            for (size_t i = 0; i < n; ++i) p.at(i, 0) *= inv;
            double s = column_sim_to_ternary(p);
            ++checked;
            if (s < base - 1e-12) ++violations;
        }
    }
    std::ostringstream msg;
    msg << violations << " violations over " << checked
        << " prune+renormalize similarity comparisons";
    report(2, violations == 0 && checked >= 1000, msg.str());
}

// ---------------------------------------------------------------- criterion 3
void criterion3() {
    Rng rng(1002);
    bool ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        size_t n = 3 + rng.index(40), m = 1 + rng.index(20);
        Matrix w(n, m);
        for (double& v : w.raw()) v = rng.normal();
        TernaryWeights t = ternary(w, rng.uniform());
        Matrix r = t.reconstruct();
        for (size_t j = 0; j < m; ++j) {
            if (t.support[j] == 0) continue;
            double sq = 0.0;
            for (size_t i = 0; i < n; ++i) sq += r.at(i, j) * r.at(i, j);
            double err = std::fabs(std::sqrt(sq) - 1.0);
            worst = std::max(worst, err);
            if (err > 1e-12) ok = false;
        }
        // straight-through backward must be the mask-projected identity
        PruneMask pm = mask(w, 0.5 * rng.uniform());
        Matrix g(n, m);
        for (double& v : g.raw()) v = rng.normal();
        Matrix back = ste_backward(g, pm);
        for (size_t i = 0; i < g.size(); ++i) {
            double want = pm.m.raw()[i] != 0.0 ? g.raw()[i] : 0.0;
            if (back.raw()[i] != want) ok = false;
        }
    }
    std::ostringstream msg;
    msg << "1000 matrices, worst live-column norm error " << worst
        << " (tol 1e-12), STE bit-exact";
    report(3, ok, msg.str());
}

// ---------------------------------------------------------------- criterion 4
void criterion4() {
    bool ok = true;
    double worst = 0.0;
    for (uint64_t seed : {41ULL, 42ULL, 43ULL}) {
        Rng rng(seed);
        MlpModel model = MlpModel::make({6, 5, 4}, rng, true, false, false);
        Matrix x(6, 3);
        for (double& v : x.raw()) v = std::fabs(rng.normal()) + 0.05;
        std::vector<size_t> labels{size_t(rng.index(4)), size_t(rng.index(4)),
                                   size_t(rng.index(4))};
        Matrix logits = model.forward(x);
        auto res = softmax_cross_entropy(logits, labels);
        auto grads = model.backward(res.grad);
        const double h = 1e-4;
        for (size_t k = 0; k < model.layers.size(); ++k) {
            for (size_t i = 0; i < model.layers[k].raw().size(); i += 2) {
                auto loss_at = [&](double d) {
                    MlpModel probe = model;
                    Matrix v = probe.layers[k].raw();
                    v.raw()[i] += d;
                    probe.layers[k].set_raw(v);
                    return softmax_cross_entropy(probe.forward(x), labels).loss;
                };
                double fd = (loss_at(h) - loss_at(-h)) / (2 * h);
                double an = grads[k].raw()[i];
                if (std::fabs(fd) < 1e-9 && std::fabs(an) < 1e-9) continue;
                double rel = std::fabs(fd - an) / std::max(1.0, std::fabs(fd));
                worst = std::max(worst, rel);
                if (rel > 1e-4) ok = false;
            }
        }
    }
    std::ostringstream msg;
    msg << "central finite differences, worst relative error " << worst
        << " (tol 1e-4)";
    report(4, ok, msg.str());
}

// ---------------------------------------------------------------- criterion 5
void criterion5() {
    Rng rng(1005);
    bool roundtrip_ok = true, huffman_ok = true;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<size_t> dims{4 + rng.index(40), 3 + rng.index(24),
                                 2 + rng.index(10)};
        MlpModel m = MlpModel::make(dims, rng, true, false, true);
        for (size_t k = 0; k < m.layers.size(); ++k) {
            if (m.quantize_exempt[k]) continue;
            // signed weights so all three ternary symbols appear in the stream
            Matrix v = m.layers[k].raw();
            for (double& x : v.raw()) x = rng.normal();
            m.layers[k].set_raw(v);
            TernaryWeights t = ternary(m.layers[k].weights(), 0.4 * rng.uniform());
            bool dead = false;
            for (size_t s : t.support)
                if (s == 0) dead = true;
            if (dead) t = ternary(m.layers[k].weights(), 0.0);
            m.layers[k].set_weights_verbatim(t.reconstruct());
        }
        auto bytes = serialize_model(m);
        MlpModel back = deserialize_model(bytes);
        for (size_t k = 0; k < m.layers.size(); ++k) {
            if (m.quantize_exempt[k]) continue;
            const Matrix& a = m.layers[k].weights();
            const Matrix& b = back.layers[k].weights();
            for (size_t i = 0; i < a.size(); ++i)
                if (a.raw()[i] != b.raw()[i]) roundtrip_ok = false;
        }
        TripleCodebook cb = build_codebook(pack_ternary(m));
        if (!cb.empty() &&
            cb.expected_bits_per_triple() >= cb.entropy_bits_per_triple() + 1.0)
            huffman_ok = false;
    }
    // iid stream with p(0) = 0.8
    TernaryStream st;
    size_t n = 300000;
    for (size_t i = 0; i < n; ++i) {
        double u = rng.uniform();
        st.symbols.push_back(u < 0.8 ? 0 : (u < 0.9 ? 1 : -1));
    }
    TripleCodebook cb = build_codebook(st);
    uint64_t bits = 0;
    encode(st, cb, &bits);
    double bpw = double(bits) / double(n);
    std::ostringstream msg;
    msg << "100 roundtrips " << (roundtrip_ok ? "exact" : "BROKEN")
        << ", E[len] < H+1 " << (huffman_ok ? "held" : "violated")
        << ", p0=0.8 stream " << bpw << " bits/weight (<= 1.26)";
    report(5, roundtrip_ok && huffman_ok && bpw <= 1.26, msg.str());
}

// ------------------------------------------------------ training shared state
struct TrainedRun {
    MlpModel model;
    std::vector<MetricsRecord> pre_records;  // preprocess phase
    double distance = 0.0;
};

DatasetPair g_data;
Dataset g_train, g_val;

void prepare_data() {
    std::string dir = (fs::temp_directory_path() / "hq_acceptance_data").string();
    fs::create_directories(dir);
    SyntheticSpec spec;
    spec.train_count = 4000;
    spec.test_count = 1000;
    spec.noise = 0.25;
    spec.seed = 5;
    generate_synthetic_dataset(dir, spec);
    g_data = load_idx_dataset(dir);
    // last tenth of train as validation
    size_t n = g_data.train.size(), n_val = n / 10, n_tr = n - n_val;
    size_t pix = g_data.train.images.rows();
    g_train.num_classes = g_val.num_classes = 10;
    g_train.images = Matrix(pix, n_tr);
    g_val.images = Matrix(pix, n_val);
    for (size_t s = 0; s < n; ++s) {
        Matrix& dst = s < n_tr ? g_train.images : g_val.images;
        size_t col = s < n_tr ? s : s - n_tr;
        for (size_t p = 0; p < pix; ++p) dst.at(p, col) = g_data.train.images.at(p, s);
        (s < n_tr ? g_train.labels : g_val.labels).push_back(g_data.train.labels[s]);
    }
}

HQConfig desk_config() {
    HQConfig cfg;
    cfg.pretrain_epochs = 15;
    cfg.epochs_per_round = 4;
    cfg.quantize_epochs = 30;
    cfg.reinit_rounds = 6;
    cfg.r_low = 0.3;
    cfg.r_high = 0.55;
    cfg.step_schedule = StepSchedule::Fixed;
    cfg.lr = 0.05;
    cfg.batch_size = 128;
    cfg.eta_delta = 1.2;
    cfg.plateau_patience = 100; // fixed epoch budget for comparable runs
    cfg.seed = 1;
    return cfg;
}

// Pretrains once and caches; every variant starts from the same weights.
MlpModel& pretrained_model() {
    static MlpModel model;
    static bool done = false;
    if (!done) {
        HQConfig cfg = desk_config();
        Rng rng(cfg.seed);
        model = MlpModel::make({784, 32, 10}, rng, true, false, true);
        pretrain(model, g_train, g_val, cfg, rng);
        done = true;
    }
    return model;
}

// ------------------------------------------------- criteria 6 and 7 (trends)
void criteria6and7() {
    HQConfig base = desk_config();

    // variant A: prune + reinitialize down to matched sparsity 0.4
    HQConfig cfg_a = base;
    cfg_a.r_low = 0.1;
    cfg_a.r_high = 0.4;
    cfg_a.reinit_rounds = 5;
    cfg_a.reinit = true;
    MlpModel model_a = pretrained_model();
    std::vector<MetricsRecord> rec_a;
    {
        Rng rng(base.seed + 1);
        preprocess(model_a, g_train, g_val, cfg_a, rng,
                   [&](const MetricsRecord& r) { rec_a.push_back(r); });
    }
    double d_a = cosine_distance_model(model_a);

    // variant B: prune only, same final sparsity, >= 20 epochs at fixed mask
    // (single round) for the drift trend
    HQConfig cfg_b = base;
    cfg_b.r_low = 0.4;
    cfg_b.r_high = 0.4;
    cfg_b.reinit = false;
    cfg_b.reinit_rounds = 1;
    cfg_b.epochs_per_round = 40;
    MlpModel model_b = pretrained_model();
    std::vector<MetricsRecord> rec_b;
    {
        Rng rng(base.seed + 1);
        preprocess(model_b, g_train, g_val, cfg_b, rng,
                   [&](const MetricsRecord& r) { rec_b.push_back(r); });
    }
    double d_b = cosine_distance_model(model_b);

    // variant C: no pruning at all, same training budget as B
    HQConfig cfg_c = cfg_b;
    cfg_c.r_low = 0.0;
    cfg_c.r_high = 0.0;
    MlpModel model_c = pretrained_model();
    {
        Rng rng(base.seed + 1);
        preprocess(model_c, g_train, g_val, cfg_c, rng);
    }
    double d_c = cosine_distance_model(model_c);

    {
        bool ordered = (d_a < d_b - 0.005) && (d_b < d_c - 0.005);
        std::ostringstream msg;
        msg << "cosine distance D: prune+reinit " << d_a << " < prune " << d_b
            << " < no-prune " << d_c << " (margin 0.005)";
        report(6, ordered, msg.str());
    }

    // criterion 7a: fixed-sparsity run drifts toward zero: |mu+| and |mu-|
    // shrink between the first and last 3 epochs
    std::vector<double> mp, mn;
    for (const auto& r : rec_b) {
        if (r.layer != 0) continue;
        if (!std::isnan(r.mu_pos)) mp.push_back(std::fabs(r.mu_pos));
        if (!std::isnan(r.mu_neg)) mn.push_back(std::fabs(r.mu_neg));
    }
    auto head_tail_drop = [](const std::vector<double>& v) {
        if (v.size() < 8) return false;
        double head = (v[0] + v[1] + v[2]) / 3.0;
        double tail = (v[v.size() - 1] + v[v.size() - 2] + v[v.size() - 3]) / 3.0;
        return tail < head;
    };
    bool drift_ok = head_tail_drop(mp) && head_tail_drop(mn) && mp.size() >= 20;

    // criterion 7b: with reinit, |mu+-| sits within 10% of Q after each round.
    // Round starts show up as sparsity jumps in the per-layer trace.
    bool reinit_ok = true;
    size_t rounds_seen = 0;
    double prev_sparsity = -1.0;
    for (const auto& r : rec_a) {
        if (r.layer != 0) continue;
        bool new_round = r.sparsity > prev_sparsity + 1e-9;
        prev_sparsity = std::max(prev_sparsity, r.sparsity);
        if (!new_round) continue;
        ++rounds_seen;
        if (std::isnan(r.mu_pos) || std::isnan(r.mu_neg) || r.q <= 0.0) {
            reinit_ok = false;
            continue;
        }
        if (std::fabs(std::fabs(r.mu_pos) - r.q) > 0.10 * r.q) reinit_ok = false;
        if (std::fabs(std::fabs(r.mu_neg) - r.q) > 0.10 * r.q) reinit_ok = false;
    }
    {
        std::ostringstream msg;
        msg << "fixed-sparsity |mu+-| drop over " << mp.size() << " epochs "
            << (drift_ok ? "held" : "violated") << "; |mu+-| within 10% of Q at "
            << rounds_seen << " reinit rounds " << (reinit_ok ? "held" : "violated");
        report(7, drift_ok && reinit_ok && rounds_seen >= 3, msg.str());
    }
}

// ------------------------------------------------- criteria 8 and 9 (quantize)
void criteria8and9() {
    HQConfig cfg = desk_config();
    MlpModel model = pretrained_model();
    double fp_acc = evaluate_accuracy(model, g_data.test);

    std::vector<MetricsRecord> pre_rec, q_rec;
    {
        Rng rng(cfg.seed + 1);
        preprocess(model, g_train, g_val, cfg, rng,
                   [&](const MetricsRecord& r) { pre_rec.push_back(r); });
    }
    {
        Rng rng(cfg.seed + 2);
        auto deltas = quantize_ternary(model, g_train, g_val, cfg, rng,
                                       [&](const MetricsRecord& r) { q_rec.push_back(r); });
        bake_ternary(model, deltas);
    }

    // criterion 8: per-layer delta monotone non-decreasing, model sparsity
    // non-decreasing, late delta increments smaller than early ones
    std::vector<double> deltas_seen, sparsity_seen;
    for (const auto& r : q_rec) {
        if (r.layer == 0) deltas_seen.push_back(r.delta);
        if (r.layer == -1) sparsity_seen.push_back(r.sparsity);
    }
    bool delta_monotone = true, sparsity_monotone = true;
    for (size_t i = 1; i < deltas_seen.size(); ++i)
        if (deltas_seen[i] < deltas_seen[i - 1] - 1e-12) delta_monotone = false;
    for (size_t i = 1; i < sparsity_seen.size(); ++i)
        if (sparsity_seen[i] < sparsity_seen[i - 1] - 1e-9) sparsity_monotone = false;
    bool slowing = false;
    if (deltas_seen.size() >= 8) {
        size_t quarter = deltas_seen.size() / 4;
        double early = 0.0, late = 0.0;
        for (size_t i = 1; i <= quarter; ++i)
            early += deltas_seen[i] - deltas_seen[i - 1];
        for (size_t i = deltas_seen.size() - quarter; i < deltas_seen.size(); ++i)
            late += deltas_seen[i] - deltas_seen[i - 1];
        slowing = late / double(quarter) < early / double(quarter);
    }
    {
        std::ostringstream msg;
        msg << "delta trace " << (delta_monotone ? "monotone" : "NOT monotone")
            << ", sparsity " << (sparsity_monotone ? "monotone" : "NOT monotone")
            << ", late increments " << (slowing ? "smaller" : "NOT smaller")
            << " than early (" << deltas_seen.size() << " epochs)";
        report(8, delta_monotone && sparsity_monotone && slowing, msg.str());
    }

    // criterion 9: sparsity window, accuracy drop, compression ratio
    double final_sparsity = 0.0;
    size_t zeros = 0, total = 0;
    for (size_t k = 0; k < model.layers.size(); ++k) {
        if (model.quantize_exempt[k]) continue;
        const Matrix& w = model.layers[k].weights();
        for (double v : w.raw())
            if (v == 0.0) ++zeros;
        total += w.size();
    }
    final_sparsity = double(zeros) / double(total);

    double q_acc = evaluate_accuracy(model, g_data.test);
    std::string path = (fs::temp_directory_path() / "hq_acceptance_model.hqt").string();
    save_model_file(model, path);
    CompressionReport rep = compression_report(path);

    bool sparsity_ok = final_sparsity >= 0.70 && final_sparsity <= 0.85;
    bool acc_ok = (fp_acc - q_acc) <= 0.025;
    bool size_ok = rep.ratio >= 12.0;
    {
        std::ostringstream msg;
        msg << "sparsity " << final_sparsity << " (want 0.70..0.85), accuracy "
            << q_acc << " vs full-precision " << fp_acc << " (drop <= 0.025), file "
            << rep.file_bytes << " B, " << rep.ratio << "x smaller (want >= 12x)";
        report(9, sparsity_ok && acc_ok && size_ok, msg.str());
    }
    std::remove(path.c_str());
}

// --------------------------------------------------------------- criterion 10
void criterion10() {
    std::string data_dir = (fs::temp_directory_path() / "hq_accept_det_data").string();
    std::string out_a = (fs::temp_directory_path() / "hq_accept_det_a").string();
    std::string out_b = (fs::temp_directory_path() / "hq_accept_det_b").string();
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    ExperimentConfig cfg;
    cfg.data_dir = data_dir;
    cfg.synthetic = true;
    cfg.synth_train = 600;
    cfg.synth_test = 150;
    cfg.hidden = {32};
    cfg.hq.pretrain_epochs = 4;
    cfg.hq.epochs_per_round = 2;
    cfg.hq.quantize_epochs = 5;
    cfg.hq.reinit_rounds = 4;
    cfg.hq.r_low = 0.2;
    cfg.hq.r_high = 0.5;
    cfg.hq.lr = 0.02;
    cfg.hq.batch_size = 64;
    cfg.hq.seed = 17;

    run_pipeline(cfg, all_phases(), out_a);
    run_pipeline(cfg, all_phases(), out_b);

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    bool ok = true;
    std::string first_diff;
    for (const char* f : {"model.hqt", "metrics_pretrain.csv",
                          "metrics_preprocess.csv", "metrics_quantize.csv",
                          "summary.json"}) {
        std::string a = slurp(fs::path(out_a) / f), b = slurp(fs::path(out_b) / f);
        if (a.empty() || a != b) {
            ok = false;
            if (first_diff.empty()) first_diff = f;
        }
    }
    std::ostringstream msg;
    if (ok)
        msg << "two identical runs produced byte-identical CSVs and model files";
    else
        msg << "runs differ (first mismatch: " << first_diff << ")";
    report(10, ok, msg.str());
    fs::remove_all(out_a);
    fs::remove_all(out_b);
}

} // namespace

int main() {
    try {
        criterion1();
        criterion2();
        criterion3();
        criterion4();
        criterion5();
        prepare_data();
        criteria6and7();
        criteria8and9();
        criterion10();
    } catch (const std::exception& e) {
        std::cout << "acceptance aborted: " << e.what() << std::endl;
        return 2;
    }
    std::cout << (g_failures == 0 ? "all criteria passed"
                                  : std::to_string(g_failures) + " criteria failed")
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
