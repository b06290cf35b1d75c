#include "hq/experiment.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace hq {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config: bad boolean for " + key + ": " + v);
}

std::vector<size_t> parse_size_list(const std::string& v) {
    std::vector<size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(static_cast<size_t>(std::stoull(trim(item))));
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(double v) { return std::isnan(v) ? "" : fmt(v); }

} // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::string section;
    std::stringstream ss(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(lineno) + ": bad section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        std::string full = section + "." + key;

        if (full == "data.dir") cfg.data_dir = val;
        else if (full == "data.synthetic") cfg.synthetic = parse_bool(val, full);
        else if (full == "data.train_count") cfg.synth_train = std::stoull(val);
        else if (full == "data.test_count") cfg.synth_test = std::stoull(val);
        else if (full == "data.noise") cfg.synth_noise = std::stod(val);
        else if (full == "model.input") cfg.input_dim = std::stoull(val);
        else if (full == "model.hidden") cfg.hidden = parse_size_list(val);
        else if (full == "model.classes") cfg.classes = std::stoull(val);
        else if (full == "model.hyper") cfg.hyper = parse_bool(val, full);
        else if (full == "model.exempt_first") cfg.exempt_first = parse_bool(val, full);
        else if (full == "model.exempt_last") cfg.exempt_last = parse_bool(val, full);
        else if (full == "train.seed") cfg.hq.seed = std::stoull(val);
        else if (full == "train.lr") cfg.hq.lr = std::stod(val);
        else if (full == "train.momentum") cfg.hq.momentum = std::stod(val);
        else if (full == "train.weight_decay") cfg.hq.weight_decay = std::stod(val);
        else if (full == "train.batch") cfg.hq.batch_size = std::stoull(val);
        else if (full == "train.restart_period") cfg.hq.lr_restart_period = std::stoull(val);
        else if (full == "train.pretrain_epochs") cfg.hq.pretrain_epochs = std::stoull(val);
        else if (full == "preprocess.r_low") cfg.hq.r_low = std::stod(val);
        else if (full == "preprocess.r_high") cfg.hq.r_high = std::stod(val);
        else if (full == "preprocess.step") cfg.hq.step = std::stod(val);
        else if (full == "preprocess.schedule") {
            if (val == "fixed") cfg.hq.step_schedule = StepSchedule::Fixed;
            else if (val == "cosine") cfg.hq.step_schedule = StepSchedule::Cosine;
            else throw std::runtime_error("config: schedule must be fixed or cosine");
        }
        else if (full == "preprocess.epochs_per_round") cfg.hq.epochs_per_round = std::stoull(val);
        else if (full == "preprocess.reinit") cfg.hq.reinit = parse_bool(val, full);
        else if (full == "preprocess.reinit_rounds") cfg.hq.reinit_rounds = std::stoull(val);
        else if (full == "preprocess.plateau_tol") cfg.hq.plateau_tol = std::stod(val);
        else if (full == "preprocess.plateau_patience") cfg.hq.plateau_patience = std::stoull(val);
        else if (full == "quantize.epochs") cfg.hq.quantize_epochs = std::stoull(val);
        else if (full == "quantize.eta_delta") cfg.hq.eta_delta = std::stod(val);
        else if (full == "quantize.patience") cfg.hq.quantize_patience = std::stoull(val);
        else if (full == "output.gzip_level") cfg.gzip_level = std::stoi(val);
        else if (full == "output.run_id") cfg.run_id = val;
        else throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key " + full);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// ---- checkpoints ----

namespace {

void write_bytes(std::ofstream& out, const void* p, size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) { write_bytes(out, &v, sizeof v); }

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error(path + ": truncated checkpoint");
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write("HQCK", 4);
    write_pod<uint16_t>(out, 1);
    uint8_t plen = static_cast<uint8_t>(ck.phase.size());
    write_pod(out, plen);
    write_bytes(out, ck.phase.data(), plen);
    write_pod<uint32_t>(out, static_cast<uint32_t>(ck.model.layers.size()));
    for (size_t k = 0; k < ck.model.layers.size(); ++k) {
        const auto& layer = ck.model.layers[k];
        write_pod<uint32_t>(out, static_cast<uint32_t>(layer.in_dim()));
        write_pod<uint32_t>(out, static_cast<uint32_t>(layer.out_dim()));
        write_pod<uint8_t>(out, layer.activation() == Activation::Relu ? 0 : 1);
        write_pod<uint8_t>(out, ck.model.quantize_exempt[k] ? 1 : 0);
        write_pod<uint8_t>(out, layer.hyper() ? 1 : 0);
        write_bytes(out, layer.raw().data(), layer.raw().size() * sizeof(double));
        for (double m : layer.mask().m.raw()) write_pod<uint8_t>(out, m != 0.0 ? 1 : 0);
        double d = k < ck.deltas.size() ? ck.deltas[k] : 0.0;
        write_pod(out, d);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "HQCK", 4) != 0)
        throw std::runtime_error(path + ": not a checkpoint file");
    uint16_t version = read_pod<uint16_t>(in, path);
    if (version != 1) throw std::runtime_error(path + ": unsupported checkpoint version");
    uint8_t plen = read_pod<uint8_t>(in, path);
    std::string phase(plen, '\0');
    in.read(phase.data(), plen);
    Checkpoint ck;
    ck.phase = phase;
    uint32_t n_layers = read_pod<uint32_t>(in, path);
    for (uint32_t k = 0; k < n_layers; ++k) {
        uint32_t rows = read_pod<uint32_t>(in, path);
        uint32_t cols = read_pod<uint32_t>(in, path);
        uint8_t act = read_pod<uint8_t>(in, path);
        uint8_t exempt = read_pod<uint8_t>(in, path);
        uint8_t hyper = read_pod<uint8_t>(in, path);
        Matrix raw(rows, cols);
        in.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(raw.size() * sizeof(double)));
        PruneMask pm{Matrix(rows, cols), 0.0};
        for (size_t i = 0; i < pm.m.size(); ++i) pm.m.raw()[i] = read_pod<uint8_t>(in, path) ? 1.0 : 0.0;
        double delta = read_pod<double>(in, path);
        if (!in) throw std::runtime_error(path + ": truncated checkpoint");

        SphereLayer layer;
        Matrix ones(rows, cols, 1.0);
        layer.set_weights_verbatim(ones); // placeholder to size the layer
        layer.set_activation(act == 0 ? Activation::Relu : Activation::Identity);
        layer.set_hyper(hyper != 0);
        layer.set_mask(pm);
        layer.set_raw(raw);
        ck.model.layers.push_back(std::move(layer));
        ck.model.quantize_exempt.push_back(exempt != 0);
        ck.deltas.push_back(delta);
    }
    return ck;
}

// ---- metrics ----

MetricsWriter::MetricsWriter(const std::string& out_dir, const std::string& run_id)
    : out_dir_(out_dir), run_id_(run_id) {}

MetricsSink MetricsWriter::sink_for(const std::string& phase) {
    auto csv = std::make_shared<std::ofstream>(out_dir_ + "/metrics_" + phase + ".csv");
    auto timing = std::make_shared<std::ofstream>(out_dir_ + "/timing_" + phase + ".csv");
    if (!*csv || !*timing)
        throw std::runtime_error("cannot open metrics files in " + out_dir_);
    *csv << "run_id,phase,epoch,layer,accuracy,loss,similarity,distance,sparsity,delta,mu_pos,mu_neg,q\n";
    *timing << "run_id,phase,epoch,wall_ms\n";
    std::string run_id = run_id_;
    return [csv, timing, run_id](const MetricsRecord& r) {
        *csv << run_id << ',' << r.phase << ',' << r.epoch << ',' << r.layer << ','
             << csv_field(r.accuracy) << ',' << csv_field(r.loss) << ','
             << csv_field(r.similarity) << ',' << csv_field(r.distance) << ','
             << csv_field(r.sparsity) << ',' << csv_field(r.delta) << ','
             << csv_field(r.mu_pos) << ',' << csv_field(r.mu_neg) << ',' << csv_field(r.q) << '\n';
        if (!std::isnan(r.wall_ms))
            *timing << run_id << ',' << r.phase << ',' << r.epoch << ',' << r.wall_ms << '\n';
    };
}

// ---- pipeline ----

std::vector<Phase> all_phases() {
    return {Phase::Pretrain, Phase::Preprocess, Phase::Quantize, Phase::Compress, Phase::Evaluate};
}

Phase phase_from_string(const std::string& s) {
    if (s == "pretrain") return Phase::Pretrain;
    if (s == "preprocess") return Phase::Preprocess;
    if (s == "quantize") return Phase::Quantize;
    if (s == "compress") return Phase::Compress;
    if (s == "evaluate") return Phase::Evaluate;
    throw std::runtime_error("unknown phase: " + s);
}

std::string phase_to_string(Phase p) {
    switch (p) {
        case Phase::Pretrain: return "pretrain";
        case Phase::Preprocess: return "preprocess";
        case Phase::Quantize: return "quantize";
        case Phase::Compress: return "compress";
        case Phase::Evaluate: return "evaluate";
    }
    return "?";
}

namespace {

void split_train_val(const Dataset& full, Dataset& train, Dataset& val, double val_frac = 0.1) {
    size_t n_val = static_cast<size_t>(static_cast<double>(full.size()) * val_frac);
    size_t n_train = full.size() - n_val;
    size_t dim = full.images.rows();
    train.images = Matrix(dim, n_train);
    val.images = Matrix(dim, n_val);
    train.num_classes = val.num_classes = full.num_classes;
    for (size_t k = 0; k < n_train; ++k) {
        for (size_t i = 0; i < dim; ++i) train.images.at(i, k) = full.images.at(i, k);
        train.labels.push_back(full.labels[k]);
    }
    for (size_t k = 0; k < n_val; ++k) {
        for (size_t i = 0; i < dim; ++i) val.images.at(i, k) = full.images.at(i, k + n_train);
        val.labels.push_back(full.labels[k + n_train]);
    }
}

void merge_summary(const std::string& path, const nlohmann::json& patch) {
    nlohmann::json j;
    std::ifstream in(path);
    if (in) {
        try { in >> j; } catch (...) { j = nlohmann::json::object(); }
    }
    for (auto it = patch.begin(); it != patch.end(); ++it) j[it.key()] = it.value();
    std::ofstream out(path);
    out << j.dump(2) << '\n';
}

Checkpoint load_latest_checkpoint(const std::string& out_dir,
                                  const std::vector<std::string>& candidates,
                                  const std::string& phase) {
    for (const auto& c : candidates) {
        std::string p = out_dir + "/" + c + ".hqck";
        if (fs::exists(p)) return load_checkpoint(p);
    }
    throw std::runtime_error("phase " + phase + ": no checkpoint found in " + out_dir +
                             " (run earlier phases first)");
}

} // namespace

void run_pipeline(const ExperimentConfig& cfg, const std::vector<Phase>& phases,
                  const std::string& out_dir) {
    fs::create_directories(out_dir);
    if (cfg.data_dir.empty()) throw std::runtime_error("config: data.dir is required");

    if (cfg.synthetic && !fs::exists(cfg.data_dir + "/train-images.idx3-ubyte")) {
        SyntheticSpec spec;
        spec.train_count = cfg.synth_train;
        spec.test_count = cfg.synth_test;
        spec.noise = cfg.synth_noise;
        spec.seed = cfg.hq.seed;
        spec.classes = cfg.classes;
        generate_synthetic_dataset(cfg.data_dir, spec);
    }
    DatasetPair data = load_idx_dataset(cfg.data_dir, cfg.classes);
    Dataset train, val;
    split_train_val(data.train, train, val);

    MetricsWriter writer(out_dir, cfg.run_id);

    for (Phase phase : phases) {
        std::string name = phase_to_string(phase);
        try {
            switch (phase) {
                case Phase::Pretrain: {
                    Rng rng(cfg.hq.seed);
                    std::vector<size_t> dims{cfg.input_dim};
                    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
                    dims.push_back(cfg.classes);
                    MlpModel model = MlpModel::make(dims, rng, cfg.hyper, cfg.exempt_first,
                                                    cfg.exempt_last);
                    pretrain(model, train, val, cfg.hq, rng, writer.sink_for("pretrain"));
                    save_checkpoint(out_dir + "/pretrain.hqck", {"pretrain", std::move(model), {}});
                    Checkpoint ck = load_checkpoint(out_dir + "/pretrain.hqck");
                    merge_summary(out_dir + "/summary.json",
                                  {{"run_id", cfg.run_id},
                                   {"seed", cfg.hq.seed},
                                   {"pretrain_accuracy", evaluate_accuracy(ck.model, data.test)}});
                    break;
                }
                case Phase::Preprocess: {
                    Checkpoint ck = load_latest_checkpoint(out_dir, {"pretrain"}, name);
                    Rng rng(cfg.hq.seed + 1);
                    preprocess(ck.model, train, val, cfg.hq, rng, writer.sink_for("preprocess"));
                    save_checkpoint(out_dir + "/preprocess.hqck",
                                    {"preprocess", std::move(ck.model), {}});
                    break;
                }
                case Phase::Quantize: {
                    Checkpoint ck = load_latest_checkpoint(out_dir, {"preprocess", "pretrain"}, name);
                    Rng rng(cfg.hq.seed + 2);
                    std::vector<double> deltas =
                        quantize_ternary(ck.model, train, val, cfg.hq, rng, writer.sink_for("quantize"));
                    save_checkpoint(out_dir + "/quantize.hqck",
                                    {"quantize", std::move(ck.model), deltas});
                    break;
                }
                case Phase::Compress: {
                    Checkpoint ck = load_latest_checkpoint(out_dir, {"quantize"}, name);
                    double distance = cosine_distance_model(ck.model);
                    bake_ternary(ck.model, ck.deltas);
                    SerializeOptions opts;
                    opts.gzip_level = cfg.gzip_level;
                    save_model_file(ck.model, out_dir + "/model.hqt", opts);
                    CompressionReport rep = compression_report(out_dir + "/model.hqt");
                    double sp = 0.0;
                    size_t zeros = 0, total = 0;
                    for (size_t k = 0; k < ck.model.layers.size(); ++k) {
                        if (ck.model.quantize_exempt[k]) continue;
                        const Matrix& w = ck.model.layers[k].weights();
                        zeros += static_cast<size_t>(
                            std::llround(sparsity(w) * static_cast<double>(w.size())));
                        total += w.size();
                    }
                    if (total) sp = static_cast<double>(zeros) / static_cast<double>(total);
                    merge_summary(out_dir + "/summary.json",
                                  {{"cosine_distance", distance},
                                   {"final_sparsity", sp},
                                   {"model_bytes", rep.file_bytes},
                                   {"bits_per_weight", rep.bits_per_weight},
                                   {"compression_ratio", rep.ratio}});
                    break;
                }
                case Phase::Evaluate: {
                    double acc = evaluate_model_file(out_dir + "/model.hqt", cfg.data_dir);
                    merge_summary(out_dir + "/summary.json", {{"quantized_accuracy", acc}});
                    break;
                }
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("phase " + name + ": " + e.what());
        }
    }
}

double evaluate_model_file(const std::string& model_path, const std::string& data_dir) {
    MlpModel model = load_model_file(model_path);
    pack_ternary(model); // hard-errors if a quantized layer is not exactly ternary
    DatasetPair data = load_idx_dataset(data_dir);
    return evaluate_accuracy(model, data.test);
}

} // namespace hq
