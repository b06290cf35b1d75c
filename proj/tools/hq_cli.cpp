#include "hq/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

struct CommonOpts {
    std::string config;
    std::string out = "out";
    uint64_t seed = 0;
    bool seed_set = false;
    bool no_hyper = false;
    bool no_reinit = false;
    int64_t reinit_rounds = -1;
    double r_low = -1.0, r_high = -1.0, step = -1.0;
    std::string step_schedule;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "experiment config file")->required();
    cmd->add_option("--out", o.out, "run output directory");
    cmd->add_option("--seed", o.seed, "override the config seed");
    cmd->add_flag("--no-hyper", o.no_hyper, "plain (non-hyperspherical) layers");
    cmd->add_flag("--no-reinit", o.no_reinit, "prune without reinitialization");
    cmd->add_option("--reinit-rounds", o.reinit_rounds, "number of prune+reinit rounds");
    cmd->add_option("--r-low", o.r_low, "starting pruning ratio");
    cmd->add_option("--r-high", o.r_high, "target pruning ratio");
    cmd->add_option("--step", o.step, "pruning ratio step size");
    cmd->add_option("--step-schedule", o.step_schedule, "fixed or cosine")
        ->check(CLI::IsMember({"fixed", "cosine"}));
}

hq::ExperimentConfig build_config(const CLI::App* cmd, const CommonOpts& o) {
    hq::ExperimentConfig cfg = hq::parse_config_file(o.config);
    if (cmd->count("--seed")) cfg.hq.seed = o.seed;
    if (o.no_hyper) cfg.hyper = false;
    if (o.no_reinit) cfg.hq.reinit = false;
    if (o.reinit_rounds >= 0) cfg.hq.reinit_rounds = static_cast<size_t>(o.reinit_rounds);
    if (o.r_low >= 0.0) cfg.hq.r_low = o.r_low;
    if (o.r_high >= 0.0) cfg.hq.r_high = o.r_high;
    if (o.step > 0.0) cfg.hq.step = o.step;
    if (o.step_schedule == "fixed") cfg.hq.step_schedule = hq::StepSchedule::Fixed;
    if (o.step_schedule == "cosine") cfg.hq.step_schedule = hq::StepSchedule::Cosine;
    return cfg;
}

void print_report(const hq::CompressionReport& rep) {
    std::printf("file bytes:          %llu\n", (unsigned long long)rep.file_bytes);
    std::printf("container bytes:     %llu\n", (unsigned long long)rep.container_bytes);
    std::printf("dense 32-bit bytes:  %llu\n", (unsigned long long)rep.dense_baseline_bytes);
    std::printf("payload bits:        %llu\n", (unsigned long long)rep.payload_bits);
    std::printf("bits per weight:     %.4f\n", rep.bits_per_weight);
    std::printf("compression ratio:   %.2fx\n", rep.ratio);
    std::printf("%-8s %-10s %-10s %-10s %-12s\n", "layer", "shape", "quantized", "sparsity", "bits");
    for (size_t k = 0; k < rep.layers.size(); ++k) {
        const auto& l = rep.layers[k];
        char shape[32];
        std::snprintf(shape, sizeof shape, "%zux%zu", l.rows, l.cols);
        std::printf("%-8zu %-10s %-10s %-10.4f %-12llu\n", k, shape, l.quantized ? "yes" : "no",
                    l.sparsity, (unsigned long long)l.bits);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperspherical ternary quantization pipeline"};
    app.require_subcommand(1);

    CommonOpts run_opts;
    std::string phase_opt;
    auto* run = app.add_subcommand("run", "full pipeline (or a single --phase)");
    add_common(run, run_opts);
    run->add_option("--phase", phase_opt, "run only this phase")
        ->check(CLI::IsMember({"pretrain", "preprocess", "quantize", "compress", "evaluate"}));

    std::map<std::string, CommonOpts> phase_opts;
    std::map<std::string, CLI::App*> phase_cmds;
    for (const std::string name : {"pretrain", "preprocess", "quantize", "compress"}) {
        auto* cmd = app.add_subcommand(name, name + std::string(" phase only"));
        add_common(cmd, phase_opts[name]);
        phase_cmds[name] = cmd;
    }

    std::string model_path, data_dir, out_path;
    auto* evaluate = app.add_subcommand("evaluate", "accuracy of a serialized model");
    evaluate->add_option("--model", model_path, "model file (.hqt)")->required();
    evaluate->add_option("--data", data_dir, "IDX dataset directory")->required();

    std::string dc_model, dc_out;
    auto* decompress = app.add_subcommand("decompress", "model file -> checkpoint");
    decompress->add_option("--model", dc_model)->required();
    decompress->add_option("--out", dc_out, "checkpoint path")->required();

    std::string insp_model;
    auto* inspect = app.add_subcommand("inspect", "print model file manifest");
    inspect->add_option("--model", insp_model)->required();

    std::string rep_model;
    auto* report = app.add_subcommand("report", "compression report for a model file");
    report->add_option("--model", rep_model)->required();

    std::string md_out = "data";
    hq::SyntheticSpec md_spec;
    auto* make_data = app.add_subcommand("make-data", "generate the synthetic IDX dataset");
    make_data->add_option("--out", md_out, "output directory");
    make_data->add_option("--train", md_spec.train_count);
    make_data->add_option("--test", md_spec.test_count);
    make_data->add_option("--noise", md_spec.noise);
    make_data->add_option("--seed", md_spec.seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            hq::ExperimentConfig cfg = build_config(run, run_opts);
            std::vector<hq::Phase> phases = phase_opt.empty()
                                                ? hq::all_phases()
                                                : std::vector<hq::Phase>{hq::phase_from_string(phase_opt)};
            hq::run_pipeline(cfg, phases, run_opts.out);
        }
        for (auto& [name, cmd] : phase_cmds) {
            if (!cmd->parsed()) continue;
            hq::ExperimentConfig cfg = build_config(cmd, phase_opts[name]);
            hq::run_pipeline(cfg, {hq::phase_from_string(name)}, phase_opts[name].out);
        }
        if (evaluate->parsed()) {
            double acc = hq::evaluate_model_file(model_path, data_dir);
            std::printf("top-1 accuracy: %.4f\n", acc);
        }
        if (decompress->parsed()) {
            hq::MlpModel model = hq::load_model_file(dc_model);
            hq::save_checkpoint(dc_out, {"decompressed", std::move(model), {}});
            std::printf("wrote %s\n", dc_out.c_str());
        }
        if (inspect->parsed()) {
            hq::MlpModel model = hq::load_model_file(insp_model);
            std::printf("layers: %zu\n", model.layers.size());
            for (size_t k = 0; k < model.layers.size(); ++k) {
                const auto& l = model.layers[k];
                std::printf("  layer %zu: %zux%zu  %s  %s\n", k, l.in_dim(), l.out_dim(),
                            l.activation() == hq::Activation::Relu ? "relu" : "identity",
                            model.quantize_exempt[k] ? "full-precision (16-bit)" : "ternary");
            }
        }
        if (report->parsed()) print_report(hq::compression_report(rep_model));
        if (make_data->parsed()) {
            hq::generate_synthetic_dataset(md_out, md_spec);
            std::printf("wrote IDX dataset to %s\n", md_out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
