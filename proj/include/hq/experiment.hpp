#pragma once

#include "hq/codec.hpp"
#include "hq/dataset.hpp"
#include "hq/trainer.hpp"

#include <map>
#include <string>
#include <vector>

namespace hq {

struct ExperimentConfig {
    // [data]
    std::string data_dir;
    bool synthetic = false; // generate the IDX files if missing
    size_t synth_train = 8000;
    size_t synth_test = 2000;
    double synth_noise = 0.12;

    // [model]
    std::vector<size_t> hidden = {256, 128};
    size_t input_dim = 784;
    size_t classes = 10;
    bool hyper = true;
    bool exempt_first = false;
    bool exempt_last = true;

    // [train] / [preprocess] / [quantize]
    HQConfig hq;

    // [output]
    int gzip_level = 6;
    std::string run_id = "run";
};

// key = value pairs under [section] headers; '#' and ';' start comments.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Phase checkpoints: full-precision weights, masks and thresholds, enough to
// restart the next phase bit-exactly.
struct Checkpoint {
    std::string phase;
    MlpModel model;
    std::vector<double> deltas;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Streams MetricsRecords to <out>/metrics_<phase>.csv; wall times go to a
// separate timing file so the metrics CSV is run-to-run byte identical.
class MetricsWriter {
public:
    MetricsWriter(const std::string& out_dir, const std::string& run_id);
    MetricsSink sink_for(const std::string& phase);

private:
    std::string out_dir_;
    std::string run_id_;
};

enum class Phase { Pretrain, Preprocess, Quantize, Compress, Evaluate };

std::vector<Phase> all_phases();
Phase phase_from_string(const std::string& s);
std::string phase_to_string(Phase p);

// Executes the selected phases in order, reading each phase's input from the
// previous phase's checkpoint in out_dir. Writes metrics CSVs, checkpoints,
// the final model file and summary.json.
void run_pipeline(const ExperimentConfig& cfg, const std::vector<Phase>& phases,
                  const std::string& out_dir);

// Deserializes a model file, verifies quantized layers are exactly ternary,
// and reports top-1 accuracy on the test split in data_dir.
double evaluate_model_file(const std::string& model_path, const std::string& data_dir);

} // namespace hq
