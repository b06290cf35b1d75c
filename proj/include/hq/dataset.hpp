#pragma once

#include "hq/matrix.hpp"
#include "hq/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hq {

// Images are flattened to one column per sample, pixels scaled to [0,1].
// Sample-level unit normalization happens inside the network.
struct Dataset {
    Matrix images; // (pixels x samples)
    std::vector<size_t> labels;
    size_t num_classes = 10;

    size_t size() const { return labels.size(); }
};

// IDX format: big-endian magic 0x00000803 (images) / 0x00000801 (labels).
Matrix load_idx_images(const std::string& path);
std::vector<size_t> load_idx_labels(const std::string& path);

// Loads <dir>/train-images.idx3-ubyte etc. and validates counts and ranges.
struct DatasetPair {
    Dataset train;
    Dataset test;
};
DatasetPair load_idx_dataset(const std::string& dir, size_t num_classes = 10);

void write_idx_images(const std::string& path, const std::vector<uint8_t>& pixels,
                      size_t count, size_t rows, size_t cols);
void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);

// Generates a 10-class 28x28 digit-like dataset: smooth per-class templates
// with per-sample amplitude jitter, pixel noise and small translations.
// Written in IDX format so the loader path is exercised end to end.
struct SyntheticSpec {
    size_t train_count = 8000;
    size_t test_count = 2000;
    size_t side = 28;
    size_t classes = 10;
    double noise = 0.12;
    uint64_t seed = 1;
};
void generate_synthetic_dataset(const std::string& dir, const SyntheticSpec& spec);

} // namespace hq
