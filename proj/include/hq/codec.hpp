#pragma once

#include "hq/quantize.hpp"
#include "hq/sphere.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace hq {

// Flat ternary symbol sequence: layer-major, column-major within a layer,
// rows within a column. Padded with zeros to a multiple of 3.
struct TernaryStream {
    std::vector<int8_t> symbols; // in {-1,0,+1}, length % 3 == 0
    size_t padding = 0;          // 0..2 trailing zero symbols

    struct LayerInfo {
        size_t rows = 0, cols = 0;
        std::vector<size_t> support; // |I| per column (derivable from symbols)
    };
    std::vector<LayerInfo> layers;
};

// Canonical Huffman code over the 27 ternary triples. A triple (a,b,c) maps
// to index (a+1)*9 + (b+1)*3 + (c+1).
struct TripleCodebook {
    std::array<uint8_t, 27> lengths{};   // 0 = symbol absent
    std::array<uint32_t, 27> codes{};    // canonical, MSB-first
    std::array<uint64_t, 27> freq{};

    bool empty() const;
    double expected_bits_per_triple() const;
    double entropy_bits_per_triple() const;
};

TernaryStream pack_ternary(const MlpModel& model);

// Rebuilds quantized-layer weight matrices from a stream (scales recomputed
// as 1/sqrt(support) from the decoded zero pattern).
std::vector<Matrix> unpack_ternary(const TernaryStream& stream);

TripleCodebook build_codebook(const TernaryStream& stream);

// Canonical code assignment from a length table (shared by build and decode).
void assign_canonical_codes(TripleCodebook& cb);

std::vector<uint8_t> encode(const TernaryStream& stream, const TripleCodebook& cb,
                            uint64_t* bit_length);
TernaryStream decode(const std::vector<uint8_t>& payload, const TripleCodebook& cb,
                     uint64_t bit_length, size_t symbol_count);

// IEEE 754 binary16 conversions (round to nearest even).
uint16_t float_to_half(float f);
float half_to_float(uint16_t h);

// gzip (RFC 1952) wrapper with MTIME=0 so output is byte-deterministic.
std::vector<uint8_t> gzip_compress(const std::vector<uint8_t>& data, int level = 6);
std::vector<uint8_t> gzip_decompress(const std::vector<uint8_t>& data);

// "HQT1" container, gzip outermost. Quantized layers are Huffman triples;
// exempt layers are stored as 16-bit halves.
struct SerializeOptions {
    int gzip_level = 6;
    bool explicit_scales = false; // store per-column 16-bit scales instead of
                                  // recomputing from decoded signs
};

std::vector<uint8_t> serialize_model(const MlpModel& model,
                                     const SerializeOptions& opts = {});
MlpModel deserialize_model(const std::vector<uint8_t>& bytes);

void save_model_file(const MlpModel& model, const std::string& path,
                     const SerializeOptions& opts = {});
MlpModel load_model_file(const std::string& path);

struct LayerReport {
    size_t rows = 0, cols = 0;
    bool quantized = false;
    double sparsity = 0.0;
    uint64_t bits = 0; // payload bits (quantized) or 8*2*params (exempt)
};

struct CompressionReport {
    uint64_t file_bytes = 0;
    uint64_t container_bytes = 0;     // before gzip
    uint64_t dense_baseline_bytes = 0; // 32-bit dense
    uint64_t payload_bits = 0;
    uint64_t quantized_weights = 0;
    double bits_per_weight = 0.0;
    double ratio = 0.0;
    std::vector<LayerReport> layers;
};

CompressionReport compression_report(const std::string& path);

} // namespace hq
