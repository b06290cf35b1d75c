#include "hq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace hq {

namespace {

uint32_t read_be32(std::istream& in, const std::string& path, size_t offset) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw std::runtime_error(path + ": truncated at byte " + std::to_string(offset));
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8), uint8_t(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

} // namespace

Matrix load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    uint32_t magic = read_be32(in, path, 0);
    if (magic != 0x00000803)
        throw std::runtime_error(path + ": bad image magic " + std::to_string(magic));
    uint32_t count = read_be32(in, path, 4);
    uint32_t rows = read_be32(in, path, 8);
    uint32_t cols = read_be32(in, path, 12);
    size_t pixels = size_t(rows) * cols;
    std::vector<uint8_t> buf(size_t(count) * pixels);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(in.gcount()) != buf.size())
        throw std::runtime_error(path + ": truncated at byte " +
                                 std::to_string(16 + in.gcount()) + " (expected " +
                                 std::to_string(16 + buf.size()) + " bytes)");
    Matrix x(pixels, count);
    for (size_t k = 0; k < count; ++k)
        for (size_t p = 0; p < pixels; ++p)
            x.at(p, k) = buf[k * pixels + p] / 255.0;
    return x;
}

std::vector<size_t> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    uint32_t magic = read_be32(in, path, 0);
    if (magic != 0x00000801)
        throw std::runtime_error(path + ": bad label magic " + std::to_string(magic));
    uint32_t count = read_be32(in, path, 4);
    std::vector<uint8_t> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(in.gcount()) != buf.size())
        throw std::runtime_error(path + ": truncated at byte " + std::to_string(8 + in.gcount()));
    return std::vector<size_t>(buf.begin(), buf.end());
}

DatasetPair load_idx_dataset(const std::string& dir, size_t num_classes) {
    auto load_split = [&](const std::string& img, const std::string& lbl) {
        Dataset d;
        d.images = load_idx_images(dir + "/" + img);
        d.labels = load_idx_labels(dir + "/" + lbl);
        d.num_classes = num_classes;
        if (d.images.cols() != d.labels.size())
            throw std::runtime_error(dir + ": image count " + std::to_string(d.images.cols()) +
                                     " != label count " + std::to_string(d.labels.size()));
        for (size_t i = 0; i < d.labels.size(); ++i)
            if (d.labels[i] >= num_classes)
                throw std::runtime_error(dir + ": label " + std::to_string(d.labels[i]) +
                                         " out of range at sample " + std::to_string(i));
        return d;
    };
    DatasetPair pair;
    pair.train = load_split("train-images.idx3-ubyte", "train-labels.idx1-ubyte");
    pair.test = load_split("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte");
    return pair;
}

void write_idx_images(const std::string& path, const std::vector<uint8_t>& pixels,
                      size_t count, size_t rows, size_t cols) {
    if (pixels.size() != count * rows * cols)
        throw std::runtime_error("write_idx_images: size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_be32(out, 0x00000803);
    write_be32(out, static_cast<uint32_t>(count));
    write_be32(out, static_cast<uint32_t>(rows));
    write_be32(out, static_cast<uint32_t>(cols));
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_be32(out, 0x00000801);
    write_be32(out, static_cast<uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

namespace {

// Smooth class template: a sum of random 2d gaussian blobs.
std::vector<double> make_template(size_t side, Rng& rng) {
    std::vector<double> t(side * side, 0.0);
    size_t blobs = 4 + rng.index(3);
    for (size_t b = 0; b < blobs; ++b) {
        double cx = rng.uniform(0.2, 0.8) * side;
        double cy = rng.uniform(0.2, 0.8) * side;
        double sx = rng.uniform(0.06, 0.16) * side;
        double sy = rng.uniform(0.06, 0.16) * side;
        double amp = rng.uniform(0.5, 1.0);
        for (size_t y = 0; y < side; ++y)
            for (size_t x = 0; x < side; ++x) {
                double dx = (x - cx) / sx, dy = (y - cy) / sy;
                t[y * side + x] += amp * std::exp(-0.5 * (dx * dx + dy * dy));
            }
    }
    double mx = 0.0;
    for (double v : t) mx = std::max(mx, v);
    for (double& v : t) v /= mx;
    return t;
}

} // namespace

void generate_synthetic_dataset(const std::string& dir, const SyntheticSpec& spec) {
    std::filesystem::create_directories(dir);
    Rng rng(spec.seed);
    std::vector<std::vector<double>> templates;
    for (size_t c = 0; c < spec.classes; ++c) templates.push_back(make_template(spec.side, rng));

    auto emit = [&](size_t count, const std::string& img_name, const std::string& lbl_name) {
        std::vector<uint8_t> pixels(count * spec.side * spec.side);
        std::vector<uint8_t> labels(count);
        for (size_t k = 0; k < count; ++k) {
            size_t c = rng.index(spec.classes);
            labels[k] = static_cast<uint8_t>(c);
            double amp = rng.uniform(0.75, 1.25);
            int shift_x = static_cast<int>(rng.index(5)) - 2;
            int shift_y = static_cast<int>(rng.index(5)) - 2;
            const auto& tpl = templates[c];
            for (size_t y = 0; y < spec.side; ++y)
                for (size_t x = 0; x < spec.side; ++x) {
                    int sy = static_cast<int>(y) - shift_y;
                    int sx = static_cast<int>(x) - shift_x;
                    double v = 0.0;
                    if (sy >= 0 && sy < static_cast<int>(spec.side) &&
                        sx >= 0 && sx < static_cast<int>(spec.side))
                        v = tpl[static_cast<size_t>(sy) * spec.side + static_cast<size_t>(sx)];
                    v *= amp;
                    // dense noise on the ink, occasional specks elsewhere.
                    // mostly-zero background keeps the samples from all
                    // pointing the same way, while the specks make sure every
                    // pixel carries signal in some sample, so no weight row
                    // is permanently starved of gradient
                    if (v > 0.08) {
                        v += spec.noise * rng.normal();
                    } else if (rng.uniform() < 0.05) {
                        v = rng.uniform(0.1, 0.5);
                    } else {
                        v = 0.0;
                    }
                    v = std::clamp(v, 0.0, 1.0);
                    pixels[k * spec.side * spec.side + y * spec.side + x] =
                        static_cast<uint8_t>(std::lround(v * 255.0));
                }
        }
        write_idx_images(dir + "/" + img_name, pixels, count, spec.side, spec.side);
        write_idx_labels(dir + "/" + lbl_name, labels);
    };
    emit(spec.train_count, "train-images.idx3-ubyte", "train-labels.idx1-ubyte");
    emit(spec.test_count, "t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte");
}

} // namespace hq
