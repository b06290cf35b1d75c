#include "hq/codec.hpp"

#include "hq/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

#include <zlib.h>

namespace hq {

namespace {

constexpr double kTernaryTol = 0.0; // quantized layers must match exactly

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
}
void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size())
            throw std::runtime_error("model container truncated at byte " + std::to_string(pos));
    }
    uint8_t u8() { need(1); return buf[pos++]; }
    uint16_t u16() { need(2); uint16_t v = buf[pos] | (uint16_t(buf[pos + 1]) << 8); pos += 2; return v; }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(buf[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::vector<uint8_t> bytes(size_t n) {
        need(n);
        std::vector<uint8_t> v(buf.begin() + pos, buf.begin() + pos + n);
        pos += n;
        return v;
    }
};

struct BitWriter {
    std::vector<uint8_t> bytes;
    uint64_t bits = 0;

    void put(uint32_t code, uint8_t len) {
        for (int i = len - 1; i >= 0; --i) {
            if (bits % 8 == 0) bytes.push_back(0);
            if ((code >> i) & 1u) bytes.back() |= uint8_t(0x80u >> (bits % 8));
            ++bits;
        }
    }
};

struct BitReader {
    const std::vector<uint8_t>& bytes;
    uint64_t pos = 0;
    uint64_t limit;

    int next() {
        if (pos >= limit) return -1;
        int bit = (bytes[pos / 8] >> (7 - pos % 8)) & 1;
        ++pos;
        return bit;
    }
};

} // namespace

bool TripleCodebook::empty() const {
    for (uint8_t l : lengths)
        if (l) return false;
    return true;
}

double TripleCodebook::expected_bits_per_triple() const {
    uint64_t total = 0, bits = 0;
    for (size_t s = 0; s < 27; ++s) {
        total += freq[s];
        bits += freq[s] * lengths[s];
    }
    return total ? static_cast<double>(bits) / static_cast<double>(total) : 0.0;
}

double TripleCodebook::entropy_bits_per_triple() const {
    uint64_t total = 0;
    for (uint64_t f : freq) total += f;
    if (!total) return 0.0;
    double h = 0.0;
    for (uint64_t f : freq) {
        if (!f) continue;
        double p = static_cast<double>(f) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

TernaryStream pack_ternary(const MlpModel& model) {
    TernaryStream s;
    for (size_t k = 0; k < model.layers.size(); ++k) {
        if (model.quantize_exempt[k]) continue;
        const Matrix& w = model.layers[k].weights();
        TernaryStream::LayerInfo info;
        info.rows = w.rows();
        info.cols = w.cols();
        info.support.resize(w.cols());
        for (size_t j = 0; j < w.cols(); ++j) {
            size_t live = 0;
            for (size_t i = 0; i < w.rows(); ++i)
                if (w.at(i, j) != 0.0) ++live;
            info.support[j] = live;
            double scale = live ? 1.0 / std::sqrt(static_cast<double>(live)) : 0.0;
            for (size_t i = 0; i < w.rows(); ++i) {
                double v = w.at(i, j);
                int8_t sign;
                if (v == 0.0) sign = 0;
                else if (std::fabs(std::fabs(v) - scale) <= kTernaryTol) sign = v > 0 ? 1 : -1;
                else
                    throw std::runtime_error("pack_ternary: layer " + std::to_string(k) +
                                             " is marked quantized but holds non-ternary value " +
                                             std::to_string(v) + " at (" + std::to_string(i) +
                                             "," + std::to_string(j) + ")");
                s.symbols.push_back(sign);
            }
        }
        s.layers.push_back(std::move(info));
    }
    s.padding = (3 - s.symbols.size() % 3) % 3;
    s.symbols.insert(s.symbols.end(), s.padding, 0);
    return s;
}

std::vector<Matrix> unpack_ternary(const TernaryStream& stream) {
    std::vector<Matrix> out;
    size_t pos = 0;
    for (const auto& info : stream.layers) {
        Matrix w(info.rows, info.cols);
        for (size_t j = 0; j < info.cols; ++j) {
            size_t live = 0;
            size_t base = pos;
            for (size_t i = 0; i < info.rows; ++i)
                if (stream.symbols[base + i] != 0) ++live;
            double scale = live ? 1.0 / std::sqrt(static_cast<double>(live)) : 0.0;
            for (size_t i = 0; i < info.rows; ++i)
                w.at(i, j) = stream.symbols[base + i] * scale;
            pos += info.rows;
        }
        out.push_back(std::move(w));
    }
    return out;
}

void assign_canonical_codes(TripleCodebook& cb) {
    std::vector<size_t> order;
    for (size_t s = 0; s < 27; ++s)
        if (cb.lengths[s]) order.push_back(s);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (cb.lengths[a] != cb.lengths[b]) return cb.lengths[a] < cb.lengths[b];
        return a < b;
    });
    uint32_t code = 0;
    uint8_t prev_len = 0;
    for (size_t s : order) {
        code <<= (cb.lengths[s] - prev_len);
        cb.codes[s] = code;
        ++code;
        prev_len = cb.lengths[s];
    }
}

TripleCodebook build_codebook(const TernaryStream& stream) {
    if (stream.symbols.size() % 3 != 0)
        throw std::runtime_error("build_codebook: stream length not a multiple of 3");
    TripleCodebook cb;
    for (size_t i = 0; i < stream.symbols.size(); i += 3) {
        size_t idx = size_t(stream.symbols[i] + 1) * 9 + size_t(stream.symbols[i + 1] + 1) * 3 +
                     size_t(stream.symbols[i + 2] + 1);
        ++cb.freq[idx];
    }

    struct Node {
        uint64_t freq;
        int left = -1, right = -1; // -1/-1 with sym >= 0 for leaves
        int sym = -1;
    };
    std::vector<Node> nodes;
    using Entry = std::pair<uint64_t, int>; // (freq, node index); index order breaks ties
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    for (int s = 0; s < 27; ++s) {
        if (!cb.freq[size_t(s)]) continue;
        nodes.push_back({cb.freq[size_t(s)], -1, -1, s});
        heap.emplace(cb.freq[size_t(s)], int(nodes.size()) - 1);
    }
    if (nodes.empty()) return cb; // empty stream -> empty codebook
    if (nodes.size() == 1) {
        cb.lengths[size_t(nodes[0].sym)] = 1;
        assign_canonical_codes(cb);
        return cb;
    }
    while (heap.size() > 1) {
        auto [fa, a] = heap.top();
        heap.pop();
        auto [fb, b] = heap.top();
        heap.pop();
        nodes.push_back({fa + fb, a, b, -1});
        heap.emplace(fa + fb, int(nodes.size()) - 1);
    }
    // depths via iterative walk from the root (last node)
    std::vector<std::pair<int, uint8_t>> stack{{int(nodes.size()) - 1, 0}};
    while (!stack.empty()) {
        auto [idx, depth] = stack.back();
        stack.pop_back();
        const Node& n = nodes[size_t(idx)];
        if (n.sym >= 0) {
            cb.lengths[size_t(n.sym)] = depth;
            continue;
        }
        stack.push_back({n.left, uint8_t(depth + 1)});
        stack.push_back({n.right, uint8_t(depth + 1)});
    }
    assign_canonical_codes(cb);
    return cb;
}

std::vector<uint8_t> encode(const TernaryStream& stream, const TripleCodebook& cb,
                            uint64_t* bit_length) {
    if (stream.symbols.size() % 3 != 0)
        throw std::runtime_error("encode: stream length not a multiple of 3");
    BitWriter bw;
    for (size_t i = 0; i < stream.symbols.size(); i += 3) {
        size_t idx = size_t(stream.symbols[i] + 1) * 9 + size_t(stream.symbols[i + 1] + 1) * 3 +
                     size_t(stream.symbols[i + 2] + 1);
        if (!cb.lengths[idx])
            throw std::runtime_error("encode: triple " + std::to_string(idx) + " not in codebook");
        bw.put(cb.codes[idx], cb.lengths[idx]);
    }
    if (bit_length) *bit_length = bw.bits;
    return bw.bytes;
}

TernaryStream decode(const std::vector<uint8_t>& payload, const TripleCodebook& cb,
                     uint64_t bit_length, size_t symbol_count) {
    if (symbol_count % 3 != 0)
        throw std::runtime_error("decode: symbol count not a multiple of 3");
    if (payload.size() * 8 < bit_length)
        throw std::runtime_error("decode: payload shorter than declared bit length");

    // canonical decode tables per length
    std::vector<size_t> order;
    for (size_t s = 0; s < 27; ++s)
        if (cb.lengths[s]) order.push_back(s);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (cb.lengths[a] != cb.lengths[b]) return cb.lengths[a] < cb.lengths[b];
        return a < b;
    });
    uint8_t max_len = 0;
    for (size_t s : order) max_len = std::max(max_len, cb.lengths[s]);
    std::vector<uint32_t> first_code(max_len + 1, 0), count(max_len + 1, 0);
    std::vector<size_t> first_index(max_len + 1, 0);
    {
        uint32_t code = 0;
        uint8_t prev = 0;
        for (size_t i = 0; i < order.size(); ++i) {
            uint8_t len = cb.lengths[order[i]];
            code <<= (len - prev);
            if (!count[len]) {
                first_code[len] = code;
                first_index[len] = i;
            }
            ++count[len];
            ++code;
            prev = len;
        }
    }

    TernaryStream out;
    BitReader br{payload, 0, bit_length};
    size_t decoded = 0;
    while (decoded < symbol_count) {
        uint32_t code = 0;
        uint8_t len = 0;
        int sym = -1;
        while (len < max_len) {
            int bit = br.next();
            if (bit < 0)
                throw std::runtime_error("decode: payload truncated at symbol " +
                                         std::to_string(decoded));
            code = (code << 1) | uint32_t(bit);
            ++len;
            if (count[len] && code >= first_code[len] && code - first_code[len] < count[len]) {
                sym = int(order[first_index[len] + (code - first_code[len])]);
                break;
            }
        }
        if (sym < 0) throw std::runtime_error("decode: invalid code in payload");
        out.symbols.push_back(int8_t(sym / 9 - 1));
        out.symbols.push_back(int8_t((sym / 3) % 3 - 1));
        out.symbols.push_back(int8_t(sym % 3 - 1));
        decoded += 3;
    }
    return out;
}

uint16_t float_to_half(float f) {
    uint32_t x;
    std::memcpy(&x, &f, 4);
    uint32_t sign = (x >> 16) & 0x8000u;
    uint32_t mant = x & 0x007fffffu;
    int32_t exp = int32_t((x >> 23) & 0xff) - 127 + 15;
    if (exp >= 31) return uint16_t(sign | 0x7c00u | (((x >> 23) & 0xff) == 0xff && mant ? 0x200u : 0));
    if (exp <= 0) {
        if (exp < -10) return uint16_t(sign);
        mant |= 0x00800000u;
        uint32_t shift = uint32_t(14 - exp);
        uint32_t half_mant = mant >> shift;
        uint32_t rem = mant & ((1u << shift) - 1);
        uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half_mant & 1))) ++half_mant;
        return uint16_t(sign | half_mant);
    }
    uint32_t half = sign | uint32_t(exp << 10) | (mant >> 13);
    uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1))) ++half;
    return uint16_t(half);
}

float half_to_float(uint16_t h) {
    uint32_t sign = uint32_t(h & 0x8000u) << 16;
    uint32_t exp = (h >> 10) & 0x1f;
    uint32_t mant = h & 0x3ffu;
    uint32_t x;
    if (exp == 0) {
        if (mant == 0) {
            x = sign;
        } else {
            exp = 127 - 15 + 1;
            while (!(mant & 0x400u)) {
                mant <<= 1;
                --exp;
            }
            mant &= 0x3ffu;
            x = sign | (exp << 23) | (mant << 13);
        }
    } else if (exp == 31) {
        x = sign | 0x7f800000u | (mant << 13);
    } else {
        x = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    float f;
    std::memcpy(&f, &x, 4);
    return f;
}

std::vector<uint8_t> gzip_compress(const std::vector<uint8_t>& data, int level) {
    std::vector<uint8_t> out = {0x1f, 0x8b, 0x08, 0x00, 0, 0, 0, 0, 0x00, 0xff};

    z_stream zs{};
    if (deflateInit2(&zs, level, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw std::runtime_error("gzip_compress: deflateInit2 failed");
    zs.next_in = const_cast<Bytef*>(data.data());
    zs.avail_in = static_cast<uInt>(data.size());
    std::vector<uint8_t> buf(std::max<size_t>(4096, data.size() / 2));
    int ret;
    do {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        ret = deflate(&zs, Z_FINISH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            deflateEnd(&zs);
            throw std::runtime_error("gzip_compress: deflate failed");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    } while (ret != Z_STREAM_END);
    deflateEnd(&zs);

    uint32_t crc = static_cast<uint32_t>(crc32(0L, data.data(), static_cast<uInt>(data.size())));
    put_u32(out, crc);
    put_u32(out, static_cast<uint32_t>(data.size()));
    return out;
}

std::vector<uint8_t> gzip_decompress(const std::vector<uint8_t>& data) {
    if (data.size() < 18 || data[0] != 0x1f || data[1] != 0x8b || data[2] != 0x08)
        throw std::runtime_error("gzip_decompress: not a gzip stream");
    uint8_t flg = data[3];
    size_t pos = 10;
    if (flg & 0x04) { // FEXTRA
        if (pos + 2 > data.size()) throw std::runtime_error("gzip_decompress: truncated header");
        size_t xlen = data[pos] | (size_t(data[pos + 1]) << 8);
        pos += 2 + xlen;
    }
    for (uint8_t bit : {uint8_t(0x08), uint8_t(0x10)}) { // FNAME, FCOMMENT
        if (flg & bit) {
            while (pos < data.size() && data[pos] != 0) ++pos;
            ++pos;
        }
    }
    if (flg & 0x02) pos += 2; // FHCRC
    if (pos + 8 > data.size()) throw std::runtime_error("gzip_decompress: truncated stream");

    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK)
        throw std::runtime_error("gzip_decompress: inflateInit2 failed");
    zs.next_in = const_cast<Bytef*>(data.data() + pos);
    zs.avail_in = static_cast<uInt>(data.size() - pos - 8);
    std::vector<uint8_t> out;
    std::vector<uint8_t> buf(1 << 16);
    int ret;
    do {
        zs.next_out = buf.data();
        zs.avail_out = static_cast<uInt>(buf.size());
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw std::runtime_error("gzip_decompress: corrupt deflate data");
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    } while (ret != Z_STREAM_END);
    inflateEnd(&zs);

    const uint8_t* tail = data.data() + data.size() - 8;
    uint32_t crc_expect = tail[0] | (uint32_t(tail[1]) << 8) | (uint32_t(tail[2]) << 16) |
                          (uint32_t(tail[3]) << 24);
    uint32_t crc_actual =
        static_cast<uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size())));
    if (crc_expect != crc_actual)
        throw std::runtime_error("gzip_decompress: checksum mismatch");
    return out;
}

std::vector<uint8_t> serialize_model(const MlpModel& model, const SerializeOptions& opts) {
    TernaryStream stream = pack_ternary(model);
    TripleCodebook cb = build_codebook(stream);
    uint64_t bits = 0;
    std::vector<uint8_t> payload = encode(stream, cb, &bits);

    std::vector<uint8_t> c;
    c.insert(c.end(), {'H', 'Q', 'T', '1'});
    put_u16(c, 1); // version
    c.push_back(opts.explicit_scales ? 1 : 0);
    c.push_back(uint8_t(opts.gzip_level));
    put_u32(c, static_cast<uint32_t>(model.layers.size()));
    for (size_t k = 0; k < model.layers.size(); ++k) {
        const auto& layer = model.layers[k];
        put_u32(c, static_cast<uint32_t>(layer.in_dim()));
        put_u32(c, static_cast<uint32_t>(layer.out_dim()));
        c.push_back(model.quantize_exempt[k] ? 0 : 1);
        c.push_back(layer.activation() == Activation::Relu ? 0 : 1);
    }
    if (opts.explicit_scales) {
        size_t q = 0;
        for (size_t k = 0; k < model.layers.size(); ++k) {
            if (model.quantize_exempt[k]) continue;
            const auto& info = stream.layers[q++];
            for (size_t j = 0; j < info.cols; ++j) {
                double scale =
                    info.support[j] ? 1.0 / std::sqrt(double(info.support[j])) : 0.0;
                put_u16(c, float_to_half(static_cast<float>(scale)));
            }
        }
    }
    for (size_t s = 0; s < 27; ++s) c.push_back(cb.lengths[s]);
    put_u64(c, bits);
    put_u64(c, stream.symbols.size());
    c.insert(c.end(), payload.begin(), payload.end());
    for (size_t k = 0; k < model.layers.size(); ++k) {
        if (!model.quantize_exempt[k]) continue;
        const Matrix& w = model.layers[k].weights();
        for (double v : w.raw()) put_u16(c, float_to_half(static_cast<float>(v)));
    }
    uint32_t crc = static_cast<uint32_t>(crc32(0L, c.data(), static_cast<uInt>(c.size())));
    put_u32(c, crc);
    return gzip_compress(c, opts.gzip_level);
}

MlpModel deserialize_model(const std::vector<uint8_t>& bytes) {
    std::vector<uint8_t> c = gzip_decompress(bytes);
    if (c.size() < 4 + 2 + 2 + 4 + 4)
        throw std::runtime_error("deserialize_model: container too small");
    uint32_t crc_expect = 0;
    for (int i = 0; i < 4; ++i) crc_expect |= uint32_t(c[c.size() - 4 + size_t(i)]) << (8 * i);
    uint32_t crc_actual =
        static_cast<uint32_t>(crc32(0L, c.data(), static_cast<uInt>(c.size() - 4)));
    if (crc_expect != crc_actual)
        throw std::runtime_error("deserialize_model: container checksum mismatch");
    c.resize(c.size() - 4);

    Reader r{c};
    auto magic = r.bytes(4);
    if (magic != std::vector<uint8_t>{'H', 'Q', 'T', '1'})
        throw std::runtime_error("deserialize_model: bad magic");
    uint16_t version = r.u16();
    if (version != 1)
        throw std::runtime_error("deserialize_model: unsupported version " + std::to_string(version));
    uint8_t flags = r.u8();
    bool explicit_scales = flags & 1;
    r.u8(); // gzip level, informational
    uint32_t n_layers = r.u32();

    struct Manifest {
        size_t rows, cols;
        bool quantized;
        Activation act;
    };
    std::vector<Manifest> manifest;
    for (uint32_t k = 0; k < n_layers; ++k) {
        Manifest m{};
        m.rows = r.u32();
        m.cols = r.u32();
        m.quantized = r.u8() != 0;
        m.act = r.u8() == 0 ? Activation::Relu : Activation::Identity;
        manifest.push_back(m);
    }
    std::vector<std::vector<double>> explicit_scale_cols;
    if (explicit_scales) {
        for (const auto& m : manifest) {
            if (!m.quantized) continue;
            std::vector<double> s(m.cols);
            for (size_t j = 0; j < m.cols; ++j) s[j] = half_to_float(r.u16());
            explicit_scale_cols.push_back(std::move(s));
        }
    }
    TripleCodebook cb;
    for (size_t s = 0; s < 27; ++s) cb.lengths[s] = r.u8();
    assign_canonical_codes(cb);
    uint64_t bits = r.u64();
    uint64_t symbol_count = r.u64();
    std::vector<uint8_t> payload = r.bytes((bits + 7) / 8);

    TernaryStream stream = decode(payload, cb, bits, symbol_count);
    size_t expected = 0;
    for (const auto& m : manifest)
        if (m.quantized) expected += m.rows * m.cols;
    if (symbol_count < expected || symbol_count - expected > 2)
        throw std::runtime_error("deserialize_model: symbol count inconsistent with manifest");
    for (const auto& m : manifest)
        if (m.quantized)
            stream.layers.push_back({m.rows, m.cols, {}});
    std::vector<Matrix> qweights = unpack_ternary(stream);

    MlpModel model;
    size_t qi = 0;
    for (const auto& m : manifest) {
        SphereLayer layer;
        Matrix w(m.rows, m.cols);
        if (m.quantized) {
            // scales are exact from the decoded zero pattern; stored halves
            // (when present) are only a consistency hint, not authoritative
            w = qweights[qi];
            ++qi;
        } else {
            for (size_t i = 0; i < m.rows * m.cols; ++i)
                w.raw()[i] = half_to_float(r.u16());
        }
        layer.set_weights_verbatim(w);
        layer.set_activation(m.act);
        model.layers.push_back(std::move(layer));
        model.quantize_exempt.push_back(!m.quantized);
    }
    return model;
}

void save_model_file(const MlpModel& model, const std::string& path, const SerializeOptions& opts) {
    std::vector<uint8_t> bytes = serialize_model(model, opts);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

MlpModel load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

CompressionReport compression_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    CompressionReport rep;
    rep.file_bytes = bytes.size();
    std::vector<uint8_t> c = gzip_decompress(bytes);
    rep.container_bytes = c.size();

    MlpModel model = deserialize_model(bytes);
    if (model.layers.empty())
        throw std::runtime_error("compression_report: empty model (ratio undefined)");

    TernaryStream stream = pack_ternary(model);
    TripleCodebook cb = build_codebook(stream);
    uint64_t bits = 0;
    encode(stream, cb, &bits);
    rep.payload_bits = bits;

    // attribute each triple's code length to the layer owning its first symbol
    std::vector<uint64_t> layer_bits(stream.layers.size(), 0);
    std::vector<size_t> layer_end;
    size_t acc = 0;
    for (const auto& info : stream.layers) {
        acc += info.rows * info.cols;
        layer_end.push_back(acc);
    }
    size_t cur = 0;
    for (size_t i = 0; i + 2 < stream.symbols.size(); i += 3) {
        while (cur < layer_end.size() && i >= layer_end[cur]) ++cur;
        if (cur >= layer_bits.size()) break; // padding triple
        size_t idx = size_t(stream.symbols[i] + 1) * 9 + size_t(stream.symbols[i + 1] + 1) * 3 +
                     size_t(stream.symbols[i + 2] + 1);
        layer_bits[cur] += cb.lengths[idx];
    }

    size_t qi = 0;
    for (size_t k = 0; k < model.layers.size(); ++k) {
        const Matrix& w = model.layers[k].weights();
        LayerReport lr;
        lr.rows = w.rows();
        lr.cols = w.cols();
        lr.quantized = !model.quantize_exempt[k];
        lr.sparsity = sparsity(w);
        rep.dense_baseline_bytes += uint64_t(w.size()) * 4;
        if (lr.quantized) {
            lr.bits = layer_bits[qi++];
            rep.quantized_weights += w.size();
        } else {
            lr.bits = uint64_t(w.size()) * 16;
        }
        rep.layers.push_back(lr);
    }
    rep.bits_per_weight = rep.quantized_weights
                              ? static_cast<double>(rep.payload_bits) /
                                    static_cast<double>(rep.quantized_weights)
                              : 0.0;
    rep.ratio = static_cast<double>(rep.dense_baseline_bytes) / static_cast<double>(rep.file_bytes);
    return rep;
}

} // namespace hq
