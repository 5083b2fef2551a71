// Dataset ingestion: MNIST IDX files (big-endian), the OVAFEAT1 precomputed
// feature format (little-endian), elementwise normalization and the
// one-class-per-batch stream construction.
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "ovainn/errors.hpp"
#include "ovainn/numkit.hpp"

namespace ovainn {

struct LabeledVectors {
    std::size_t dim = 0;
    std::vector<Vector> vectors;
    std::vector<std::int32_t> labels;  // parallel to vectors
    std::size_t original_dim = 0;      // differs from dim after padding

    std::size_t size() const { return vectors.size(); }
};

// One batch per class, in presentation order; each batch holds only samples
// of its class, in dataset order.
struct ClassStream {
    std::vector<std::pair<std::int32_t, LabeledVectors>> batches;
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff len = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
    if (len > 0 && !in.read(reinterpret_cast<char*>(buf.data()), len)) {
        throw IoError("cannot read " + path);
    }
    return buf;
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + path);
}

// Cursor over a byte buffer; every read reports the file and byte offset on
// truncation.
struct ByteCursor {
    const std::uint8_t* data;
    std::size_t len;
    std::size_t pos = 0;
    std::string name;

    void need(std::size_t n) const {
        if (pos + n > len) {
            throw FormatError(name + ": truncated at byte offset " + std::to_string(pos) +
                              " (need " + std::to_string(n) + " more bytes, have " +
                              std::to_string(len - pos) + ")");
        }
    }
    std::uint32_t u32_be() {
        need(4);
        std::uint32_t v = (std::uint32_t(data[pos]) << 24) | (std::uint32_t(data[pos + 1]) << 16) |
                          (std::uint32_t(data[pos + 2]) << 8) | std::uint32_t(data[pos + 3]);
        pos += 4;
        return v;
    }
    std::uint16_t u16_le() {
        need(2);
        std::uint16_t v =
            static_cast<std::uint16_t>(std::uint16_t(data[pos]) | (std::uint16_t(data[pos + 1]) << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32_le() {
        need(4);
        std::uint32_t v = std::uint32_t(data[pos]) | (std::uint32_t(data[pos + 1]) << 8) |
                          (std::uint32_t(data[pos + 2]) << 16) | (std::uint32_t(data[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    std::uint64_t u64_le() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | data[pos + static_cast<std::size_t>(i)];
        pos += 8;
        return v;
    }
    std::int32_t i32_le() { return std::bit_cast<std::int32_t>(u32_le()); }
    float f32_le() { return std::bit_cast<float>(u32_le()); }
    std::uint8_t u8() {
        need(1);
        return data[pos++];
    }
};

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}
inline void put_u16_le(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f32_le(std::vector<std::uint8_t>& out, float f) {
    put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Parses the standard big-endian IDX pair. Pixels come out as raw byte
// values in [0,255]; apply normalize() afterwards.
inline LabeledVectors load_mnist_idx(const std::string& images_path,
                                     const std::string& labels_path) {
    const std::vector<std::uint8_t> img_bytes = detail::read_file_bytes(images_path);
    detail::ByteCursor img{img_bytes.data(), img_bytes.size(), 0, images_path};
    const std::uint32_t img_magic = img.u32_be();
    if (img_magic != kIdxImagesMagic) {
        throw FormatError(images_path + ": bad magic at byte offset 0 (expected 0x00000803)");
    }
    const std::uint32_t count = img.u32_be();
    const std::uint32_t rows = img.u32_be();
    const std::uint32_t cols = img.u32_be();
    const std::size_t pixels = std::size_t(rows) * cols;
    img.need(std::size_t(count) * pixels);

    const std::vector<std::uint8_t> lbl_bytes = detail::read_file_bytes(labels_path);
    detail::ByteCursor lbl{lbl_bytes.data(), lbl_bytes.size(), 0, labels_path};
    const std::uint32_t lbl_magic = lbl.u32_be();
    if (lbl_magic != kIdxLabelsMagic) {
        throw FormatError(labels_path + ": bad magic at byte offset 0 (expected 0x00000801)");
    }
    const std::uint32_t lbl_count = lbl.u32_be();
    if (lbl_count != count) {
        throw FormatError(labels_path + ": label count " + std::to_string(lbl_count) +
                          " does not match image count " + std::to_string(count));
    }
    lbl.need(count);

    LabeledVectors ds;
    ds.dim = pixels;
    ds.original_dim = pixels;
    ds.vectors.reserve(count);
    ds.labels.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Vector v(pixels);
        const std::uint8_t* src = img.data + img.pos + std::size_t(i) * pixels;
        for (std::size_t p = 0; p < pixels; ++p) v[p] = static_cast<double>(src[p]);
        ds.vectors.push_back(std::move(v));
        ds.labels.push_back(static_cast<std::int32_t>(lbl.data[lbl.pos + i]));
    }
    return ds;
}

// Re-encodes a dataset as an IDX pair. Values must be integral bytes in
// [0,255]; loading then saving reproduces the original files bit-exactly.
inline void save_mnist_idx(const LabeledVectors& ds, const std::string& images_path,
                           const std::string& labels_path, std::uint32_t rows,
                           std::uint32_t cols) {
    if (std::size_t(rows) * cols != ds.dim) {
        throw DimensionError("save_mnist_idx: rows*cols must equal dataset dim");
    }
    std::vector<std::uint8_t> img;
    img.reserve(16 + ds.size() * ds.dim);
    detail::put_u32_be(img, kIdxImagesMagic);
    detail::put_u32_be(img, static_cast<std::uint32_t>(ds.size()));
    detail::put_u32_be(img, rows);
    detail::put_u32_be(img, cols);
    for (const Vector& v : ds.vectors) {
        for (double x : v) {
            if (x < 0.0 || x > 255.0 || x != std::floor(x)) {
                throw ConfigError("save_mnist_idx: values must be integral bytes in [0,255]");
            }
            img.push_back(static_cast<std::uint8_t>(x));
        }
    }
    std::vector<std::uint8_t> lbl;
    lbl.reserve(8 + ds.size());
    detail::put_u32_be(lbl, kIdxLabelsMagic);
    detail::put_u32_be(lbl, static_cast<std::uint32_t>(ds.size()));
    for (std::int32_t y : ds.labels) {
        if (y < 0 || y > 255) throw ConfigError("save_mnist_idx: labels must fit a byte");
        lbl.push_back(static_cast<std::uint8_t>(y));
    }
    detail::write_file_bytes(images_path, img);
    detail::write_file_bytes(labels_path, lbl);
}

inline constexpr char kFeatureMagic[8] = {'O', 'V', 'A', 'F', 'E', 'A', 'T', '1'};

// Little-endian feature file: magic "OVAFEAT1", u16 version=1, u64 count,
// u32 dim, then per record an i32 label followed by dim f32 values.
inline LabeledVectors load_feature_file(const std::string& path) {
    const std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
    detail::ByteCursor cur{bytes.data(), bytes.size(), 0, path};
    cur.need(8);
    if (std::memcmp(cur.data, kFeatureMagic, 8) != 0) {
        throw FormatError(path + ": bad magic at byte offset 0 (expected \"OVAFEAT1\")");
    }
    cur.pos += 8;
    const std::uint16_t version = cur.u16_le();
    if (version != 1) {
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at byte offset 8");
    }
    const std::uint64_t count = cur.u64_le();
    const std::uint32_t dim = cur.u32_le();
    LabeledVectors ds;
    ds.dim = dim;
    ds.original_dim = dim;
    ds.vectors.reserve(count);
    ds.labels.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        ds.labels.push_back(cur.i32_le());
        Vector v(dim);
        for (std::uint32_t d = 0; d < dim; ++d) v[d] = static_cast<double>(cur.f32_le());
        ds.vectors.push_back(std::move(v));
    }
    return ds;
}

// Values are narrowed to f32; doubles that came from f32 round-trip bitwise.
inline void save_feature_file(const LabeledVectors& ds, const std::string& path) {
    std::vector<std::uint8_t> out;
    out.reserve(22 + ds.size() * (4 + 4 * ds.dim));
    out.insert(out.end(), kFeatureMagic, kFeatureMagic + 8);
    detail::put_u16_le(out, 1);
    detail::put_u64_le(out, ds.size());
    detail::put_u32_le(out, static_cast<std::uint32_t>(ds.dim));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        detail::put_u32_le(out, std::bit_cast<std::uint32_t>(ds.labels[i]));
        for (double x : ds.vectors[i]) detail::put_f32_le(out, static_cast<float>(x));
    }
    detail::write_file_bytes(path, out);
}

struct NormalizeScheme {
    enum class Kind { none, scale_255, affine };
    Kind kind = Kind::none;
    double shift = 0.0;
    double scale = 1.0;

    static NormalizeScheme none() { return {}; }
    static NormalizeScheme scale255() { return {Kind::scale_255, 0.0, 255.0}; }
    static NormalizeScheme affine(double shift, double scale) {
        return {Kind::affine, shift, scale};
    }

    // "none" | "scale_255" | "affine:<shift>:<scale>"
    static NormalizeScheme parse(const std::string& s) {
        if (s == "none") return none();
        if (s == "scale_255" || s == "scale255") return scale255();
        if (s.rfind("affine:", 0) == 0) {
            const std::size_t sep = s.find(':', 7);
            if (sep == std::string::npos) {
                throw ConfigError("normalize: expected affine:<shift>:<scale>, got " + s);
            }
            try {
                return affine(std::stod(s.substr(7, sep - 7)), std::stod(s.substr(sep + 1)));
            } catch (const std::exception&) {
                throw ConfigError("normalize: cannot parse affine parameters in " + s);
            }
        }
        throw ConfigError("normalize: unknown scheme " + s);
    }
};

// Elementwise, label-independent: uses no cross-class statistics.
inline LabeledVectors normalize(const LabeledVectors& ds, const NormalizeScheme& scheme) {
    if (scheme.kind == NormalizeScheme::Kind::none) return ds;
    const double shift = scheme.kind == NormalizeScheme::Kind::scale_255 ? 0.0 : scheme.shift;
    const double scale = scheme.kind == NormalizeScheme::Kind::scale_255 ? 255.0 : scheme.scale;
    if (scale == 0.0) throw ConfigError("normalize: scale must be nonzero");
    LabeledVectors out = ds;
    for (Vector& v : out.vectors) {
        for (double& x : v) x = (x - shift) / scale;
    }
    return out;
}

// Splits a dataset into one single-class batch per entry of class_order.
inline ClassStream make_class_stream(const LabeledVectors& ds,
                                     const std::vector<std::int32_t>& class_order) {
    std::set<std::int32_t> seen;
    for (std::int32_t c : class_order) {
        if (!seen.insert(c).second) {
            throw ConfigError("make_class_stream: duplicate class " + std::to_string(c) +
                              " in class order");
        }
    }
    const std::set<std::int32_t> present(ds.labels.begin(), ds.labels.end());
    for (std::int32_t c : class_order) {
        if (!present.count(c)) {
            throw ConfigError("make_class_stream: class " + std::to_string(c) +
                              " not present in dataset");
        }
    }
    ClassStream stream;
    stream.batches.reserve(class_order.size());
    for (std::int32_t c : class_order) {
        LabeledVectors batch;
        batch.dim = ds.dim;
        batch.original_dim = ds.original_dim;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds.labels[i] == c) {
                batch.vectors.push_back(ds.vectors[i]);
                batch.labels.push_back(c);
            }
        }
        stream.batches.emplace_back(c, std::move(batch));
    }
    return stream;
}

// Ascending order of the labels present.
inline std::vector<std::int32_t> classes_present(const LabeledVectors& ds) {
    const std::set<std::int32_t> present(ds.labels.begin(), ds.labels.end());
    return {present.begin(), present.end()};
}

// Appends one constant-zero coordinate iff dim is odd. Idempotent; the
// original width stays visible in original_dim.
inline LabeledVectors pad_to_even(const LabeledVectors& ds) {
    if (ds.dim % 2 == 0) return ds;
    LabeledVectors out = ds;
    out.dim = ds.dim + 1;
    for (Vector& v : out.vectors) v.push_back(0.0);
    return out;
}

}  // namespace ovainn
