// Dense-math substrate: row-major matrices, vectors, a SplitMix64 PRNG and
// uniform parameter initialization. Everything is 64-bit real internally;
// 32-bit floats appear only at the disk boundary (see continual.hpp).
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ovainn/errors.hpp"

namespace ovainn {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (rows == 0 || cols == 0) {
            throw DimensionError("Matrix: rows and cols must be positive");
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool operator==(const Matrix&) const = default;

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;  // row-major
};

// SplitMix64: state += 0x9E3779B97F4A7C15, two xor-shift-multiply rounds.
// Identical seeds yield bitwise-identical streams on every platform.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // [0,1) with 53 random mantissa bits.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // [-bound, +bound)
    double next_uniform(double bound) { return bound * (2.0 * next_unit() - 1.0); }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

using Rng = SplitMix64;

// Entries i.i.d. uniform on [-bound, +bound], filled row-major in draw order.
inline Matrix uniform_init(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    if (rows == 0 || cols == 0) {
        throw DimensionError("uniform_init: rows and cols must be positive");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.next_uniform(bound);
    return m;
}

inline Vector uniform_init_vector(std::size_t len, double bound, Rng& rng) {
    if (len == 0) throw DimensionError("uniform_init_vector: len must be positive");
    Vector v(len);
    for (double& x : v) x = rng.next_uniform(bound);
    return v;
}

inline Vector matvec(const Matrix& m, const Vector& v) {
    if (m.cols() != v.size()) {
        throw DimensionError("matvec: " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + " vs vector of length " +
                             std::to_string(v.size()));
    }
    Vector out(m.rows());
    const double* row = m.data();
    for (std::size_t i = 0; i < m.rows(); ++i, row += m.cols()) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
    return out;
}

// out = M^T v; length m.cols().
inline Vector matvec_transposed(const Matrix& m, const Vector& v) {
    if (m.rows() != v.size()) {
        throw DimensionError("matvec_transposed: " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + " vs vector of length " +
                             std::to_string(v.size()));
    }
    Vector out(m.cols(), 0.0);
    const double* row = m.data();
    for (std::size_t i = 0; i < m.rows(); ++i, row += m.cols()) {
        const double vi = v[i];
        for (std::size_t j = 0; j < m.cols(); ++j) out[j] += row[j] * vi;
    }
    return out;
}

// G += alpha * u v^T
inline void outer_accumulate(Matrix& g, const Vector& u, const Vector& v, double alpha) {
    if (g.rows() != u.size() || g.cols() != v.size()) {
        throw DimensionError("outer_accumulate: " + std::to_string(g.rows()) + "x" +
                             std::to_string(g.cols()) + " vs " + std::to_string(u.size()) +
                             " outer " + std::to_string(v.size()));
    }
    double* row = g.data();
    for (std::size_t i = 0; i < g.rows(); ++i, row += g.cols()) {
        const double au = alpha * u[i];
        for (std::size_t j = 0; j < g.cols(); ++j) row[j] += au * v[j];
    }
}

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double squared_norm(const Vector& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

}  // namespace ovainn
