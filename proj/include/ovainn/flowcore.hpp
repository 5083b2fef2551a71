// Additive-coupling invertible networks.
//
// A coupling block splits its input x into contiguous halves (x1, x2) and maps
//     y1 = f1(x2) + x1
//     y2 = f2(y1) + x2
// which is inverted exactly by
//     x2 = y2 - f2(y1)
//     x1 = y1 - f1(x2).
// The map is volume preserving (unit Jacobian), so under a standard-normal
// prior the exact log-likelihood of x is -0.5*||net(x)||^2 + beta with
// beta = -(n/2)*log(2*pi). Training minimizes the mean squared output norm;
// gradients are computed analytically by reverse accumulation.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ovainn/errors.hpp"
#include "ovainn/numkit.hpp"

namespace ovainn {

enum class ActivationKind : std::uint8_t {
    relu = 0,
    leaky_relu = 1,  // fixed slope 0.01
    tanh = 2,
    identity = 3,
};

inline constexpr double kLeakySlope = 0.01;

inline double activate(ActivationKind k, double z) {
    switch (k) {
        case ActivationKind::relu: return z > 0.0 ? z : 0.0;
        case ActivationKind::leaky_relu: return z > 0.0 ? z : kLeakySlope * z;
        case ActivationKind::tanh: return std::tanh(z);
        case ActivationKind::identity: return z;
    }
    throw ConfigError("activate: unknown activation kind");
}

inline double activate_derivative(ActivationKind k, double z) {
    switch (k) {
        case ActivationKind::relu: return z > 0.0 ? 1.0 : 0.0;
        case ActivationKind::leaky_relu: return z > 0.0 ? 1.0 : kLeakySlope;
        case ActivationKind::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case ActivationKind::identity: return 1.0;
    }
    throw ConfigError("activate_derivative: unknown activation kind");
}

inline std::string to_string(ActivationKind k) {
    switch (k) {
        case ActivationKind::relu: return "relu";
        case ActivationKind::leaky_relu: return "leaky_relu";
        case ActivationKind::tanh: return "tanh";
        case ActivationKind::identity: return "identity";
    }
    return "?";
}

inline ActivationKind activation_from_string(const std::string& s) {
    if (s == "relu") return ActivationKind::relu;
    if (s == "leaky_relu") return ActivationKind::leaky_relu;
    if (s == "tanh") return ActivationKind::tanh;
    if (s == "identity") return ActivationKind::identity;
    throw ConfigError("unknown activation: " + s);
}

// Low-rank coupling function f(u) = B * act(A*u + a) + b.
// A is rank x half, B is half x rank; the rank-m bottleneck replaces a dense
// half x half weight matrix.
struct SubNet {
    Matrix A;  // rank x half
    Vector a;  // rank
    Matrix B;  // half x rank
    Vector b;  // half
    ActivationKind activation = ActivationKind::relu;

    std::size_t input_dim() const { return A.cols(); }
    std::size_t output_dim() const { return B.rows(); }
    std::size_t rank() const { return A.rows(); }

    void validate() const {
        if (A.rows() != a.size() || B.cols() != A.rows() || B.rows() != b.size()) {
            throw DimensionError("SubNet: inconsistent parameter shapes");
        }
    }
};

inline Vector subnet_forward(const SubNet& s, const Vector& u) {
    Vector z = matvec(s.A, u);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = activate(s.activation, z[i] + s.a[i]);
    Vector out = matvec(s.B, z);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s.b[i];
    return out;
}

struct CouplingBlock {
    SubNet f1;
    SubNet f2;
    std::size_t half = 0;

    void validate() const {
        f1.validate();
        f2.validate();
        if (f1.input_dim() != half || f1.output_dim() != half ||
            f2.input_dim() != half || f2.output_dim() != half) {
            throw DimensionError("CouplingBlock: sub-networks must map half -> half");
        }
    }
};

inline Vector block_forward(const CouplingBlock& blk, const Vector& x) {
    if (x.size() != 2 * blk.half) {
        throw DimensionError("block_forward: expected length " + std::to_string(2 * blk.half) +
                             ", got " + std::to_string(x.size()));
    }
    const std::size_t h = blk.half;
    Vector x2(x.begin() + static_cast<std::ptrdiff_t>(h), x.end());
    Vector y1 = subnet_forward(blk.f1, x2);
    for (std::size_t i = 0; i < h; ++i) y1[i] += x[i];
    Vector y2 = subnet_forward(blk.f2, y1);
    for (std::size_t i = 0; i < h; ++i) y2[i] += x2[i];
    Vector y(2 * h);
    std::copy(y1.begin(), y1.end(), y.begin());
    std::copy(y2.begin(), y2.end(), y.begin() + static_cast<std::ptrdiff_t>(h));
    return y;
}

inline Vector block_inverse(const CouplingBlock& blk, const Vector& y) {
    if (y.size() != 2 * blk.half) {
        throw DimensionError("block_inverse: expected length " + std::to_string(2 * blk.half) +
                             ", got " + std::to_string(y.size()));
    }
    const std::size_t h = blk.half;
    Vector y1(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(h));
    Vector x2 = subnet_forward(blk.f2, y1);
    for (std::size_t i = 0; i < h; ++i) x2[i] = y[h + i] - x2[i];
    Vector x1 = subnet_forward(blk.f1, x2);
    for (std::size_t i = 0; i < h; ++i) x1[i] = y1[i] - x1[i];
    Vector x(2 * h);
    std::copy(x1.begin(), x1.end(), x.begin());
    std::copy(x2.begin(), x2.end(), x.begin() + static_cast<std::ptrdiff_t>(h));
    return x;
}

// An ordered stack of coupling blocks over a fixed even dimension.
class InvertibleNet {
public:
    explicit InvertibleNet(std::vector<CouplingBlock> blocks) : blocks_(std::move(blocks)) {
        if (blocks_.empty()) throw ConfigError("InvertibleNet: needs at least one block");
        const std::size_t half = blocks_.front().half;
        for (const CouplingBlock& b : blocks_) {
            b.validate();
            if (b.half != half) throw DimensionError("InvertibleNet: blocks disagree on half");
        }
        dim_ = 2 * half;
    }

    std::size_t dim() const { return dim_; }
    std::size_t half() const { return dim_ / 2; }
    const std::vector<CouplingBlock>& blocks() const { return blocks_; }
    std::vector<CouplingBlock>& blocks_mutable() { return blocks_; }

private:
    std::vector<CouplingBlock> blocks_;
    std::size_t dim_ = 0;
};

// Cached intermediates of one forward pass, consumed by backprop.
struct ForwardTrace {
    struct BlockTrace {
        Vector x2;  // input to f1
        Vector y1;  // input to f2
        Vector z1;  // f1 pre-activations (A*u + a)
        Vector z2;  // f2 pre-activations
    };
    std::vector<BlockTrace> blocks;
    Vector output;
};

namespace detail {

// Forward through one subnet, recording the pre-activation vector.
inline Vector subnet_forward_traced(const SubNet& s, const Vector& u, Vector& z_out) {
    z_out = matvec(s.A, u);
    for (std::size_t i = 0; i < z_out.size(); ++i) z_out[i] += s.a[i];
    Vector h(z_out.size());
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = activate(s.activation, z_out[i]);
    Vector out = matvec(s.B, h);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s.b[i];
    return out;
}

}  // namespace detail

inline Vector net_forward(const InvertibleNet& net, const Vector& x, ForwardTrace& trace) {
    if (x.size() != net.dim()) {
        throw DimensionError("net_forward: expected length " + std::to_string(net.dim()) +
                             ", got " + std::to_string(x.size()));
    }
    const std::size_t h = net.half();
    trace.blocks.resize(net.blocks().size());
    Vector x1(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(h));
    Vector x2(x.begin() + static_cast<std::ptrdiff_t>(h), x.end());
    for (std::size_t k = 0; k < net.blocks().size(); ++k) {
        const CouplingBlock& blk = net.blocks()[k];
        ForwardTrace::BlockTrace& bt = trace.blocks[k];
        bt.x2 = x2;
        Vector y1 = detail::subnet_forward_traced(blk.f1, x2, bt.z1);
        for (std::size_t i = 0; i < h; ++i) y1[i] += x1[i];
        bt.y1 = y1;
        Vector y2 = detail::subnet_forward_traced(blk.f2, y1, bt.z2);
        for (std::size_t i = 0; i < h; ++i) y2[i] += x2[i];
        x1 = std::move(y1);
        x2 = std::move(y2);
    }
    trace.output.resize(2 * h);
    std::copy(x1.begin(), x1.end(), trace.output.begin());
    std::copy(x2.begin(), x2.end(), trace.output.begin() + static_cast<std::ptrdiff_t>(h));
    return trace.output;
}

inline Vector net_forward(const InvertibleNet& net, const Vector& x) {
    ForwardTrace trace;
    return net_forward(net, x, trace);
}

inline Vector net_inverse(const InvertibleNet& net, const Vector& y) {
    if (y.size() != net.dim()) {
        throw DimensionError("net_inverse: expected length " + std::to_string(net.dim()) +
                             ", got " + std::to_string(y.size()));
    }
    Vector x = y;
    for (auto it = net.blocks().rbegin(); it != net.blocks().rend(); ++it) {
        x = block_inverse(*it, x);
    }
    return x;
}

// beta of the standard-normal prior: -(n/2) * log(2*pi). Recomputed, never stored.
inline double log_prior_constant(std::size_t n) {
    return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

inline double log_likelihood(const InvertibleNet& net, const Vector& x) {
    return -0.5 * squared_norm(net_forward(net, x)) + log_prior_constant(net.dim());
}

// Mean squared output norm over a batch (no 1/2 factor).
inline double loss_batch(const InvertibleNet& net, std::span<const Vector> xs) {
    if (xs.empty()) throw EmptyDatasetError("loss_batch: empty batch");
    double acc = 0.0;
    for (const Vector& x : xs) acc += squared_norm(net_forward(net, x));
    return acc / static_cast<double>(xs.size());
}

struct SubNetGrads {
    Matrix A;
    Vector a;
    Matrix B;
    Vector b;
};

struct NetGradients {
    struct BlockGrads {
        SubNetGrads f1;
        SubNetGrads f2;
    };
    std::vector<BlockGrads> blocks;

    void set_zero() {
        for (BlockGrads& bg : blocks) {
            for (SubNetGrads* sg : {&bg.f1, &bg.f2}) {
                std::fill(sg->A.data(), sg->A.data() + sg->A.size(), 0.0);
                std::fill(sg->a.begin(), sg->a.end(), 0.0);
                std::fill(sg->B.data(), sg->B.data() + sg->B.size(), 0.0);
                std::fill(sg->b.begin(), sg->b.end(), 0.0);
            }
        }
    }
};

inline NetGradients zero_gradients_like(const InvertibleNet& net) {
    NetGradients g;
    g.blocks.reserve(net.blocks().size());
    for (const CouplingBlock& blk : net.blocks()) {
        NetGradients::BlockGrads bg;
        for (auto [src, dst] : {std::pair{&blk.f1, &bg.f1}, std::pair{&blk.f2, &bg.f2}}) {
            dst->A = Matrix(src->A.rows(), src->A.cols());
            dst->a = Vector(src->a.size(), 0.0);
            dst->B = Matrix(src->B.rows(), src->B.cols());
            dst->b = Vector(src->b.size(), 0.0);
        }
        g.blocks.push_back(std::move(bg));
    }
    return g;
}

namespace detail {

// Reverse step through f(u) = B*act(z)+b, z = A*u+a, given dL/df = g.
// Accumulates parameter gradients and returns dL/du.
inline Vector subnet_backward(const SubNet& s, const Vector& u, const Vector& z,
                              const Vector& g, SubNetGrads& acc) {
    Vector h(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) h[i] = activate(s.activation, z[i]);
    for (std::size_t i = 0; i < g.size(); ++i) acc.b[i] += g[i];
    outer_accumulate(acc.B, g, h, 1.0);
    Vector dz = matvec_transposed(s.B, g);
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= activate_derivative(s.activation, z[i]);
    for (std::size_t i = 0; i < dz.size(); ++i) acc.a[i] += dz[i];
    outer_accumulate(acc.A, dz, u, 1.0);
    return matvec_transposed(s.A, dz);
}

}  // namespace detail

// Adds d||net(x)||^2 / dtheta for one sample into acc and returns the
// sample's squared output norm. The trace argument is scratch storage a
// caller can reuse across samples.
inline double accumulate_loss_gradients(const InvertibleNet& net, const Vector& x,
                                        NetGradients& acc, ForwardTrace& trace) {
    const std::size_t h = net.half();
    const Vector& y = net_forward(net, x, trace);
    Vector g1(h), g2(h);
    for (std::size_t i = 0; i < h; ++i) {
        g1[i] = 2.0 * y[i];
        g2[i] = 2.0 * y[h + i];
    }
    for (std::size_t k = net.blocks().size(); k-- > 0;) {
        const CouplingBlock& blk = net.blocks()[k];
        const ForwardTrace::BlockTrace& bt = trace.blocks[k];
        NetGradients::BlockGrads& bg = acc.blocks[k];
        Vector dy1_from_f2 = detail::subnet_backward(blk.f2, bt.y1, bt.z2, g2, bg.f2);
        for (std::size_t i = 0; i < h; ++i) g1[i] += dy1_from_f2[i];
        Vector dx2_from_f1 = detail::subnet_backward(blk.f1, bt.x2, bt.z1, g1, bg.f1);
        for (std::size_t i = 0; i < h; ++i) g2[i] += dx2_from_f1[i];
        // g1 is now dL/dx1 and g2 is dL/dx2 of this block's input.
    }
    return squared_norm(y);
}

inline NetGradients loss_gradients(const InvertibleNet& net, const Vector& x) {
    NetGradients g = zero_gradients_like(net);
    ForwardTrace trace;
    accumulate_loss_gradients(net, x, g, trace);
    return g;
}

inline std::size_t param_count(const InvertibleNet& net) {
    std::size_t n = 0;
    for (const CouplingBlock& blk : net.blocks()) {
        for (const SubNet* s : {&blk.f1, &blk.f2}) {
            n += s->A.size() + s->a.size() + s->B.size() + s->b.size();
        }
    }
    return n;
}

// Canonical scalar order (matches the registry file layout): per block,
// f1 then f2, each as A row-major, a, B row-major, b.
namespace detail {

template <typename Net, typename Fn>
void visit_param_arrays(Net& net, Fn&& fn) {
    for (auto& blk : net.blocks_mutable()) {
        for (SubNet* s : {&blk.f1, &blk.f2}) {
            fn(s->A.data(), s->A.size());
            fn(s->a.data(), s->a.size());
            fn(s->B.data(), s->B.size());
            fn(s->b.data(), s->b.size());
        }
    }
}

}  // namespace detail

inline Vector flatten_parameters(const InvertibleNet& net) {
    Vector out;
    out.reserve(param_count(net));
    for (const CouplingBlock& blk : net.blocks()) {
        for (const SubNet* s : {&blk.f1, &blk.f2}) {
            out.insert(out.end(), s->A.data(), s->A.data() + s->A.size());
            out.insert(out.end(), s->a.begin(), s->a.end());
            out.insert(out.end(), s->B.data(), s->B.data() + s->B.size());
            out.insert(out.end(), s->b.begin(), s->b.end());
        }
    }
    return out;
}

inline Vector flatten_gradients(const NetGradients& g) {
    Vector out;
    for (const NetGradients::BlockGrads& bg : g.blocks) {
        for (const SubNetGrads* s : {&bg.f1, &bg.f2}) {
            out.insert(out.end(), s->A.data(), s->A.data() + s->A.size());
            out.insert(out.end(), s->a.begin(), s->a.end());
            out.insert(out.end(), s->B.data(), s->B.data() + s->B.size());
            out.insert(out.end(), s->b.begin(), s->b.end());
        }
    }
    return out;
}

inline void set_parameters(InvertibleNet& net, const Vector& flat) {
    if (flat.size() != param_count(net)) {
        throw DimensionError("set_parameters: expected " + std::to_string(param_count(net)) +
                             " values, got " + std::to_string(flat.size()));
    }
    std::size_t off = 0;
    detail::visit_param_arrays(net, [&](double* p, std::size_t len) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + len), p);
        off += len;
    });
}

// All parameters zero: the identity map.
inline InvertibleNet make_zero_net(std::size_t dim, std::size_t rank, std::size_t n_blocks,
                                   ActivationKind act) {
    if (dim == 0 || dim % 2 != 0) {
        throw DimensionError("make_zero_net: dim must be even and positive");
    }
    if (rank == 0) throw ConfigError("make_zero_net: rank must be positive");
    if (n_blocks == 0) throw ConfigError("make_zero_net: needs at least one block");
    const std::size_t half = dim / 2;
    auto make_subnet = [&] {
        SubNet s;
        s.A = Matrix(rank, half);
        s.a = Vector(rank, 0.0);
        s.B = Matrix(half, rank);
        s.b = Vector(half, 0.0);
        s.activation = act;
        return s;
    };
    std::vector<CouplingBlock> blocks;
    for (std::size_t k = 0; k < n_blocks; ++k) {
        blocks.push_back(CouplingBlock{make_subnet(), make_subnet(), half});
    }
    return InvertibleNet(std::move(blocks));
}

// Fresh net with every tensor drawn uniform on [-bound/sqrt(fan_in), +...].
// Draw order equals the canonical scalar order.
inline InvertibleNet make_random_net(std::size_t dim, std::size_t rank, std::size_t n_blocks,
                                     ActivationKind act, Rng& rng, double init_bound = 1.0) {
    if (dim == 0 || dim % 2 != 0) {
        throw DimensionError("make_random_net: dim must be even and positive");
    }
    if (rank == 0) throw ConfigError("make_random_net: rank must be positive");
    if (n_blocks == 0) throw ConfigError("make_random_net: needs at least one block");
    const std::size_t half = dim / 2;
    const double bound_in = init_bound / std::sqrt(static_cast<double>(half));
    const double bound_hidden = init_bound / std::sqrt(static_cast<double>(rank));
    auto make_subnet = [&] {
        SubNet s;
        s.A = uniform_init(rank, half, bound_in, rng);
        s.a = uniform_init_vector(rank, bound_in, rng);
        s.B = uniform_init(half, rank, bound_hidden, rng);
        s.b = uniform_init_vector(half, bound_hidden, rng);
        s.activation = act;
        return s;
    };
    std::vector<CouplingBlock> blocks;
    for (std::size_t k = 0; k < n_blocks; ++k) {
        blocks.push_back(CouplingBlock{make_subnet(), make_subnet(), half});
    }
    return InvertibleNet(std::move(blocks));
}

}  // namespace ovainn
