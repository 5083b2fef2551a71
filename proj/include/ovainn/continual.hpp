// One-versus-All continual learner: a registry of frozen per-class invertible
// networks, single-head and multi-head inference by smallest output norm,
// a nearest-prototype baseline, evaluation metrics, and model persistence.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ovainn/dataio.hpp"
#include "ovainn/errors.hpp"
#include "ovainn/flowcore.hpp"
#include "ovainn/numkit.hpp"

namespace ovainn {

// ---------------------------------------------------------------------------
// Expert registry
// ---------------------------------------------------------------------------

// Ordered collection of frozen per-class networks. Insertion order is the
// learning order and is preserved through serialization; class ids may be
// sparse and non-contiguous.
class ExpertRegistry {
  public:
    struct Entry {
        std::int32_t class_id;
        InvertibleNet net;
    };

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t dim() const { return dim_; }

    const std::vector<Entry>& entries() const { return entries_; }

    std::vector<std::int32_t> class_ids() const {
        std::vector<std::int32_t> ids;
        ids.reserve(entries_.size());
        for (const Entry& e : entries_) ids.push_back(e.class_id);
        return ids;
    }

    bool has_class(std::int32_t class_id) const {
        return index_of(class_id) != entries_.size();
    }

    const InvertibleNet& net_for(std::int32_t class_id) const {
        const std::size_t i = index_of(class_id);
        if (i == entries_.size()) {
            throw LookupError("no expert registered for class " + std::to_string(class_id));
        }
        return entries_[i].net;
    }

    // Prior entries are untouched: the new expert is appended and everything
    // already registered stays bitwise identical.
    void add_class(std::int32_t class_id, InvertibleNet net) {
        if (class_id < 0) {
            throw ConfigError("class id must be non-negative, got " + std::to_string(class_id));
        }
        if (has_class(class_id)) {
            throw ConflictError("class " + std::to_string(class_id) + " already registered");
        }
        if (!entries_.empty() && net.dim() != dim_) {
            throw DimensionError("expert dim " + std::to_string(net.dim()) +
                                 " does not match registry dim " + std::to_string(dim_));
        }
        if (entries_.empty()) dim_ = net.dim();
        entries_.push_back(Entry{class_id, std::move(net)});
    }

  private:
    std::size_t index_of(std::int32_t class_id) const {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].class_id == class_id) return i;
        }
        return entries_.size();
    }

    std::vector<Entry> entries_;
    std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct Prediction {
    std::int32_t class_id = -1;
    double score = 0.0;  // squared output norm of the winning expert
    // (class_id, squared norm) for every expert consulted, in registry order.
    std::vector<std::pair<std::int32_t, double>> per_class_scores;
};

namespace detail {

// Argmin of squared output norm over the given registry entries; ties go to
// the smallest class_id so results are independent of learning order.
inline Prediction argmin_over(const ExpertRegistry& reg, const Vector& x,
                              const std::vector<std::size_t>& entry_indices) {
    if (x.size() != reg.dim()) {
        throw DimensionError("input dim " + std::to_string(x.size()) +
                             " does not match registry dim " + std::to_string(reg.dim()));
    }
    Prediction pred;
    pred.per_class_scores.reserve(entry_indices.size());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i : entry_indices) {
        const ExpertRegistry::Entry& e = reg.entries()[i];
        const double s = squared_norm(net_forward(e.net, x));
        pred.per_class_scores.emplace_back(e.class_id, s);
        if (s < best || (s == best && e.class_id < pred.class_id)) {
            best = s;
            pred.class_id = e.class_id;
            pred.score = s;
        }
    }
    return pred;
}

inline std::vector<std::size_t> all_entry_indices(const ExpertRegistry& reg) {
    std::vector<std::size_t> idx(reg.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

}  // namespace detail

// Single-head prediction: every registered expert competes.
inline Prediction predict(const ExpertRegistry& reg, const Vector& x) {
    if (reg.empty()) throw StateError("predict: registry is empty");
    return detail::argmin_over(reg, x, detail::all_entry_indices(reg));
}

// Multi-head prediction: the argmin is restricted to `allowed` (the task the
// sample is known to belong to).
inline Prediction predict_multi_head(const ExpertRegistry& reg, const Vector& x,
                                     const std::vector<std::int32_t>& allowed) {
    if (allowed.empty()) throw ConfigError("predict_multi_head: allowed set is empty");
    std::vector<std::size_t> indices;
    indices.reserve(allowed.size());
    for (std::size_t i = 0; i < reg.entries().size(); ++i) {
        const std::int32_t id = reg.entries()[i].class_id;
        if (std::find(allowed.begin(), allowed.end(), id) != allowed.end()) {
            indices.push_back(i);
        }
    }
    for (std::int32_t id : allowed) {
        if (!reg.has_class(id)) {
            throw LookupError("predict_multi_head: class " + std::to_string(id) +
                              " is not registered");
        }
    }
    return detail::argmin_over(reg, x, indices);
}

// ---------------------------------------------------------------------------
// Nearest-prototype baseline
// ---------------------------------------------------------------------------

struct PrototypeModel {
    std::map<std::int32_t, Vector> prototypes;  // class_id -> mean vector
};

inline PrototypeModel fit_prototypes(const std::map<std::int32_t, std::vector<Vector>>& datasets) {
    PrototypeModel model;
    for (const auto& [class_id, samples] : datasets) {
        if (samples.empty()) {
            throw EmptyDatasetError("fit_prototypes: class " + std::to_string(class_id) +
                                    " has no samples");
        }
        Vector mean(samples.front().size(), 0.0);
        for (const Vector& v : samples) {
            if (v.size() != mean.size()) {
                throw DimensionError("fit_prototypes: inconsistent sample dims in class " +
                                     std::to_string(class_id));
            }
            for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
        }
        for (double& m : mean) m /= static_cast<double>(samples.size());
        model.prototypes.emplace(class_id, std::move(mean));
    }
    return model;
}

// Nearest prototype by squared Euclidean distance; ties go to the smallest
// class_id (std::map iterates ascending, so strict < preserves the first).
inline std::int32_t predict_prototype(const PrototypeModel& model, const Vector& x) {
    if (model.prototypes.empty()) throw StateError("predict_prototype: model is empty");
    std::int32_t best_id = -1;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [class_id, proto] : model.prototypes) {
        if (proto.size() != x.size()) {
            throw DimensionError("predict_prototype: input dim " + std::to_string(x.size()) +
                                 " does not match prototype dim " + std::to_string(proto.size()));
        }
        double d = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double diff = x[i] - proto[i];
            d += diff * diff;
        }
        if (d < best) {
            best = d;
            best_id = class_id;
        }
    }
    return best_id;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class EvalMode { single_head, multi_head };

inline std::string to_string(EvalMode mode) {
    return mode == EvalMode::single_head ? "single_head" : "multi_head";
}

// Disjoint groups of class ids; at test time a sample's group is known and
// only experts inside it compete.
using TaskPartition = std::vector<std::vector<std::int32_t>>;

struct EvalReport {
    EvalMode mode = EvalMode::single_head;
    std::vector<std::int32_t> class_ids;           // row/column labels, registry order
    std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
    std::uint64_t correct = 0;
    std::uint64_t total = 0;
    // (classes_seen, accuracy) points; a single evaluate() call contributes
    // one point, callers evaluating after each class batch append to it.
    std::vector<std::pair<std::size_t, double>> accuracy_after_each_batch;

    double accuracy() const {
        return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    }
};

namespace detail {

inline unsigned resolve_threads(unsigned requested) {
    if (requested != 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n) across `threads` workers. Each index is
// processed exactly once; fn must only touch its own slot of shared state.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::min<std::size_t>(std::max(1u, threads), n == 0 ? 1 : n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Shared scoring loop: `predict_fn(i)` returns the predicted class for test
// sample i. Predictions are stored per slot, then reduced sequentially so
// the report is identical for every thread count.
template <typename PredictFn>
EvalReport evaluate_impl(const std::vector<std::int32_t>& class_ids, const LabeledVectors& test,
                         EvalMode mode, unsigned threads, PredictFn&& predict_fn) {
    if (test.size() == 0) throw EmptyDatasetError("evaluate: test set is empty");
    std::map<std::int32_t, std::size_t> index_of;
    for (std::size_t i = 0; i < class_ids.size(); ++i) index_of.emplace(class_ids[i], i);
    for (std::int32_t y : test.labels) {
        if (!index_of.count(y)) {
            throw LookupError("evaluate: test label " + std::to_string(y) +
                              " has no registered class");
        }
    }

    std::vector<std::int32_t> predicted(test.size());
    parallel_for(test.size(), resolve_threads(threads),
                 [&](std::size_t i) { predicted[i] = predict_fn(i); });

    EvalReport report;
    report.mode = mode;
    report.class_ids = class_ids;
    report.confusion.assign(class_ids.size(),
                            std::vector<std::uint64_t>(class_ids.size(), 0));
    for (std::size_t i = 0; i < test.size(); ++i) {
        const std::size_t row = index_of.at(test.labels[i]);
        const std::size_t col = index_of.at(predicted[i]);
        ++report.confusion[row][col];
        if (test.labels[i] == predicted[i]) ++report.correct;
    }
    report.total = test.size();
    report.accuracy_after_each_batch = {{class_ids.size(), report.accuracy()}};
    return report;
}

}  // namespace detail

// Evaluates the registry on a labeled test set. task_partition must be given
// exactly when mode is multi_head; it must cover every test label with
// registered classes and assign no class to two tasks.
inline EvalReport evaluate(const ExpertRegistry& reg, const LabeledVectors& test, EvalMode mode,
                           const TaskPartition* task_partition = nullptr, unsigned threads = 0) {
    if (reg.empty()) throw StateError("evaluate: registry is empty");
    if ((mode == EvalMode::multi_head) != (task_partition != nullptr)) {
        throw ConfigError("evaluate: task partition is required exactly when mode is multi_head");
    }

    if (mode == EvalMode::single_head) {
        const std::vector<std::size_t> all = detail::all_entry_indices(reg);
        return detail::evaluate_impl(reg.class_ids(), test, mode, threads, [&](std::size_t i) {
            return detail::argmin_over(reg, test.vectors[i], all).class_id;
        });
    }

    // Multi-head: precompute per-task entry index lists and a class -> task map.
    std::map<std::int32_t, std::size_t> task_of;
    std::vector<std::vector<std::size_t>> task_entries(task_partition->size());
    for (std::size_t t = 0; t < task_partition->size(); ++t) {
        if ((*task_partition)[t].empty()) {
            throw ConfigError("evaluate: task " + std::to_string(t) + " is empty");
        }
        for (std::int32_t id : (*task_partition)[t]) {
            if (!reg.has_class(id)) {
                throw LookupError("evaluate: task class " + std::to_string(id) +
                                  " is not registered");
            }
            if (!task_of.emplace(id, t).second) {
                throw ConfigError("evaluate: class " + std::to_string(id) +
                                  " appears in more than one task");
            }
        }
    }
    for (std::size_t i = 0; i < reg.entries().size(); ++i) {
        const auto it = task_of.find(reg.entries()[i].class_id);
        if (it != task_of.end()) task_entries[it->second].push_back(i);
    }
    for (std::int32_t y : test.labels) {
        if (!task_of.count(y)) {
            throw ConfigError("evaluate: test label " + std::to_string(y) +
                              " is not covered by the task partition");
        }
    }
    return detail::evaluate_impl(reg.class_ids(), test, mode, threads, [&](std::size_t i) {
        const std::size_t t = task_of.at(test.labels[i]);
        return detail::argmin_over(reg, test.vectors[i], task_entries[t]).class_id;
    });
}

// Evaluates the nearest-prototype baseline with the same report shape.
inline EvalReport evaluate_prototype(const PrototypeModel& model, const LabeledVectors& test,
                                     unsigned threads = 0) {
    if (model.prototypes.empty()) throw StateError("evaluate_prototype: model is empty");
    std::vector<std::int32_t> ids;
    ids.reserve(model.prototypes.size());
    for (const auto& [class_id, proto] : model.prototypes) {
        (void)proto;
        ids.push_back(class_id);
    }
    return detail::evaluate_impl(ids, test, EvalMode::single_head, threads, [&](std::size_t i) {
        return predict_prototype(model, test.vectors[i]);
    });
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------
// Little-endian registry file: magic "OVAINN01", u16 version = 1,
// u32 net_count, u32 dim; per net: u32 class_id, u16 n_blocks, u32 rank,
// u8 activation code, then per block, per SubNet (f1 then f2):
// A row-major f32, a f32, B row-major f32, b f32. No padding.

inline constexpr char kRegistryMagic[8] = {'O', 'V', 'A', 'I', 'N', 'N', '0', '1'};

namespace detail {

// The on-disk format carries one rank and one activation per net, so every
// subnet must agree on both.
inline void check_uniform_net(const InvertibleNet& net) {
    const SubNet& first = net.blocks().front().f1;
    for (const CouplingBlock& blk : net.blocks()) {
        for (const SubNet* s : {&blk.f1, &blk.f2}) {
            if (s->A.rows() != first.A.rows() || s->activation != first.activation) {
                throw ConfigError(
                    "registry format requires a uniform rank and activation across subnets");
            }
        }
    }
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_registry(const ExpertRegistry& reg) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kRegistryMagic, kRegistryMagic + 8);
    detail::put_u16_le(out, 1);
    detail::put_u32_le(out, static_cast<std::uint32_t>(reg.size()));
    detail::put_u32_le(out, static_cast<std::uint32_t>(reg.dim()));
    for (const ExpertRegistry::Entry& e : reg.entries()) {
        detail::check_uniform_net(e.net);
        detail::put_u32_le(out, static_cast<std::uint32_t>(e.class_id));
        detail::put_u16_le(out, static_cast<std::uint16_t>(e.net.blocks().size()));
        detail::put_u32_le(out, static_cast<std::uint32_t>(e.net.blocks().front().f1.A.rows()));
        out.push_back(static_cast<std::uint8_t>(e.net.blocks().front().f1.activation));
        // flatten_parameters emits exactly the file's field order.
        for (double p : flatten_parameters(e.net)) {
            detail::put_f32_le(out, static_cast<float>(p));
        }
    }
    return out;
}

inline ExpertRegistry decode_registry(const std::vector<std::uint8_t>& bytes,
                                      const std::string& name) {
    detail::ByteCursor cur{bytes.data(), bytes.size(), 0, name};
    cur.need(8);
    if (std::memcmp(cur.data, kRegistryMagic, 8) != 0) {
        throw FormatError(name + ": bad magic at byte offset 0 (expected \"OVAINN01\")");
    }
    cur.pos += 8;
    const std::uint16_t version = cur.u16_le();
    if (version != 1) {
        throw FormatError(name + ": unsupported version " + std::to_string(version) +
                          " at byte offset 8");
    }
    const std::uint32_t net_count = cur.u32_le();
    const std::uint32_t dim = cur.u32_le();
    if (net_count > 0 && dim % 2 != 0) {
        throw FormatError(name + ": dim " + std::to_string(dim) +
                          " at byte offset 14 must be even");
    }
    const std::size_t half = dim / 2;

    ExpertRegistry reg;
    for (std::uint32_t k = 0; k < net_count; ++k) {
        const std::size_t net_offset = cur.pos;
        const std::uint32_t raw_id = cur.u32_le();
        if (raw_id > 0x7FFFFFFFu) {
            throw FormatError(name + ": class id " + std::to_string(raw_id) +
                              " at byte offset " + std::to_string(net_offset) +
                              " exceeds the non-negative id range");
        }
        const std::int32_t class_id = static_cast<std::int32_t>(raw_id);
        const std::uint16_t n_blocks = cur.u16_le();
        if (n_blocks == 0) {
            throw FormatError(name + ": net at byte offset " + std::to_string(net_offset) +
                              " declares zero blocks");
        }
        const std::uint32_t rank = cur.u32_le();
        if (rank == 0 || half == 0) {
            throw FormatError(name + ": net at byte offset " + std::to_string(net_offset) +
                              " declares a zero-sized layer (rank " + std::to_string(rank) +
                              ", dim " + std::to_string(dim) + ")");
        }
        const std::uint8_t act_code = cur.u8();
        if (act_code > 3) {
            throw FormatError(name + ": unknown activation code " + std::to_string(act_code) +
                              " at byte offset " + std::to_string(cur.pos - 1));
        }
        const ActivationKind activation = static_cast<ActivationKind>(act_code);

        std::vector<CouplingBlock> blocks;
        blocks.reserve(n_blocks);
        for (std::uint16_t b = 0; b < n_blocks; ++b) {
            CouplingBlock blk;
            blk.half = half;
            for (SubNet* s : {&blk.f1, &blk.f2}) {
                s->activation = activation;
                s->A = Matrix(rank, half);
                for (std::size_t i = 0; i < s->A.size(); ++i) {
                    s->A.data()[i] = static_cast<double>(cur.f32_le());
                }
                s->a.resize(rank);
                for (double& p : s->a) p = static_cast<double>(cur.f32_le());
                s->B = Matrix(half, rank);
                for (std::size_t i = 0; i < s->B.size(); ++i) {
                    s->B.data()[i] = static_cast<double>(cur.f32_le());
                }
                s->b.resize(half);
                for (double& p : s->b) p = static_cast<double>(cur.f32_le());
            }
            blocks.push_back(std::move(blk));
        }
        if (reg.has_class(class_id)) {
            throw FormatError(name + ": duplicate class id " + std::to_string(class_id) +
                              " at byte offset " + std::to_string(net_offset));
        }
        reg.add_class(class_id, InvertibleNet(std::move(blocks)));
    }
    if (cur.pos != bytes.size()) {
        throw FormatError(name + ": " + std::to_string(bytes.size() - cur.pos) +
                          " trailing bytes at byte offset " + std::to_string(cur.pos));
    }
    return reg;
}

inline void save_registry(const ExpertRegistry& reg, const std::string& path) {
    detail::write_file_bytes(path, encode_registry(reg));
}

inline ExpertRegistry load_registry(const std::string& path) {
    return decode_registry(detail::read_file_bytes(path), path);
}

}  // namespace ovainn
