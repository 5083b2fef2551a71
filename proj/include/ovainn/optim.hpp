// Training machinery: Adam with L2 weight decay, a reduce-on-plateau learning
// rate scheduler, and the per-class loop that produces a frozen expert net.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ovainn/errors.hpp"
#include "ovainn/flowcore.hpp"
#include "ovainn/numkit.hpp"

namespace ovainn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Coupled decay adds wd*theta to the gradient before the moment updates;
    // the decoupled variant subtracts lr*wd*theta from theta directly.
    bool decoupled_weight_decay = false;
};

class AdamState {
public:
    explicit AdamState(std::size_t n_params, AdamConfig cfg = {})
        : m_(n_params, 0.0), v_(n_params, 0.0), cfg_(cfg) {}

    void step(Vector& params, const Vector& grads, double lr, double weight_decay) {
        if (params.size() != m_.size() || grads.size() != m_.size()) {
            throw DimensionError("AdamState::step: parameter/gradient size mismatch");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            double g = grads[i];
            if (!cfg_.decoupled_weight_decay) g += weight_decay * params[i];
            m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
            v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
            const double m_hat = m_[i] / bc1;
            const double v_hat = v_[i] / bc2;
            double theta = params[i] - lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
            if (cfg_.decoupled_weight_decay) theta -= lr * weight_decay * params[i];
            params[i] = theta;
        }
    }

    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    Vector m_;
    Vector v_;
    std::int64_t t_ = 0;
    AdamConfig cfg_;
};

inline void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr,
                      double weight_decay) {
    state.step(params, grads, lr, weight_decay);
}

// Halves the learning rate once the epoch loss has failed to improve on the
// best seen value for more than `patience` consecutive epochs. Improvement
// means dropping below best*(1 - min_improvement). Stops halving at min_lr.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, int patience, double factor = 0.5,
                     double min_improvement = 1e-4, double min_lr = 1e-6)
        : lr_(initial_lr),
          factor_(factor),
          patience_(patience),
          min_improvement_(min_improvement),
          min_lr_(min_lr) {
        if (initial_lr <= 0.0) throw ConfigError("PlateauScheduler: lr must be positive");
    }

    double update(double epoch_loss) {
        if (epoch_loss < best_loss_ * (1.0 - min_improvement_)) {
            best_loss_ = epoch_loss;
            epochs_since_best_ = 0;
        } else {
            ++epochs_since_best_;
            if (epochs_since_best_ > patience_) {
                if (lr_ > min_lr_) lr_ *= factor_;
                epochs_since_best_ = 0;
            }
        }
        return lr_;
    }

    double lr() const { return lr_; }
    double best_loss() const { return best_loss_; }
    int epochs_since_best() const { return epochs_since_best_; }

private:
    double lr_;
    double factor_;
    int patience_;
    double min_improvement_;
    double min_lr_;
    double best_loss_ = std::numeric_limits<double>::infinity();
    int epochs_since_best_ = 0;
};

struct TrainConfig {
    double learning_rate = 0.002;
    int epochs = 200;
    double weight_decay = 0.0;
    int patience = 20;
    int batch_size = 128;
    std::size_t rank = 16;
    std::size_t n_blocks = 2;
    ActivationKind activation = ActivationKind::relu;
    std::uint64_t seed = 0;
    double min_lr = 1e-6;
    double init_bound = 1.0;
    bool decoupled_weight_decay = false;

    void validate() const {
        if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
        if (rank < 1) throw ConfigError("TrainConfig: rank must be >= 1");
        if (n_blocks < 1) throw ConfigError("TrainConfig: n_blocks must be >= 1");
        if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning_rate must be > 0");
        if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
    }
};

using EpochCallback = std::function<void(int epoch, double loss, double lr)>;

namespace detail {

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next() % i);
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace detail

// Trains a fresh net on the samples of one class with mini-batch Adam on the
// mean squared output norm, shuffling every epoch with the supplied rng.
// The returned net is final; callers freeze it by registering it.
inline InvertibleNet train_class(std::span<const Vector> samples, const TrainConfig& cfg,
                                 Rng& rng, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (samples.empty()) throw EmptyDatasetError("train_class: no samples");
    const std::size_t dim = samples.front().size();
    for (const Vector& s : samples) {
        if (s.size() != dim) throw DimensionError("train_class: inconsistent sample dims");
    }
    if (dim == 0 || dim % 2 != 0) {
        throw DimensionError("train_class: sample dimension must be even and positive");
    }

    InvertibleNet net =
        make_random_net(dim, cfg.rank, cfg.n_blocks, cfg.activation, rng, cfg.init_bound);

    Vector params = flatten_parameters(net);
    AdamState adam(params.size(), AdamConfig{.decoupled_weight_decay = cfg.decoupled_weight_decay});
    PlateauScheduler scheduler(cfg.learning_rate, cfg.patience, 0.5, 1e-4, cfg.min_lr);

    NetGradients grad_acc = zero_gradients_like(net);
    ForwardTrace trace;
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double lr = cfg.learning_rate;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        detail::shuffle_indices(order, rng);
        double epoch_loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const double inv_n = 1.0 / static_cast<double>(stop - start);
            grad_acc.set_zero();
            for (std::size_t i = start; i < stop; ++i) {
                epoch_loss_sum += accumulate_loss_gradients(net, samples[order[i]], grad_acc, trace);
            }
            Vector grads = flatten_gradients(grad_acc);
            for (double& g : grads) g *= inv_n;
            adam_step(params, grads, adam, lr, cfg.weight_decay);
            set_parameters(net, params);
        }
        const double epoch_loss = epoch_loss_sum / static_cast<double>(order.size());
        lr = scheduler.update(epoch_loss);
        if (on_epoch) on_epoch(epoch, epoch_loss, lr);
    }
    return net;
}

}  // namespace ovainn
