#pragma once

// Full-batch MI estimation: the critic is trained to maximise the DV bound
// between joint pairs (x_b, y_b) and shuffled pairs (x_b, y_pi(b)), and the
// reported MI is the running maximum of the bound, converted to bits.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ie/core/error.hpp"
#include "ie/core/random.hpp"
#include "ie/core/types.hpp"
#include "ie/mine/critic.hpp"
#include "ie/mine/dv.hpp"

namespace ie {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    bool operator==(const AdamConfig&) const = default;
};

struct TrainConfig {
    std::size_t batch_size = 0; // 0 = the whole sample set; smaller batches are rejected
    double lr_start = 1e-4;
    double lr_end = 1e-8;
    std::size_t epochs = 10'000;
    std::uint64_t seed = 0;
    std::optional<std::size_t> early_stop_patience;
    CriticShape critic;
    AdamConfig adam;
    bool standardize = true; // per-feature z-scoring, an invertible map that leaves MI unchanged

    void validate() const {
        if (!(lr_start > lr_end && lr_end > 0.0)) throw InvalidArgument("need lr_start > lr_end > 0");
        if (epochs == 0) throw InvalidArgument("epochs must be at least 1");
        if (early_stop_patience && *early_stop_patience == 0)
            throw InvalidArgument("early_stop_patience must be positive");
        critic.validate();
    }

    // lr(e) = lr_end + (lr_start - lr_end) * (1 - e / epochs)^2
    double learning_rate(std::size_t epoch) const {
        const double frac = 1.0 - static_cast<double>(epoch) / static_cast<double>(epochs);
        return lr_end + (lr_start - lr_end) * frac * frac;
    }

    bool operator==(const TrainConfig&) const = default;
};

inline void to_json(Json& j, const TrainConfig& c) {
    j = Json{{"batch_size", c.batch_size},
             {"lr_start", c.lr_start},
             {"lr_end", c.lr_end},
             {"epochs", c.epochs},
             {"seed", c.seed},
             {"early_stop_patience", detail::optional_to_json(c.early_stop_patience)},
             {"critic_depth", c.critic.depth},
             {"critic_min_hidden", c.critic.min_hidden},
             {"leaky_slope", c.critic.leaky_slope},
             {"adam_beta1", c.adam.beta1},
             {"adam_beta2", c.adam.beta2},
             {"adam_epsilon", c.adam.epsilon},
             {"standardize", c.standardize}};
}

// Missing keys keep their defaults so partial JSON configs work.
inline void from_json(const Json& j, TrainConfig& c) {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_start = j.value("lr_start", c.lr_start);
    c.lr_end = j.value("lr_end", c.lr_end);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("early_stop_patience"))
        c.early_stop_patience = detail::optional_from_json<std::size_t>(j.at("early_stop_patience"));
    c.critic.depth = j.value("critic_depth", c.critic.depth);
    c.critic.min_hidden = j.value("critic_min_hidden", c.critic.min_hidden);
    c.critic.leaky_slope = j.value("leaky_slope", c.critic.leaky_slope);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.epsilon = j.value("adam_epsilon", c.adam.epsilon);
    c.standardize = j.value("standardize", c.standardize);
}

class AdamOptimizer {
public:
    AdamOptimizer(Eigen::Index size, AdamConfig cfg)
        : cfg_(cfg), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
        ++t_;
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        theta.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.epsilon);
    }

private:
    AdamConfig cfg_;
    Eigen::VectorXd m_, v_;
    std::size_t t_ = 0;
};

// Per-epoch callback: (epoch, bound in nats, learning rate).
using EpochObserver = std::function<void(std::size_t, double, double)>;

namespace detail {

// Samples as rows in column-major storage, optionally z-scored per feature.
template <typename Derived>
Eigen::MatrixXd prepare_rows(const Eigen::MatrixBase<Derived>& rows, bool standardize) {
    Eigen::MatrixXd m = rows.template cast<double>();
    if (!m.allFinite()) throw InvalidArgument("non-finite input samples");
    if (standardize) {
        const double n = static_cast<double>(m.rows());
        for (Eigen::Index f = 0; f < m.cols(); ++f) {
            auto col = m.col(f);
            const double mean = col.sum() / n;
            col.array() -= mean;
            const double sd = std::sqrt(col.squaredNorm() / n);
            if (sd > 0.0) col /= sd;
        }
    }
    return m;
}

} // namespace detail

// Trains a fresh critic and returns the running-max bound in bits. When
// `best_critic` is given it receives the critic as it was at the best epoch.
template <typename DerivedX, typename DerivedY>
MIEstimate train_mi(const Eigen::MatrixBase<DerivedX>& xs, const Eigen::MatrixBase<DerivedY>& ys,
                    const TrainConfig& cfg, const EpochObserver& observer = {},
                    CriticNetwork* best_critic = nullptr) {
    cfg.validate();
    const Eigen::Index n = xs.rows();
    if (ys.rows() != n)
        throw InvalidArgument("xs and ys are not row-aligned (" + std::to_string(n) + " vs " +
                              std::to_string(ys.rows()) + " rows)");
    if (n < 2) throw InvalidArgument("need at least 2 samples to form marginals");
    if (cfg.batch_size != 0 && cfg.batch_size < static_cast<std::size_t>(n))
        throw InvalidArgument("minibatches smaller than the sample set are not supported");

    const Eigen::MatrixXd x = detail::prepare_rows(xs, cfg.standardize);
    const Eigen::MatrixXd y = detail::prepare_rows(ys, cfg.standardize);
    const Eigen::Index dx = x.cols();
    const Eigen::Index dy = y.cols();

    // Rows [0, n) are joint pairs x_b || y_b, rows [n, 2n) are shuffled pairs
    // x_b || y_pi(b); only the bottom-right block changes between epochs.
    Eigen::MatrixXd batch(2 * n, dx + dy);
    batch.topLeftCorner(n, dx) = x;
    batch.topRightCorner(n, dy) = y;
    batch.bottomLeftCorner(n, dx) = x;

    Rng rng(cfg.seed);
    CriticNetwork critic(static_cast<std::size_t>(dx + dy), cfg.critic, rng.next());
    AdamOptimizer adam(static_cast<Eigen::Index>(critic.parameter_count()), cfg.adam);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});

    MIEstimate est;
    est.seed = cfg.seed;
    std::optional<double> best_bits;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<Eigen::Index>(perm));
        for (Eigen::Index f = 0; f < dy; ++f) {
            auto dst = batch.col(dx + f).tail(n);
            const auto src = y.col(f);
            for (Eigen::Index b = 0; b < n; ++b) dst[b] = src[perm[static_cast<std::size_t>(b)]];
        }

        const Eigen::VectorXd out = critic.evaluate(batch);
        if (!out.allFinite()) throw DivergenceError(epoch, "non-finite critic output");
        const double bound = dv_bound_from_outputs(out.head(n), out.tail(n));
        if (!std::isfinite(bound)) throw DivergenceError(epoch, "non-finite DV bound");

        const double bits = bound * kBitsPerNat;
        if (!best_bits || bits > *best_bits) {
            best_bits = bits;
            est.best_epoch = epoch;
            if (best_critic) *best_critic = critic;
        }
        est.epochs_run = epoch + 1;
        const double lr = cfg.learning_rate(epoch);
        if (observer) observer(epoch, bound, lr);

        if (cfg.early_stop_patience && epoch - est.best_epoch >= *cfg.early_stop_patience) break;

        const Eigen::VectorXd grad = critic.gradient(batch, dv_loss_output_gradient(out.head(n), out.tail(n)));
        if (!grad.allFinite()) throw DivergenceError(epoch, "non-finite gradient");
        adam.step(critic.parameters(), grad, lr);
    }
    est.value_bits = *best_bits;
    return est;
}

// DV bound in bits of a fixed critic on `resamples` bootstrap resamples of
// the rows: joint pairs are drawn with replacement and the marginal pairs
// shuffle the drawn y rows. Inputs are prepared as in train_mi.
template <typename DerivedX, typename DerivedY>
std::vector<double> bootstrap_bounds(const CriticNetwork& critic, const Eigen::MatrixBase<DerivedX>& xs,
                                     const Eigen::MatrixBase<DerivedY>& ys, bool standardize, std::size_t resamples,
                                     std::uint64_t seed) {
    const Eigen::MatrixXd x = detail::prepare_rows(xs, standardize);
    const Eigen::MatrixXd y = detail::prepare_rows(ys, standardize);
    const Eigen::Index n = x.rows(), dx = x.cols(), dy = y.cols();
    if (y.rows() != n) throw InvalidArgument("xs and ys are not row-aligned");
    if (static_cast<std::size_t>(dx + dy) != critic.input_width())
        throw InvalidArgument("critic input width does not match the samples");
    Eigen::MatrixXd batch(2 * n, dx + dy);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n)), perm(static_cast<std::size_t>(n));
    std::vector<double> out;
    out.reserve(resamples);
    for (std::size_t b = 0; b < resamples; ++b) {
        Rng rng(derive_seed(seed, {b}));
        for (auto& i : idx) i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        std::iota(perm.begin(), perm.end(), Eigen::Index{0});
        rng.shuffle(std::span<Eigen::Index>(perm));
        for (Eigen::Index r = 0; r < n; ++r) {
            const Eigen::Index i = idx[static_cast<std::size_t>(r)];
            const Eigen::Index j = idx[static_cast<std::size_t>(perm[static_cast<std::size_t>(r)])];
            batch.row(r).head(dx) = x.row(i);
            batch.row(r).tail(dy) = y.row(i);
            batch.row(n + r).head(dx) = x.row(i);
            batch.row(n + r).tail(dy) = y.row(j);
        }
        const Eigen::VectorXd f = critic.evaluate(batch);
        out.push_back(dv_bound_from_outputs(f.head(n), f.tail(n)) * kBitsPerNat);
    }
    return out;
}

} // namespace ie
