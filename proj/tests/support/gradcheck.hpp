#pragma once

// Central-difference gradient checks for the critic and the DV loss.

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "ie/core/random.hpp"
#include "ie/mine/critic.hpp"
#include "ie/mine/dv.hpp"

namespace ie::testing {

inline Eigen::MatrixXd random_rows(Rng& rng, Eigen::Index n, Eigen::Index w) {
    Eigen::MatrixXd m(n, w);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

// Central differences of g(theta) with step h.
template <typename F>
Eigen::VectorXd numeric_gradient(CriticNetwork& critic, F&& g, double h = 1e-5) {
    Eigen::VectorXd& theta = critic.parameters();
    Eigen::VectorXd grad(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        const double up = g();
        theta[i] = keep - h;
        const double down = g();
        theta[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double scale = std::max({a.norm(), b.norm(), 1e-12});
    return (a - b).norm() / scale;
}

// Smallest |pre-activation| over every hidden unit and row. Central
// differences are only a valid oracle when no unit sits within a step of
// the leaky-rectifier kink.
inline double kink_margin(const CriticNetwork& critic, const Eigen::MatrixXd& rows) {
    CriticTape tape;
    critic.forward(rows, &tape);
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < tape.inputs.size(); ++i)
        for (Eigen::Index k = 0; k < tape.inputs[i].size(); ++k) {
            const double a = tape.inputs[i].data()[k];
            margin = std::min(margin, a >= 0 ? a : -a / critic.shape().leaky_slope);
        }
    return margin;
}

inline constexpr double kKinkMargin = 1e-3;

// One random (critic, joint, marginal) draw of 2-5 layers and 8-31 rows,
// redrawn while any hidden unit lies within kKinkMargin of the kink.
// Returns the relative error of the analytic DV-loss gradient.
inline double dv_gradient_check_draw(Rng& rng, double h = 1e-5) {
    for (;;) {
        CriticShape shape;
        shape.depth = 2 + rng.below(4);
        shape.min_hidden = 4;
        const Eigen::Index n = 8 + static_cast<Eigen::Index>(rng.below(24));
        CriticNetwork c(4, shape, rng.next());
        const auto joint = random_rows(rng, n, 4);
        const auto marginal = random_rows(rng, n, 4);
        Eigen::MatrixXd both(2 * n, 4);
        both << joint, marginal;
        if (kink_margin(c, both) < kKinkMargin) continue;
        const auto out = c.evaluate(both);
        const auto analytic = c.gradient(both, dv_loss_output_gradient(out.head(n), out.tail(n)));
        const auto fd = numeric_gradient(c, [&] { return -dv_bound(c, joint, marginal); }, h);
        return relative_error(analytic, fd);
    }
}

} // namespace ie::testing
