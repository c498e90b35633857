#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "ie/core/random.hpp"
#include "ie/mine/critic.hpp"
#include "ie/mine/dv.hpp"
#include "support/gradcheck.hpp"

using namespace ie;
using namespace ie::testing;

namespace {

Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

} // namespace

TEST(CriticWidths, HalveWithFloor) {
    CriticShape shape;
    shape.min_hidden = 8;
    EXPECT_EQ(critic_widths(128, shape), (std::vector<std::size_t>{128, 64, 32, 16, 8, 8, 8, 8, 8, 8, 1}));
    shape.min_hidden = 1;
    EXPECT_EQ(critic_widths(16, shape), (std::vector<std::size_t>{16, 8, 4, 2, 1, 1, 1, 1, 1, 1, 1}));
    EXPECT_EQ(critic_widths(2, shape), (std::vector<std::size_t>{2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}));
    shape.depth = 1;
    EXPECT_EQ(critic_widths(6, shape), (std::vector<std::size_t>{6, 1}));
}

TEST(CriticWidths, RejectsBadShapes) {
    CriticShape shape;
    EXPECT_THROW(critic_widths(0, shape), InvalidArgument);
    shape.depth = 0;
    EXPECT_THROW(critic_widths(4, shape), InvalidArgument);
    shape.depth = 3;
    shape.leaky_slope = 1.5;
    EXPECT_THROW(critic_widths(4, shape), InvalidArgument);
}

TEST(Critic, GlorotInitAndZeroBiases) {
    CriticNetwork c(20, CriticShape{}, 5);
    for (std::size_t i = 0; i < c.layer_count(); ++i) {
        const double limit = std::sqrt(6.0 / static_cast<double>(c.widths()[i] + c.widths()[i + 1]));
        EXPECT_LE(c.weight(i).cwiseAbs().maxCoeff(), limit);
        EXPECT_EQ(c.bias(i).cwiseAbs().maxCoeff(), 0.0);
    }
    CriticNetwork d(20, CriticShape{}, 5);
    EXPECT_EQ(c.parameters(), d.parameters());
}

TEST(Critic, OneScalarPerRow) {
    Rng rng(1);
    CriticNetwork c(6, CriticShape{}, 2);
    const auto out = c.evaluate(random_rows(rng, 1000, 6));
    EXPECT_EQ(out.size(), 1000);
    EXPECT_TRUE(out.allFinite());
}

TEST(Critic, ChunkedEvaluateMatchesForward) {
    Rng rng(3);
    CriticNetwork c(4, CriticShape{}, 4);
    const auto rows = random_rows(rng, 700, 4);
    EXPECT_LT((c.evaluate(rows) - c.forward(rows)).cwiseAbs().maxCoeff(), 1e-12);
    const auto d = random_vector(rng, 700);
    CriticTape tape;
    c.forward(rows, &tape);
    EXPECT_LT(relative_error(c.gradient(rows, d), c.backward(tape, d)), 1e-12);
}

TEST(Critic, WidthMismatchThrows) {
    CriticNetwork c(4, CriticShape{}, 1);
    EXPECT_THROW(c.evaluate(Eigen::MatrixXd::Zero(3, 5)), InvalidArgument);
    EXPECT_THROW(forward_backward(c, Eigen::MatrixXd::Zero(3, 5), Eigen::VectorXd::Zero(3)), InvalidArgument);
    EXPECT_THROW(forward_backward(c, Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(2)), InvalidArgument);
}

TEST(ForwardBackward, OneLayerMatchesOuterProduct) {
    // f(r) = w . r + b, so d/dw sum_b d_b f(r_b) = sum_b d_b r_b and d/db = sum_b d_b.
    CriticShape shape;
    shape.depth = 1;
    CriticNetwork c(3, shape, 0);
    c.weight(0) << 1.0, 0.0, 0.0;
    c.bias(0) << 0.25;
    Eigen::MatrixXd row(1, 3);
    row << 0.5, -2.0, 3.0;
    Eigen::VectorXd d(1);
    d << 1.5;
    const auto fb = forward_backward(c, row, d);
    EXPECT_DOUBLE_EQ(fb.outputs[0], 0.75);
    ASSERT_EQ(fb.gradient.size(), 4);
    EXPECT_DOUBLE_EQ(fb.gradient[0], 1.5 * 0.5);
    EXPECT_DOUBLE_EQ(fb.gradient[1], 1.5 * -2.0);
    EXPECT_DOUBLE_EQ(fb.gradient[2], 1.5 * 3.0);
    EXPECT_DOUBLE_EQ(fb.gradient[3], 1.5);
}

TEST(ForwardBackward, ZeroWeightCriticHasZeroLossGradient) {
    Rng rng(11);
    CriticNetwork c(6, CriticShape{}, 1);
    c.parameters().setZero();
    const auto rows = random_rows(rng, 32, 6);
    const auto out = c.evaluate(rows);
    EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
    // Only the output bias sees the upstream gradient.
    const auto d = random_vector(rng, 32);
    const auto g = forward_backward(c, rows, d).gradient;
    EXPECT_NEAR(g[g.size() - 1], d.sum(), 1e-12);
    EXPECT_EQ(g.head(g.size() - 1).cwiseAbs().maxCoeff(), 0.0);
    // Under the DV loss the joint and marginal weights cancel.
    const auto dl = dv_loss_output_gradient(out.head(16), out.tail(16));
    EXPECT_NEAR(c.gradient(rows, dl).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(ForwardBackward, ThreeLayerMatchesFiniteDifferences) {
    Rng rng(2024);
    CriticShape shape;
    shape.depth = 3;
    shape.min_hidden = 1;
    CriticNetwork c(8, shape, rng.next());
    const auto rows = random_rows(rng, 16, 8);
    const auto d = random_vector(rng, 16);
    const auto fb = forward_backward(c, rows, d);
    const auto fd = numeric_gradient(c, [&] { return d.dot(c.forward(rows)); });
    EXPECT_LE(relative_error(fb.gradient, fd), 1e-4);
}

TEST(ForwardBackward, RandomDrawsMatchFiniteDifferences) {
    Rng rng(99);
    for (int draw = 0; draw < 24;) {
        CriticShape shape;
        shape.depth = 1 + rng.below(10);
        shape.min_hidden = 1 + rng.below(6);
        shape.leaky_slope = draw % 3 == 0 ? 0.01 : 0.01 + 0.2 * rng.uniform();
        const auto width = static_cast<Eigen::Index>(2 * (1 + rng.below(5)));
        const auto batch = static_cast<Eigen::Index>(2 + rng.below(40));
        CriticNetwork c(static_cast<std::size_t>(width), shape, rng.next());
        for (std::size_t i = 0; i < c.layer_count(); ++i)
            for (Eigen::Index k = 0; k < c.bias(i).size(); ++k) c.bias(i)[k] = 0.1 * rng.normal();
        const auto rows = random_rows(rng, batch, width);
        if (kink_margin(c, rows) < kKinkMargin) continue;
        const auto d = random_vector(rng, batch);
        const auto fb = forward_backward(c, rows, d);
        const auto fd = numeric_gradient(c, [&] { return d.dot(c.forward(rows)); });
        EXPECT_LE(relative_error(fb.gradient, fd), 1e-4) << "draw " << draw << " depth " << shape.depth;
        ++draw;
    }
}

TEST(ForwardBackward, DvLossGradientMatchesFiniteDifferences) {
    Rng rng(7);
    for (int draw = 0; draw < 20; ++draw) EXPECT_LE(dv_gradient_check_draw(rng), 1e-4) << "draw " << draw;
}

TEST(ForwardBackward, KinkMarginSeesNegativeUnits) {
    CriticShape shape;
    shape.depth = 2;
    shape.min_hidden = 2;
    CriticNetwork c(2, shape, 1);
    c.parameters().setZero();
    c.weight(0)(0, 0) = 1.0;
    Eigen::MatrixXd rows(2, 2);
    rows << -0.5, 0.0, 2.0, 0.0;
    EXPECT_DOUBLE_EQ(kink_margin(c, rows), 0.0); // unit 1 is exactly at the kink
    c.bias(0)[1] = -0.25;
    EXPECT_NEAR(kink_margin(c, rows), 0.25, 1e-12);
}

TEST(DvBound, ConstantCriticGivesZero) {
    Eigen::VectorXd zeros = Eigen::VectorXd::Zero(5);
    EXPECT_DOUBLE_EQ(dv_bound_from_outputs(zeros, zeros), 0.0);
    Eigen::VectorXd c = Eigen::VectorXd::Constant(5, 3.7);
    EXPECT_NEAR(dv_bound_from_outputs(c, c), 0.0, 1e-15);

    CriticShape shape;
    shape.depth = 2;
    CriticNetwork net(4, shape, 1);
    net.parameters().setZero();
    net.bias(1)[0] = -12.0;
    Rng rng(1);
    EXPECT_NEAR(dv_bound(net, random_rows(rng, 9, 4), random_rows(rng, 9, 4)), 0.0, 1e-15);
}

TEST(DvBound, HandArithmeticExample) {
    Eigen::Vector2d joint(1.0, 1.0), marginal(0.0, 0.0);
    EXPECT_DOUBLE_EQ(dv_bound_from_outputs(joint, marginal), 1.0);
}

TEST(DvBound, StableForLargeOutputs) {
    Eigen::Vector2d joint(1000.0, 1000.0), marginal(999.0, 999.0);
    EXPECT_DOUBLE_EQ(dv_bound_from_outputs(joint, marginal), 1.0);
    Eigen::Vector2d bad(-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity());
    EXPECT_THROW(dv_bound_from_outputs(joint, bad), Error);
    Eigen::Vector2d nan(std::nan(""), 0.0);
    EXPECT_THROW(dv_bound_from_outputs(nan, marginal), Error);
}

TEST(DvBound, RowCountMismatchThrows) {
    CriticNetwork c(4, CriticShape{}, 1);
    EXPECT_THROW(dv_bound(c, Eigen::MatrixXd::Zero(3, 4), Eigen::MatrixXd::Zero(4, 4)), InvalidArgument);
}

TEST(DvBound, InvariantUnderJointRowPermutation) {
    Rng rng(5);
    CriticNetwork c(6, CriticShape{}, 8);
    const auto joint = random_rows(rng, 50, 6);
    const auto marginal = random_rows(rng, 50, 6);
    std::vector<Eigen::Index> perm(50);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    rng.shuffle(std::span<Eigen::Index>(perm));
    Eigen::MatrixXd shuffled(50, 6);
    for (Eigen::Index i = 0; i < 50; ++i) shuffled.row(i) = joint.row(perm[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(dv_bound(c, joint, marginal), dv_bound(c, shuffled, marginal), 1e-12);
}

TEST(DvBound, OutputGradientSumsToZero) {
    Rng rng(4);
    const auto j = random_vector(rng, 10);
    const auto m = random_vector(rng, 10);
    const auto g = dv_loss_output_gradient(j, m);
    EXPECT_NEAR(g.sum(), 0.0, 1e-12);
    EXPECT_TRUE((g.tail(10).array() > 0.0).all());
}
