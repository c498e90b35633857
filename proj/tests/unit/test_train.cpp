#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ie/core/random.hpp"
#include "ie/mine/train.hpp"

using namespace ie;

namespace {

struct Pairs {
    RowMatrixXd x, y;
};

Pairs gaussian_pairs(double rho, Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    Pairs p{RowMatrixXd(n, 1), RowMatrixXd(n, 1)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = rng.normal();
        const double b = rng.normal();
        p.x(i, 0) = a;
        p.y(i, 0) = rho * a + std::sqrt(1.0 - rho * rho) * b;
    }
    return p;
}

TrainConfig quick_config(std::size_t epochs = 150) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.lr_start = 3e-3;
    cfg.lr_end = 1e-6;
    cfg.seed = 17;
    return cfg;
}

} // namespace

TEST(TrainConfig, DefaultsFollowTheReferenceSchedule) {
    const TrainConfig cfg;
    EXPECT_EQ(cfg.batch_size, 0u);
    EXPECT_EQ(cfg.lr_start, 1e-4);
    EXPECT_EQ(cfg.lr_end, 1e-8);
    EXPECT_EQ(cfg.epochs, 10000u);
    EXPECT_EQ(cfg.critic.depth, 10u);
    EXPECT_EQ(cfg.critic.leaky_slope, 0.01);
    EXPECT_EQ(cfg.adam.beta1, 0.9);
    EXPECT_EQ(cfg.adam.beta2, 0.999);
    EXPECT_EQ(cfg.adam.epsilon, 1e-8);
}

TEST(TrainConfig, PolynomialDecay) {
    TrainConfig cfg;
    EXPECT_DOUBLE_EQ(cfg.learning_rate(0), 1e-4);
    EXPECT_DOUBLE_EQ(cfg.learning_rate(5000), 1e-8 + (1e-4 - 1e-8) * 0.25);
    EXPECT_DOUBLE_EQ(cfg.learning_rate(10000), 1e-8);
    for (std::size_t e = 1; e < 10000; e += 997) EXPECT_LT(cfg.learning_rate(e), cfg.learning_rate(e - 1));
}

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    cfg.lr_end = cfg.lr_start;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg = TrainConfig{};
    cfg.lr_end = 0.0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
    cfg = TrainConfig{};
    cfg.early_stop_patience = 0;
    EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(TrainConfig, JsonRoundtripAndPartialOverride) {
    TrainConfig cfg = quick_config();
    cfg.early_stop_patience = 40;
    cfg.critic.min_hidden = 4;
    EXPECT_EQ(Json::parse(Json(cfg).dump()).get<TrainConfig>(), cfg);

    const auto partial = Json::parse(R"({"epochs": 7, "lr_start": 0.01})").get<TrainConfig>();
    EXPECT_EQ(partial.epochs, 7u);
    EXPECT_EQ(partial.lr_start, 0.01);
    EXPECT_EQ(partial.lr_end, TrainConfig{}.lr_end);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    AdamOptimizer adam(3, AdamConfig{});
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd g(3);
    g << 2.0, -0.5, 0.0;
    adam.step(theta, g, 0.1);
    EXPECT_NEAR(theta[0], -0.1, 1e-8);
    EXPECT_NEAR(theta[1], 0.1, 1e-8);
    EXPECT_EQ(theta[2], 0.0);
}

TEST(TrainMi, RejectsTooFewSamples) {
    RowMatrixXd one = RowMatrixXd::Zero(1, 1);
    EXPECT_THROW(train_mi(one, one, quick_config()), InvalidArgument);
}

TEST(TrainMi, RejectsMisalignedRows) {
    RowMatrixXd a = RowMatrixXd::Zero(10, 1), b = RowMatrixXd::Zero(9, 1);
    EXPECT_THROW(train_mi(a, b, quick_config()), InvalidArgument);
}

TEST(TrainMi, RejectsMinibatches) {
    const auto p = gaussian_pairs(0.5, 100, 1);
    auto cfg = quick_config();
    cfg.batch_size = 50;
    EXPECT_THROW(train_mi(p.x, p.y, cfg), InvalidArgument);
    cfg.batch_size = 100;
    cfg.epochs = 2;
    EXPECT_NO_THROW(train_mi(p.x, p.y, cfg));
}

TEST(TrainMi, DivergenceReportsEpoch) {
    const auto p = gaussian_pairs(0.9, 200, 2);
    auto cfg = quick_config(50);
    cfg.lr_start = 1e200;
    cfg.lr_end = 1e199;
    try {
        train_mi(p.x, p.y, cfg);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_GE(e.epoch(), 1u);
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(TrainMi, BitwiseReproducible) {
    const auto p = gaussian_pairs(0.8, 2000, 3);
    std::vector<double> a, b;
    const auto ea = train_mi(p.x, p.y, quick_config(60), [&](std::size_t, double v, double) { a.push_back(v); });
    const auto eb = train_mi(p.x, p.y, quick_config(60), [&](std::size_t, double v, double) { b.push_back(v); });
    EXPECT_EQ(ea, eb);
    EXPECT_EQ(a, b);
}

TEST(TrainMi, ValueIsRunningMaxOfBound) {
    const auto p = gaussian_pairs(0.8, 2000, 4);
    std::vector<double> bits;
    const auto est =
        train_mi(p.x, p.y, quick_config(80), [&](std::size_t, double v, double) { bits.push_back(v * kBitsPerNat); });
    ASSERT_EQ(bits.size(), 80u);
    EXPECT_EQ(est.epochs_run, 80u);
    double running = bits[0];
    for (double b : bits) running = std::max(running, b);
    EXPECT_EQ(est.value_bits, running);
    EXPECT_EQ(bits[est.best_epoch], running);
    EXPECT_GE(est.value_bits, bits[0]);
    EXPECT_EQ(est.seed, 17u);
}

TEST(TrainMi, EarlyStopHaltsAfterPatience) {
    const auto p = gaussian_pairs(0.0, 500, 5);
    auto cfg = quick_config(400);
    cfg.early_stop_patience = 5;
    const auto est = train_mi(p.x, p.y, cfg);
    EXPECT_LT(est.epochs_run, 400u);
    EXPECT_EQ(est.epochs_run, est.best_epoch + 6);
}

TEST(TrainMi, RecoversStrongDependenceOnSmallSample) {
    const auto p = gaussian_pairs(0.9, 4000, 6);
    const auto est = train_mi(p.x, p.y, quick_config(300));
    const double truth = -0.5 * std::log2(1.0 - 0.81);
    EXPECT_GT(est.value_bits, 0.75 * truth);
    EXPECT_LT(est.value_bits, truth + 0.25);
}

TEST(TrainMi, InvariantToFeatureScaleWhenStandardized) {
    auto p = gaussian_pairs(0.7, 1000, 8);
    const auto a = train_mi(p.x, p.y, quick_config(40));
    p.x *= 4.0;
    p.y.array() += 3.0;
    const auto b = train_mi(p.x, p.y, quick_config(40));
    EXPECT_NEAR(a.value_bits, b.value_bits, 1e-6);
}
