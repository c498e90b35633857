#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "ie/core/csv.hpp"
#include "ie/oracle/parity.hpp"

using namespace ie;

namespace {

BitState permute_bits(BitState s, const std::vector<std::size_t>& perm) {
    BitState out = 0;
    for (std::size_t t = 0; t < perm.size(); ++t)
        if ((s >> t) & 1U) out |= BitState{1} << perm[t];
    return out;
}

// Plug-in MI of two binary sequences.
double empirical_mi(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    Eigen::Matrix2d counts = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < a.size(); ++i) counts(a[i], b[i]) += 1.0;
    return mutual_information_bits(counts);
}

} // namespace

TEST(ParityBit, EvenSumIsOne) {
    EXPECT_EQ(parity_bit(0b000, 3), 1);
    EXPECT_EQ(parity_bit(0b011, 3), 1);
    EXPECT_EQ(parity_bit(0b001, 3), 0);
    EXPECT_EQ(parity_bit(0b111, 3), 0);
    EXPECT_EQ(parity_bit(0b100, 2), 1); // bits beyond the prefix are ignored
}

TEST(ParityDynamics, Validation) {
    EXPECT_THROW((ParityDynamics{0, 0.5}.validate()), InvalidArgument);
    EXPECT_THROW((ParityDynamics{3, -0.1}.validate()), InvalidArgument);
    EXPECT_THROW((ParityDynamics{3, 1.1}.validate()), InvalidArgument);
    EXPECT_NO_THROW((ParityDynamics{1, 0.0}.validate()));
}

TEST(StepDistribution, ThreeTokensFromAllZeros) {
    const double g = 0.8;
    const auto p = step_distribution({3, g}, 0b000);
    ASSERT_EQ(p.size(), 8u);
    for (BitState out : {0b000u, 0b011u, 0b101u, 0b110u}) EXPECT_DOUBLE_EQ(p[out], g / 4);
    for (BitState out : {0b001u, 0b010u, 0b100u, 0b111u}) EXPECT_DOUBLE_EQ(p[out], (1 - g) / 4);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-15);
}

TEST(StepDistribution, FullFidelityPutsNoMassOnOddOutputs) {
    const auto p = step_distribution({3, 1.0}, 0b000);
    for (BitState out = 0; out < 8; ++out)
        if (parity_bit(out, 3) == 0) EXPECT_EQ(p[out], 0.0);
}

TEST(StepDistribution, HalfFidelityIsUniform) {
    for (std::size_t T : {1u, 2u, 5u}) {
        const auto p = step_distribution({T, 0.5}, 1);
        for (double v : p) EXPECT_DOUBLE_EQ(v, 1.0 / static_cast<double>(p.size()));
    }
}

TEST(StepDistribution, SumsToOneAndRejectsLargeT) {
    for (BitState in : {0u, 5u, 31u}) {
        const auto p = step_distribution({5, 0.3}, in);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-14);
    }
    EXPECT_THROW(step_distribution({21, 0.5}, 0), InvalidArgument);
    EXPECT_THROW(step_distribution({3, 0.5}, 8), InvalidArgument);
}

TEST(StepDistribution, MacroMarginalSupervenesOnParityOnly) {
    const ParityDynamics dyn{4, 0.7};
    std::vector<std::size_t> perm{2, 0, 3, 1};
    for (BitState in = 0; in < 16; ++in) {
        const auto a = step_distribution(dyn, in);
        const auto b = step_distribution(dyn, permute_bits(in, perm));
        double ma = 0, mb = 0;
        for (BitState out = 0; out < 16; ++out) {
            if (parity_bit(out, 4)) {
                ma += a[out];
                mb += b[out];
            }
        }
        EXPECT_DOUBLE_EQ(ma, mb);
    }
}

TEST(ExactMacroMi, KnownValues) {
    EXPECT_NEAR(exact_macro_mi({3, 0.5}), 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(exact_macro_mi({3, 1.0}), 1.0);
    EXPECT_DOUBLE_EQ(exact_macro_mi({3, 0.0}), 1.0);
    // Frozen from the enumeration: 1 - H_b(0.9).
    EXPECT_NEAR(exact_macro_mi({3, 0.9}), 0.5310044064107188, 1e-12);
    EXPECT_NEAR(exact_macro_mi({3, 0.9}), 0.531, 5e-4);
}

TEST(ExactMacroMi, MatchesBinaryEntropyFormula) {
    for (std::size_t T : {1u, 2u, 3u, 6u})
        for (double g = 0.0; g <= 1.0; g += 0.05)
            EXPECT_NEAR(exact_macro_mi({T, g}), 1.0 - binary_entropy_bits(g), 1e-12) << "T=" << T << " g=" << g;
}

TEST(ExactMacroMi, ChannelSymmetry) {
    for (double g = 0.0; g <= 0.5; g += 0.0625) EXPECT_NEAR(exact_macro_mi({3, g}), exact_macro_mi({3, 1 - g}), 1e-12);
}

TEST(ExactMacroMi, JointIsBinarySymmetricChannel) {
    const auto j = macro_joint({3, 0.9});
    EXPECT_NEAR(j(0, 0), 0.45, 1e-15);
    EXPECT_NEAR(j(1, 1), 0.45, 1e-15);
    EXPECT_NEAR(j(0, 1), 0.05, 1e-15);
    EXPECT_NEAR(j(1, 0), 0.05, 1e-15);
}

TEST(ExactMicroMi, ZeroForEveryFidelityWhenTAtLeastTwo) {
    for (std::size_t T : {2u, 3u, 5u, 8u})
        for (double g : {0.0, 0.1, 0.5, 0.7, 0.9, 1.0}) {
            EXPECT_EQ(exact_micro_mi({T, g}), 0.0) << "T=" << T << " g=" << g;
            for (double v : exact_micro_mi_per_token({T, g})) EXPECT_EQ(v, 0.0);
        }
}

TEST(ExactMicroMi, SingleTokenIsItsOwnParity) {
    // With T = 1 the lone token determines the macro bit, so micro = macro.
    for (double g : {0.5, 0.7, 0.9, 1.0}) EXPECT_NEAR(exact_micro_mi({1, g}), exact_macro_mi({1, g}), 1e-15);
}

TEST(ExactEmergence, PeaksAtDeterministicFidelity) {
    EXPECT_DOUBLE_EQ(exact_emergence({3, 1.0}), 1.0);
    EXPECT_DOUBLE_EQ(exact_emergence({3, 0.0}), 1.0);
    EXPECT_NEAR(exact_emergence({3, 0.5}), 0.0, 1e-15);
    for (double g = 0.05; g < 1.0; g += 0.05) {
        EXPECT_GE(exact_emergence({3, g}), -1e-15);
        EXPECT_LE(exact_emergence({3, g}), 1.0);
    }
}

TEST(ExactEnumeration, RejectsLargeT) {
    EXPECT_THROW(exact_macro_mi({kMaxEnumerableTokens + 1, 0.5}), InvalidArgument);
}

TEST(OracleTable, CsvRows) {
    std::ostringstream os;
    write_oracle_table(os, 3, {0.5, 0.9, 1.0});
    std::istringstream is(os.str());
    const auto t = read_csv(is);
    EXPECT_EQ(t.header, (std::vector<std::string>{"gamma", "macro_bits", "micro_bits", "E_bits"}));
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.rows[1][0], "0.9");
    EXPECT_NEAR(std::stod(t.rows[1][1]), 0.531, 5e-4);
    EXPECT_EQ(std::stod(t.rows[1][2]), 0.0);
    EXPECT_EQ(std::stod(t.rows[2][3]), 1.0);
}

TEST(SampleTrajectories, FullFidelityAlwaysPreserves) {
    const auto tr = sample_trajectories({3, 1.0}, 5000, 1);
    EXPECT_EQ(tr.preservation_frequency(), 1.0);
    const auto flip = sample_trajectories({3, 0.0}, 5000, 1);
    EXPECT_EQ(flip.preservation_frequency(), 0.0);
}

TEST(SampleTrajectories, FrequencyWithinBinomialBand) {
    const auto tr = sample_trajectories({3, 0.9}, 100000, 2);
    EXPECT_NEAR(tr.preservation_frequency(), 0.9, 0.003);
}

TEST(SampleTrajectories, DeterministicGivenSeed) {
    const auto a = sample_trajectories({4, 0.7}, 1000, 3);
    const auto b = sample_trajectories({4, 0.7}, 1000, 3);
    EXPECT_EQ(a.states_in, b.states_in);
    EXPECT_EQ(a.states_out, b.states_out);
    const auto c = sample_trajectories({4, 0.7}, 1000, 4);
    EXPECT_NE(a.states_in, c.states_in);
}

TEST(SampleTrajectories, MacroBitsMatchStates) {
    const auto tr = sample_trajectories({3, 0.6}, 2000, 5);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        EXPECT_LT(tr.states_in[i], 8u);
        EXPECT_LT(tr.states_out[i], 8u);
        EXPECT_EQ(tr.macro_in[i], parity_bit(tr.states_in[i], 3));
        EXPECT_EQ(tr.macro_out[i], parity_bit(tr.states_out[i], 3));
    }
}

TEST(SampleTrajectories, OutputsUniformWithinParityClass) {
    const auto tr = sample_trajectories({3, 0.9}, 80000, 6);
    std::vector<double> freq(8, 0.0);
    for (auto s : tr.states_out) freq[s] += 1.0 / static_cast<double>(tr.size());
    // Uniform inputs make every output state equally likely overall.
    for (double f : freq) EXPECT_NEAR(f, 0.125, 0.006);
}

TEST(SampleTrajectories, EmpiricalMiNearExact) {
    for (double g : {0.5, 0.7, 0.9, 1.0}) {
        const auto tr = sample_trajectories({3, g}, 100000, 7);
        EXPECT_NEAR(empirical_mi(tr.macro_in, tr.macro_out), exact_macro_mi({3, g}), 0.01) << g;
    }
}

TEST(BitEmbedding, JitterLeavesDiscretisationIntact) {
    const ParityDynamics dyn{3, 0.9};
    const auto tr = sample_trajectories(dyn, 20000, 8);
    const BitEmbedding emb(3, 8, 0.01, 9);
    const auto in = emb.embed(tr.macro_in, 2, 0);
    const auto out = emb.embed(tr.macro_out, 2, 1);
    EXPECT_EQ(emb.decode(in, 2), tr.macro_in);
    EXPECT_EQ(emb.decode(out, 2), tr.macro_out);
    EXPECT_NEAR(empirical_mi(emb.decode(in, 2), emb.decode(out, 2)), empirical_mi(tr.macro_in, tr.macro_out), 1e-15);
}

TEST(ParityStores, ShapeAndContent) {
    const ParityDynamics dyn{3, 0.9};
    const auto tr = sample_trajectories(dyn, 500, 10);
    const auto st = parity_stores(dyn, tr, 8, 0.01, 11);
    EXPECT_EQ(st.macro.dims(), (StoreDims{500, 2, 3, 8}));
    EXPECT_EQ(st.macro.mode(), StoreMode::macro);
    EXPECT_EQ(st.micro.mode(), StoreMode::micro);
    EXPECT_TRUE(validate_store(st.macro).ok());
    EXPECT_TRUE(validate_store(st.micro).ok());
    // The last macro position carries the full parity bit of each layer.
    const BitEmbedding macro_embed(3, 8, 0.01, derive_seed(11, {0}));
    EXPECT_EQ(macro_embed.decode(st.macro.slice(0, 2), 2), tr.macro_in);
    EXPECT_EQ(macro_embed.decode(st.macro.slice(1, 2), 2), tr.macro_out);
    const auto again = parity_stores(dyn, tr, 8, 0.01, 11);
    EXPECT_TRUE(again.macro == st.macro);
    EXPECT_TRUE(again.micro == st.micro);
}
