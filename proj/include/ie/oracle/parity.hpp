#pragma once

// Parity dynamics over T binary tokens: the output state keeps the input's
// parity with probability gamma and is otherwise uniform within its parity
// class. The parity bit is a macro variable with a known channel, while each
// individual token carries no information across the step (for T >= 2).

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ie/core/csv.hpp"
#include "ie/core/error.hpp"
#include "ie/core/random.hpp"
#include "ie/core/types.hpp"

namespace ie {

// Bit t of a state is token t.
using BitState = std::uint32_t;

inline constexpr std::size_t kMaxEnumerableTokens = 12;

struct ParityDynamics {
    std::size_t tokens = 3;
    double fidelity = 1.0; // gamma

    void validate() const {
        if (tokens < 1) throw InvalidArgument("parity dynamics needs at least one token");
        if (!(fidelity >= 0.0 && fidelity <= 1.0)) throw InvalidArgument("fidelity must lie in [0, 1]");
        if (tokens > 31) throw InvalidArgument("at most 31 tokens are supported");
    }
};

// Macro bit of the first `count` tokens: 1 when their sum is even, 0 when odd.
inline int parity_bit(BitState s, std::size_t count) {
    const BitState mask = count >= 32 ? ~BitState{0} : ((BitState{1} << count) - 1);
    return std::popcount(s & mask) % 2 == 0 ? 1 : 0;
}

inline double binary_entropy_bits(double p) {
    auto term = [](double q) { return q > 0.0 ? -q * std::log2(q) : 0.0; };
    return term(p) + term(1.0 - p);
}

// MI in bits of a joint table (rows: first variable). The table is normalised
// first, so cells that are exact products of their marginals give exactly 0.
inline double mutual_information_bits(const Eigen::Ref<const Eigen::MatrixXd>& table) {
    const double total = table.sum();
    if (!(total > 0.0)) throw InvalidArgument("joint table has no mass");
    const Eigen::MatrixXd joint = table / total;
    const Eigen::VectorXd pa = joint.rowwise().sum();
    const Eigen::RowVectorXd pb = joint.colwise().sum();
    double mi = 0.0;
    for (Eigen::Index i = 0; i < joint.rows(); ++i)
        for (Eigen::Index j = 0; j < joint.cols(); ++j) {
            const double p = joint(i, j);
            if (p > 0.0) mi += p * std::log2(p / (pa[i] * pb[j]));
        }
    return mi;
}

// p(output | input) for every output state, indexed by the output's bits.
inline std::vector<double> step_distribution(const ParityDynamics& dyn, BitState input) {
    dyn.validate();
    if (dyn.tokens > 20) throw InvalidArgument("T = " + std::to_string(dyn.tokens) + " is too large to enumerate");
    const std::size_t n = std::size_t{1} << dyn.tokens;
    if (input >= n) throw InvalidArgument("input state has bits beyond T");
    const double per_class = static_cast<double>(n / 2);
    const int in_parity = parity_bit(input, dyn.tokens);
    std::vector<double> p(n);
    for (std::size_t out = 0; out < n; ++out)
        p[out] = (parity_bit(static_cast<BitState>(out), dyn.tokens) == in_parity ? dyn.fidelity
                                                                                   : 1.0 - dyn.fidelity) /
                 per_class;
    return p;
}

namespace detail {

// Transition counts for one 2x2 joint: how many (input, output) pairs land in
// each cell with the parity preserved or flipped. Every input is equally
// likely and every output within a parity class carries the same mass, so
// the cell probability is (kept * gamma + flipped * (1 - gamma)) / norm.
struct CellCounts {
    std::uint64_t kept[2][2] = {};
    std::uint64_t flipped[2][2] = {};

    Eigen::Matrix2d joint(const ParityDynamics& dyn) const {
        const double norm = std::ldexp(1.0, static_cast<int>(2 * dyn.tokens - 1));
        Eigen::Matrix2d j;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                j(a, b) = (static_cast<double>(kept[a][b]) * dyn.fidelity +
                           static_cast<double>(flipped[a][b]) * (1.0 - dyn.fidelity)) /
                          norm;
        return j;
    }
};

// Visits every (input, output, parity kept) triple.
template <typename Visit>
void enumerate_transitions(const ParityDynamics& dyn, Visit&& visit) {
    dyn.validate();
    if (dyn.tokens > kMaxEnumerableTokens)
        throw InvalidArgument("T = " + std::to_string(dyn.tokens) + " is too large to enumerate");
    const BitState n = BitState{1} << dyn.tokens;
    for (BitState in = 0; in < n; ++in)
        for (BitState out = 0; out < n; ++out)
            visit(in, out, parity_bit(in, dyn.tokens) == parity_bit(out, dyn.tokens));
}

inline void tally(CellCounts& c, int a, int b, bool kept) { ++(kept ? c.kept : c.flipped)[a][b]; }

} // namespace detail

// 2x2 joint of (macro bit at l, macro bit at l+1), by full enumeration.
inline Eigen::Matrix2d macro_joint(const ParityDynamics& dyn) {
    detail::CellCounts counts;
    detail::enumerate_transitions(dyn, [&](BitState in, BitState out, bool kept) {
        detail::tally(counts, parity_bit(in, dyn.tokens), parity_bit(out, dyn.tokens), kept);
    });
    return counts.joint(dyn);
}

inline double exact_macro_mi(const ParityDynamics& dyn) { return mutual_information_bits(macro_joint(dyn)); }

// Per-token MI between token t at l and token t at l+1, by full enumeration.
inline std::vector<double> exact_micro_mi_per_token(const ParityDynamics& dyn) {
    std::vector<detail::CellCounts> counts(dyn.tokens);
    detail::enumerate_transitions(dyn, [&](BitState in, BitState out, bool kept) {
        for (std::size_t t = 0; t < dyn.tokens; ++t)
            detail::tally(counts[t], static_cast<int>((in >> t) & 1U), static_cast<int>((out >> t) & 1U), kept);
    });
    std::vector<double> mi;
    for (const auto& c : counts) mi.push_back(mutual_information_bits(c.joint(dyn)));
    return mi;
}

// Mean per-token micro MI, the aggregate used by the IE definition.
inline double exact_micro_mi(const ParityDynamics& dyn) {
    const auto per_token = exact_micro_mi_per_token(dyn);
    double sum = 0.0;
    for (double v : per_token) sum += v;
    return sum / static_cast<double>(per_token.size());
}

inline double exact_emergence(const ParityDynamics& dyn) { return exact_macro_mi(dyn) - exact_micro_mi(dyn); }

// Rows of (gamma, macro_bits, micro_bits, E_bits) for a grid of fidelities.
inline void write_oracle_table(std::ostream& os, std::size_t tokens, const std::vector<double>& gammas) {
    write_csv_row(os, {"gamma", "macro_bits", "micro_bits", "E_bits"});
    for (double g : gammas) {
        const ParityDynamics dyn{tokens, g};
        const double macro = exact_macro_mi(dyn);
        const double micro = exact_micro_mi(dyn);
        write_csv_row(os, {format_real(g, 6), format_real(macro, 10), format_real(micro, 10),
                           format_real(macro - micro, 10)});
    }
}

struct ParityTrajectories {
    std::vector<BitState> states_in;
    std::vector<BitState> states_out;
    std::vector<std::uint8_t> macro_in;
    std::vector<std::uint8_t> macro_out;

    std::size_t size() const { return states_in.size(); }

    double preservation_frequency() const {
        std::size_t kept = 0;
        for (std::size_t i = 0; i < size(); ++i) kept += macro_in[i] == macro_out[i];
        return static_cast<double>(kept) / static_cast<double>(size());
    }
};

// Draws S uniform input states and one parity step from each.
inline ParityTrajectories sample_trajectories(const ParityDynamics& dyn, std::size_t samples, std::uint64_t seed) {
    dyn.validate();
    if (samples < 1) throw InvalidArgument("need at least one sample");
    Rng rng(seed);
    const std::uint64_t n = std::uint64_t{1} << dyn.tokens;
    const std::uint64_t free_states = n / 2; // choices for tokens 0..T-2
    ParityTrajectories tr;
    tr.states_in.reserve(samples);
    tr.states_out.reserve(samples);
    for (std::size_t s = 0; s < samples; ++s) {
        const auto in = static_cast<BitState>(rng.below(n));
        const int target = rng.bernoulli(dyn.fidelity) ? parity_bit(in, dyn.tokens) : 1 - parity_bit(in, dyn.tokens);
        auto out = static_cast<BitState>(free_states > 1 ? rng.below(free_states) : 0);
        if (parity_bit(out, dyn.tokens) != target) out ^= BitState{1} << (dyn.tokens - 1);
        tr.states_in.push_back(in);
        tr.states_out.push_back(out);
        tr.macro_in.push_back(static_cast<std::uint8_t>(parity_bit(in, dyn.tokens)));
        tr.macro_out.push_back(static_cast<std::uint8_t>(parity_bit(out, dyn.tokens)));
    }
    return tr;
}

// Fixed random linear embedding of bits into R^D: bit b at token position t
// maps to (2b - 1) * u_t plus N(0, noise^2) jitter per coordinate.
class BitEmbedding {
public:
    BitEmbedding(std::size_t positions, std::size_t width, double noise, std::uint64_t seed)
        : directions_(static_cast<Eigen::Index>(positions), static_cast<Eigen::Index>(width)), noise_(noise),
          seed_(seed) {
        if (width == 0) throw InvalidArgument("embedding width must be positive");
        Rng rng(derive_seed(seed, {0}));
        for (Eigen::Index p = 0; p < directions_.rows(); ++p)
            for (Eigen::Index d = 0; d < directions_.cols(); ++d) directions_(p, d) = rng.normal();
    }

    std::size_t width() const { return static_cast<std::size_t>(directions_.cols()); }
    double noise() const { return noise_; }
    const Eigen::MatrixXd& directions() const { return directions_; }

    // Embeds one bit per sample; `stream` selects an independent jitter draw.
    Slice embed(const std::vector<std::uint8_t>& bits, std::size_t position, std::uint64_t stream) const {
        Rng rng(derive_seed(seed_, {1, stream}));
        Slice out(static_cast<Eigen::Index>(bits.size()), directions_.cols());
        const auto dir = directions_.row(static_cast<Eigen::Index>(position));
        for (std::size_t s = 0; s < bits.size(); ++s) {
            const double sign = bits[s] ? 1.0 : -1.0;
            for (Eigen::Index d = 0; d < out.cols(); ++d)
                out(static_cast<Eigen::Index>(s), d) = static_cast<float>(sign * dir[d] + noise_ * rng.normal());
        }
        return out;
    }

    // Recovers bits from embeddings by the sign of the projection.
    std::vector<std::uint8_t> decode(const Slice& rows, std::size_t position) const {
        const Eigen::VectorXd dir = directions_.row(static_cast<Eigen::Index>(position)).transpose();
        std::vector<std::uint8_t> bits;
        for (Eigen::Index s = 0; s < rows.rows(); ++s)
            bits.push_back(rows.row(s).cast<double>().dot(dir) > 0.0 ? 1 : 0);
        return bits;
    }

private:
    Eigen::MatrixXd directions_;
    double noise_;
    std::uint64_t seed_;
};

struct ParityStores {
    RepresentationStore macro;
    RepresentationStore micro;
};

// Two-layer stores (l, l+1) over T token positions. Macro slice (l, t) embeds
// the parity of tokens 0..t, so position T-1 carries the full macro bit;
// micro slice (l, t) embeds token t alone.
inline ParityStores parity_stores(const ParityDynamics& dyn, const ParityTrajectories& tr, std::size_t width,
                                  double noise, std::uint64_t seed) {
    const StoreDims dims{tr.size(), 2, dyn.tokens, width};
    const std::string source = "parity(T=" + std::to_string(dyn.tokens) + ",gamma=" + std::to_string(dyn.fidelity) +
                               ",seed=" + std::to_string(seed) + ")";
    ParityStores out{RepresentationStore(dims, StoreMode::macro, source),
                     RepresentationStore(dims, StoreMode::micro, source)};
    const BitEmbedding macro_embed(dyn.tokens, width, noise, derive_seed(seed, {0}));
    const BitEmbedding micro_embed(dyn.tokens, width, noise, derive_seed(seed, {1}));
    for (std::size_t layer = 0; layer < 2; ++layer) {
        const auto& states = layer == 0 ? tr.states_in : tr.states_out;
        for (std::size_t t = 0; t < dyn.tokens; ++t) {
            std::vector<std::uint8_t> prefix, token;
            prefix.reserve(states.size());
            token.reserve(states.size());
            for (BitState s : states) {
                prefix.push_back(static_cast<std::uint8_t>(parity_bit(s, t + 1)));
                token.push_back(static_cast<std::uint8_t>((s >> t) & 1U));
            }
            const std::uint64_t stream = layer * dyn.tokens + t;
            out.macro.set_slice(layer, t, macro_embed.embed(prefix, t, stream));
            out.micro.set_slice(layer, t, micro_embed.embed(token, t, stream));
        }
    }
    return out;
}

} // namespace ie
