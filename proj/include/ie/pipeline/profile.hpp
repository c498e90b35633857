#pragma once

// IE profiles from macro and micro MI matrices:
//   E(l, t) = MI_macro(l, t) - m(l)
// where m(l) is the position-0 micro MI (first_entity) or the mean micro MI
// over all positions (position_mean), and Ê(t) is the mean of E(l, t) over
// layer pairs. Means are summed in index order and then divided, so a
// recomputation from persisted estimates reproduces every value exactly.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ie/core/error.hpp"
#include "ie/core/types.hpp"
#include "ie/pipeline/estimate.hpp"

namespace ie {

enum class MicroProtocol { first_entity, position_mean };

inline const char* to_string(MicroProtocol p) {
    return p == MicroProtocol::first_entity ? "first_entity" : "position_mean";
}

inline MicroProtocol parse_micro_protocol(const std::string& s) {
    if (s == "first_entity") return MicroProtocol::first_entity;
    if (s == "position_mean") return MicroProtocol::position_mean;
    throw InvalidArgument("unknown micro protocol '" + s + "' (expected first_entity or position_mean)");
}

inline double ordered_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Population standard deviation about the ordered mean.
inline double population_sd(const std::vector<double>& v) {
    const double m = ordered_mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

inline double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = ordered_mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

namespace detail {

inline void check_ie_shapes(const MIMatrix& macro, const MIMatrix& micro, MicroProtocol p) {
    if (macro.layer_pairs() != micro.layer_pairs())
        throw InvalidArgument("macro has " + std::to_string(macro.layer_pairs()) + " layer pairs, micro has " +
                              std::to_string(micro.layer_pairs()));
    if (micro.tokens() == 0) throw InvalidArgument("micro matrix has no token positions");
    if (p == MicroProtocol::position_mean && micro.tokens() != macro.tokens())
        throw InvalidArgument("position_mean needs micro MI at all " + std::to_string(macro.tokens()) +
                              " positions, micro has " + std::to_string(micro.tokens()));
}

// m(l) from any per-cell value accessor; absent if any needed cell is absent.
template <typename Value>
std::optional<double> micro_aggregate(const MIMatrix& micro, std::size_t l, MicroProtocol p, Value&& value) {
    if (p == MicroProtocol::first_entity) return value(micro, l, 0);
    std::vector<double> v;
    for (std::size_t t = 0; t < micro.tokens(); ++t) {
        const auto x = value(micro, l, t);
        if (!x) return std::nullopt;
        v.push_back(*x);
    }
    return ordered_mean(v);
}

template <typename Value>
std::vector<std::vector<std::optional<double>>> ie_grid(const MIMatrix& macro, const MIMatrix& micro, MicroProtocol p,
                                                        Value&& value) {
    std::vector<std::vector<std::optional<double>>> e(macro.layer_pairs());
    for (std::size_t l = 0; l < macro.layer_pairs(); ++l) {
        const auto agg = micro_aggregate(micro, l, p, value);
        for (std::size_t t = 0; t < macro.tokens(); ++t) {
            const auto ma = value(macro, l, t);
            e[l].push_back(ma && agg ? std::optional<double>(*ma - *agg) : std::nullopt);
        }
    }
    return e;
}

inline std::vector<std::optional<double>> e_hat_of(const std::vector<std::vector<std::optional<double>>>& e,
                                                   std::size_t tokens) {
    std::vector<std::optional<double>> out;
    for (std::size_t t = 0; t < tokens; ++t) {
        std::vector<double> v;
        bool complete = !e.empty();
        for (const auto& row : e) {
            if (!row[t]) {
                complete = false;
                break;
            }
            v.push_back(*row[t]);
        }
        out.push_back(complete ? std::optional<double>(ordered_mean(v)) : std::nullopt);
    }
    return out;
}

inline std::optional<std::size_t> bootstrap_count(const MIMatrix& macro, const MIMatrix& micro) {
    std::optional<std::size_t> b;
    for (const MIMatrix* m : {&macro, &micro})
        for (std::size_t l = 0; l < m->layer_pairs(); ++l)
            for (std::size_t t = 0; t < m->tokens(); ++t) {
                const auto& c = m->cell(l, t);
                if (!c.estimate || c.bootstrap_bits.empty()) continue;
                if (b && *b != c.bootstrap_bits.size()) return std::nullopt;
                b = c.bootstrap_bits.size();
            }
    return b;
}

} // namespace detail

inline std::vector<ShotStat> shot_stats(const MIMatrix& macro, const MIMatrix& micro, MicroProtocol p,
                                        const std::vector<std::optional<double>>& e_hat, std::size_t shot_length) {
    const std::size_t T = e_hat.size();
    if (shot_length == 0 || T % shot_length != 0)
        throw InvalidArgument("T=" + std::to_string(T) + " is not a multiple of shot length " +
                              std::to_string(shot_length));
    // Ê(t) under bootstrap resample b, for every b.
    std::vector<std::vector<std::optional<double>>> boot;
    if (const auto B = detail::bootstrap_count(macro, micro)) {
        for (std::size_t b = 0; b < *B; ++b) {
            auto value = [b](const MIMatrix& m, std::size_t l, std::size_t t) -> std::optional<double> {
                const auto& c = m.cell(l, t);
                if (!c.estimate || c.bootstrap_bits.size() <= b) return std::nullopt;
                return c.bootstrap_bits[b];
            };
            boot.push_back(detail::e_hat_of(detail::ie_grid(macro, micro, p, value), T));
        }
    }
    std::vector<ShotStat> out;
    for (std::size_t s = 0; s < T / shot_length; ++s) {
        std::vector<double> v;
        for (std::size_t t = s * shot_length; t < (s + 1) * shot_length; ++t)
            if (e_hat[t]) v.push_back(*e_hat[t]);
        if (v.size() != shot_length) continue; // a gap in this shot
        ShotStat st;
        st.shot = s + 1;
        st.mean = ordered_mean(v);
        st.sd_position = population_sd(v);
        std::vector<double> means;
        for (const auto& eh : boot) {
            std::vector<double> w;
            for (std::size_t t = s * shot_length; t < (s + 1) * shot_length; ++t)
                if (eh[t]) w.push_back(*eh[t]);
            if (w.size() == shot_length) means.push_back(ordered_mean(w));
        }
        if (!boot.empty() && means.size() == boot.size()) st.sd_bootstrap = sample_sd(means);
        st.sd = st.sd_bootstrap ? std::sqrt(st.sd_position * st.sd_position + *st.sd_bootstrap * *st.sd_bootstrap)
                                : st.sd_position;
        out.push_back(st);
    }
    return out;
}

inline IEProfile compute_ie(const MIMatrix& macro, const MIMatrix& micro, MicroProtocol p,
                            std::optional<std::size_t> shot_length = std::nullopt) {
    detail::check_ie_shapes(macro, micro, p);
    auto value = [](const MIMatrix& m, std::size_t l, std::size_t t) { return m.bits(l, t); };
    IEProfile prof;
    prof.e = detail::ie_grid(macro, micro, p, value);
    prof.e_hat = detail::e_hat_of(prof.e, macro.tokens());
    if (shot_length) prof.shot_stats = shot_stats(macro, micro, p, prof.e_hat, *shot_length);
    return prof;
}

struct ShotRow {
    ShotStat stat;
    std::optional<double> delta; // vs. the previous shot
};

// Sign of a delta: "+" increase, "-" decrease, "0" unchanged, "" for the first shot.
inline std::string delta_sign(const std::optional<double>& d) {
    if (!d) return "";
    return *d > 0 ? "+" : *d < 0 ? "-" : "0";
}

inline std::vector<ShotRow> shot_report(const IEProfile& profile) {
    if (profile.shot_stats.empty()) throw InvalidArgument("profile has no shot statistics (not an ICL corpus?)");
    std::vector<ShotRow> rows;
    for (const auto& s : profile.shot_stats) {
        ShotRow r{s, std::nullopt};
        if (!rows.empty() && rows.back().stat.shot + 1 == s.shot) r.delta = s.mean - rows.back().stat.mean;
        rows.push_back(r);
    }
    return rows;
}

struct LabeledProfile {
    std::string text;      // who produced the text, e.g. "Human"
    std::string estimator; // model that produced the representations
    IEProfile profile;

    std::string label() const { return text + "+" + estimator; }
};

struct ComparisonRow {
    std::string label;
    std::vector<std::optional<double>> e_hat;
    std::optional<double> mean, sd, delta_mean; // only with two or more profiles
};

inline std::vector<ComparisonRow> compare_sources(const std::vector<LabeledProfile>& profiles) {
    if (profiles.empty()) throw InvalidArgument("no profiles to compare");
    const std::size_t T = profiles.front().profile.tokens();
    for (const auto& p : profiles)
        if (p.profile.tokens() != T)
            throw InvalidArgument("profile '" + p.label() + "' has " + std::to_string(p.profile.tokens()) +
                                  " tokens, expected " + std::to_string(T));
    std::vector<ComparisonRow> rows;
    for (const auto& p : profiles) {
        ComparisonRow r{p.label(), p.profile.e_hat, std::nullopt, std::nullopt, std::nullopt};
        if (profiles.size() >= 2) {
            std::vector<double> v;
            for (const auto& x : r.e_hat)
                if (x) v.push_back(*x);
            if (v.size() == T && T > 0) {
                r.mean = ordered_mean(v);
                r.sd = population_sd(v);
            }
            if (r.mean && !rows.empty() && rows.front().mean) r.delta_mean = *r.mean - *rows.front().mean;
            if (r.mean && rows.empty()) r.delta_mean = 0.0;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace ie
