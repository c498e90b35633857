#pragma once

// Shared domain types: corpus shape, representation stores, MI estimates and
// IE profiles, plus their JSON forms.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ie/core/error.hpp"

namespace ie {

using Json = nlohmann::json;

// S x D block of hidden states for one (layer, token) cell, row = sample.
using Slice = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class DomainTag { country, animal, color, arithmetic, natural, custom };

inline const char* to_string(DomainTag d) {
    switch (d) {
    case DomainTag::country: return "country";
    case DomainTag::animal: return "animal";
    case DomainTag::color: return "color";
    case DomainTag::arithmetic: return "arithmetic";
    case DomainTag::natural: return "natural";
    case DomainTag::custom: return "custom";
    }
    return "custom";
}

inline DomainTag parse_domain(const std::string& s) {
    for (auto d : {DomainTag::country, DomainTag::animal, DomainTag::color, DomainTag::arithmetic,
                   DomainTag::natural, DomainTag::custom})
        if (s == to_string(d)) return d;
    throw InvalidArgument("unknown domain '" + s + "'");
}

struct SequenceSpec {
    std::size_t token_count = 0;
    std::size_t sequences = 0;
    DomainTag domain = DomainTag::custom;
    std::optional<std::size_t> shot_length;

    void validate() const {
        if (token_count == 0) throw InvalidArgument("token_count must be positive");
        if (shot_length) {
            if (*shot_length == 0) throw InvalidArgument("shot_length must be positive");
            if (token_count % *shot_length != 0)
                throw InvalidArgument("token_count is not a multiple of shot_length");
        }
    }

    bool operator==(const SequenceSpec&) const = default;
};

enum class StoreMode : std::uint8_t { macro = 0, micro = 1 };

inline const char* to_string(StoreMode m) { return m == StoreMode::macro ? "macro" : "micro"; }

struct StoreDims {
    std::uint64_t samples = 0; // S
    std::uint64_t layers = 0;  // L
    std::uint64_t tokens = 0;  // T
    std::uint64_t width = 0;   // D

    std::uint64_t cells() const { return layers * tokens; }
    std::uint64_t slice_values() const { return samples * width; }
    std::uint64_t slice_bytes() const { return slice_values() * sizeof(float); }

    bool operator==(const StoreDims&) const = default;
};

// In-memory 4-D tensor of hidden states, addressed by (layer, token) slices.
// Slices may be absent until filled; validate_store reports the gaps.
class RepresentationStore {
public:
    RepresentationStore() = default;
    RepresentationStore(StoreDims dims, StoreMode mode, std::string source_id)
        : dims_(dims), mode_(mode), source_id_(std::move(source_id)),
          slices_(static_cast<std::size_t>(dims.cells())) {}

    const StoreDims& dims() const { return dims_; }
    StoreMode mode() const { return mode_; }
    const std::string& source_id() const { return source_id_; }

    bool has_slice(std::size_t layer, std::size_t token) const {
        return slices_.at(index(layer, token)).has_value();
    }

    const Slice& slice(std::size_t layer, std::size_t token) const {
        const auto& s = slices_.at(index(layer, token));
        if (!s)
            throw InvalidArgument("missing slice (" + std::to_string(layer) + "," +
                                  std::to_string(token) + ")");
        return *s;
    }

    Slice& mutable_slice(std::size_t layer, std::size_t token) {
        return const_cast<Slice&>(std::as_const(*this).slice(layer, token));
    }

    void set_slice(std::size_t layer, std::size_t token, Slice values) {
        slices_.at(index(layer, token)) = std::move(values);
    }

    void erase_slice(std::size_t layer, std::size_t token) { slices_.at(index(layer, token)).reset(); }

    bool operator==(const RepresentationStore& o) const {
        if (dims_ != o.dims_ || mode_ != o.mode_ || source_id_ != o.source_id_) return false;
        for (std::size_t i = 0; i < slices_.size(); ++i) {
            const auto& a = slices_[i];
            const auto& b = o.slices_[i];
            if (a.has_value() != b.has_value()) return false;
            if (a && (a->rows() != b->rows() || a->cols() != b->cols() || *a != *b)) return false;
        }
        return true;
    }

private:
    std::size_t index(std::size_t layer, std::size_t token) const {
        if (layer >= dims_.layers || token >= dims_.tokens)
            throw InvalidArgument("cell (" + std::to_string(layer) + "," + std::to_string(token) +
                                  ") out of range");
        return layer * static_cast<std::size_t>(dims_.tokens) + token;
    }

    StoreDims dims_;
    StoreMode mode_ = StoreMode::macro;
    std::string source_id_;
    std::vector<std::optional<Slice>> slices_;
};

enum class IssueKind { dims, non_finite, missing, io };

struct ValidationIssue {
    IssueKind kind;
    std::size_t layer = 0;
    std::size_t token = 0;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const { return issues.empty(); }

    void add(IssueKind kind, std::size_t l, std::size_t t, const std::string& what) {
        issues.push_back({kind, l, t, what + " (" + std::to_string(l) + "," + std::to_string(t) + ")"});
    }
};

inline bool all_finite(const Slice& s) {
    const float* p = s.data();
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

inline ValidationReport validate_store(const RepresentationStore& store) {
    ValidationReport report;
    const auto& d = store.dims();
    for (std::size_t l = 0; l < d.layers; ++l) {
        for (std::size_t t = 0; t < d.tokens; ++t) {
            if (!store.has_slice(l, t)) {
                report.add(IssueKind::missing, l, t, "missing slice");
                continue;
            }
            const Slice& s = store.slice(l, t);
            if (static_cast<std::uint64_t>(s.rows()) != d.samples ||
                static_cast<std::uint64_t>(s.cols()) != d.width) {
                report.add(IssueKind::dims, l, t,
                           "slice is " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                               ", expected " + std::to_string(d.samples) + "x" +
                               std::to_string(d.width) + " at");
                continue;
            }
            if (!all_finite(s)) report.add(IssueKind::non_finite, l, t, "non-finite value in slice");
        }
    }
    return report;
}

// One trained estimate for a (layer pair, token) cell.
struct MIEstimate {
    double value_bits = 0.0;
    std::size_t layer_pair = 0;
    std::size_t token = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    std::uint64_t seed = 0;

    bool operator==(const MIEstimate&) const = default;
};

struct ShotStat {
    std::size_t shot = 0; // 1-based
    double mean = 0.0;
    double sd = 0.0;
    double sd_position = 0.0;
    std::optional<double> sd_bootstrap;

    bool operator==(const ShotStat&) const = default;
};

// E(l) per (layer pair, token) and the per-token mean Ê(t). Absent entries
// come from failed estimator cells and are never imputed.
struct IEProfile {
    std::vector<std::vector<std::optional<double>>> e; // [layer pair][token]
    std::vector<std::optional<double>> e_hat;          // [token]
    std::vector<ShotStat> shot_stats;

    std::size_t layer_pairs() const { return e.size(); }
    std::size_t tokens() const { return e_hat.size(); }

    bool operator==(const IEProfile&) const = default;
};

// JSON forms -----------------------------------------------------------------

namespace detail {
template <typename T>
Json optional_to_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}
template <typename T>
std::optional<T> optional_from_json(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<T>();
}
} // namespace detail

inline void to_json(Json& j, const SequenceSpec& s) {
    j = Json{{"token_count", s.token_count},
             {"sequences", s.sequences},
             {"domain", to_string(s.domain)},
             {"shot_length", detail::optional_to_json(s.shot_length)}};
}

inline void from_json(const Json& j, SequenceSpec& s) {
    s.token_count = j.at("token_count").get<std::size_t>();
    s.sequences = j.at("sequences").get<std::size_t>();
    s.domain = parse_domain(j.at("domain").get<std::string>());
    s.shot_length = detail::optional_from_json<std::size_t>(j.value("shot_length", Json(nullptr)));
}

inline void to_json(Json& j, const StoreDims& d) {
    j = Json{{"S", d.samples}, {"L", d.layers}, {"T", d.tokens}, {"D", d.width}};
}

inline void from_json(const Json& j, StoreDims& d) {
    d.samples = j.at("S").get<std::uint64_t>();
    d.layers = j.at("L").get<std::uint64_t>();
    d.tokens = j.at("T").get<std::uint64_t>();
    d.width = j.at("D").get<std::uint64_t>();
}

inline void to_json(Json& j, const MIEstimate& m) {
    j = Json{{"value_bits", m.value_bits}, {"layer_pair", m.layer_pair}, {"token", m.token},
             {"epochs_run", m.epochs_run}, {"best_epoch", m.best_epoch}, {"seed", m.seed}};
}

inline void from_json(const Json& j, MIEstimate& m) {
    m.value_bits = j.at("value_bits").get<double>();
    m.layer_pair = j.at("layer_pair").get<std::size_t>();
    m.token = j.at("token").get<std::size_t>();
    m.epochs_run = j.at("epochs_run").get<std::size_t>();
    m.best_epoch = j.at("best_epoch").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(Json& j, const ShotStat& s) {
    j = Json{{"shot", s.shot}, {"mean", s.mean}, {"sd", s.sd}, {"sd_position", s.sd_position},
             {"sd_bootstrap", detail::optional_to_json(s.sd_bootstrap)}};
}

inline void from_json(const Json& j, ShotStat& s) {
    s.shot = j.at("shot").get<std::size_t>();
    s.mean = j.at("mean").get<double>();
    s.sd = j.at("sd").get<double>();
    s.sd_position = j.at("sd_position").get<double>();
    s.sd_bootstrap = detail::optional_from_json<double>(j.value("sd_bootstrap", Json(nullptr)));
}

inline void to_json(Json& j, const IEProfile& p) {
    Json e = Json::array();
    for (const auto& row : p.e) {
        Json r = Json::array();
        for (const auto& v : row) r.push_back(detail::optional_to_json(v));
        e.push_back(std::move(r));
    }
    Json e_hat = Json::array();
    for (const auto& v : p.e_hat) e_hat.push_back(detail::optional_to_json(v));
    j = Json{{"e", std::move(e)}, {"e_hat", std::move(e_hat)}, {"shot_stats", p.shot_stats}};
}

inline void from_json(const Json& j, IEProfile& p) {
    p.e.clear();
    for (const auto& row : j.at("e")) {
        auto& out = p.e.emplace_back();
        for (const auto& v : row) out.push_back(detail::optional_from_json<double>(v));
    }
    p.e_hat.clear();
    for (const auto& v : j.at("e_hat")) p.e_hat.push_back(detail::optional_from_json<double>(v));
    p.shot_stats = j.value("shot_stats", std::vector<ShotStat>{});
}

} // namespace ie
