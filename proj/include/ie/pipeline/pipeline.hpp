#pragma once

// End-to-end runs: macro and micro MI matrices, the IE profile and its
// reports, persisted under one output directory.
//
// Output files:
//   mi_matrix.csv, mi_matrix_micro.csv      per-cell estimates
//   mi_bootstrap.csv, mi_bootstrap_micro.csv  per-resample bounds (bootstrap > 0)
//   failed_cells.csv                         header only when every cell succeeded
//   ie_profile.csv                           t, e_hat, E_l0 ...
//   shot_report.csv, shot_table.csv          when shot_length is set
//   ie_profile.svg                           when svg is set
//   pipeline.json                            shapes and resolved config
//   cells/{macro,micro}/                     resumable per-cell results

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ie/core/error.hpp"
#include "ie/model/extract.hpp"
#include "ie/pipeline/estimate.hpp"
#include "ie/pipeline/profile.hpp"
#include "ie/pipeline/report.hpp"

namespace ie {

struct PipelineConfig {
    std::filesystem::path macro_store;
    std::vector<std::filesystem::path> micro_stores; // several files are concatenated along the token axis
    MicroProtocol micro_protocol = MicroProtocol::first_entity;
    TrainConfig train;
    IndexRange tokens; // macro cells only; the micro mean always spans every position
    IndexRange layer_pairs;
    std::filesystem::path out;
    std::uint64_t seed = 0;
    std::size_t bootstrap = 32;
    std::optional<std::size_t> shot_length;
    bool svg = false;

    void validate() const {
        if (macro_store.empty()) throw InvalidArgument("macro_store is required");
        if (micro_stores.empty()) throw InvalidArgument("at least one micro store is required");
        if (out.empty()) throw InvalidArgument("output directory is required");
        if (shot_length && *shot_length == 0) throw InvalidArgument("shot_length must be positive");
        train.validate();
    }
};

namespace detail {

inline Json range_to_json(const IndexRange& r) {
    return Json{{"begin", r.begin}, {"end", r.end ? Json(*r.end) : Json(nullptr)}};
}

inline IndexRange range_from_json(const Json& j) {
    IndexRange r;
    r.begin = j.value("begin", std::size_t{0});
    if (j.contains("end") && !j.at("end").is_null()) r.end = j.at("end").get<std::size_t>();
    return r;
}

} // namespace detail

inline void to_json(Json& j, const PipelineConfig& c) {
    std::vector<std::string> micro;
    for (const auto& p : c.micro_stores) micro.push_back(p.string());
    j = Json{{"macro_store", c.macro_store.string()},
             {"micro_store", micro},
             {"micro_protocol", to_string(c.micro_protocol)},
             {"train", c.train},
             {"tokens", detail::range_to_json(c.tokens)},
             {"layer_pairs", detail::range_to_json(c.layer_pairs)},
             {"out", c.out.string()},
             {"seed", c.seed},
             {"bootstrap", c.bootstrap},
             {"shot_length", c.shot_length ? Json(*c.shot_length) : Json(nullptr)},
             {"svg", c.svg}};
}

// Missing keys keep their defaults; micro_store may be a string or a list.
inline void from_json(const Json& j, PipelineConfig& c) {
    if (j.contains("macro_store")) c.macro_store = j.at("macro_store").get<std::string>();
    if (j.contains("micro_store")) {
        const auto& m = j.at("micro_store");
        c.micro_stores.clear();
        if (m.is_string()) {
            c.micro_stores.emplace_back(m.get<std::string>());
        } else {
            for (const auto& p : m) c.micro_stores.emplace_back(p.get<std::string>());
        }
    }
    if (j.contains("micro_protocol")) c.micro_protocol = parse_micro_protocol(j.at("micro_protocol").get<std::string>());
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("tokens")) c.tokens = detail::range_from_json(j.at("tokens"));
    if (j.contains("layer_pairs")) c.layer_pairs = detail::range_from_json(j.at("layer_pairs"));
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    c.seed = j.value("seed", c.seed);
    c.bootstrap = j.value("bootstrap", c.bootstrap);
    if (j.contains("shot_length"))
        c.shot_length = j.at("shot_length").is_null() ? std::nullopt
                                                      : std::optional(j.at("shot_length").get<std::size_t>());
    c.svg = j.value("svg", c.svg);
}

// Joins stores with equal (S, L, D) along the token axis. Their source_id
// fields must agree apart from positions, which the joined id drops.
inline StoreSource concat_tokens(const std::vector<StoreSource>& parts) {
    if (parts.empty()) throw InvalidArgument("no stores to join");
    if (parts.size() == 1) return parts.front();
    auto fields = [](const std::string& id) {
        auto f = parse_source_id(id);
        f.erase("positions");
        return f;
    };
    StoreSource out = parts.front();
    out.source_id.clear();
    for (const auto& [k, v] : fields(parts.front().source_id)) out.source_id += k + "=" + v + ";";
    if (!out.source_id.empty()) out.source_id.pop_back();
    std::vector<std::pair<std::size_t, std::size_t>> where; // token -> (part, local token)
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& d = parts[i].dims;
        if (d.samples != out.dims.samples || d.layers != out.dims.layers || d.width != out.dims.width)
            throw InvalidArgument("micro stores disagree on (S, L, D)");
        if (parts[i].mode != out.mode) throw InvalidArgument("micro stores disagree on mode");
        if (fields(parts[i].source_id) != fields(parts.front().source_id))
            throw InvalidArgument("micro stores come from different sources");
        for (std::size_t t = 0; t < d.tokens; ++t) where.emplace_back(i, t);
    }
    out.dims.tokens = where.size();
    out.read = [parts, where](std::size_t l, std::size_t t) {
        const auto [i, k] = where.at(t);
        return parts[i].read(l, k);
    };
    return out;
}

// Macro and micro stores must describe the same samples through the same model.
inline void check_store_agreement(const StoreSource& macro, const StoreSource& micro, MicroProtocol p) {
    if (macro.mode != StoreMode::macro) throw InvalidArgument("macro store is not in macro mode");
    if (micro.mode != StoreMode::micro) throw InvalidArgument("micro store is not in micro mode");
    const auto &a = macro.dims, &b = micro.dims;
    if (a.samples != b.samples) throw InvalidArgument("stores disagree on S: " + std::to_string(a.samples) + " vs " + std::to_string(b.samples));
    if (a.width != b.width) throw InvalidArgument("stores disagree on D: " + std::to_string(a.width) + " vs " + std::to_string(b.width));
    if (a.layers != b.layers) throw InvalidArgument("stores disagree on L: " + std::to_string(a.layers) + " vs " + std::to_string(b.layers));
    const auto fa = parse_source_id(macro.source_id), fb = parse_source_id(micro.source_id);
    for (const char* key : {"vocab", "tokenizer", "corpus", "model"}) {
        const auto ia = fa.find(key), ib = fb.find(key);
        if (ia != fa.end() && ib != fb.end() && ia->second != ib->second)
            throw InvalidArgument(std::string("stores disagree on ") + key + ": " + ia->second + " vs " + ib->second);
    }
    if (p == MicroProtocol::position_mean && b.tokens != a.tokens)
        throw InvalidArgument("position_mean needs a micro store with all " + std::to_string(a.tokens) +
                              " positions, got " + std::to_string(b.tokens));
    if (p == MicroProtocol::first_entity) {
        const auto it = fb.find("positions");
        if (it != fb.end()) {
            const auto pos = MicroPositions::parse(it->second);
            if (pos.kind == MicroPositions::Kind::set && pos.set.front() != 0)
                throw InvalidArgument("first_entity needs micro position 0, store has positions " + it->second);
        }
    }
}

struct PipelineResult {
    MIMatrix macro;
    MIMatrix micro;
    IEProfile profile;

    bool complete() const { return macro.failures().empty() && micro.failures().empty(); }
};

struct PipelineHooks {
    std::size_t workers = 1;
    bool resume = false;
    std::optional<std::filesystem::path> cell_root; // default <out>/cells
    std::function<bool()> should_stop;
    std::function<void(const char* store, std::size_t l, std::size_t t, const CellResult&)> on_cell;
};

inline EstimateOptions estimate_options(const PipelineConfig& cfg, const PipelineHooks& hooks, const char* which) {
    EstimateOptions o;
    o.train = cfg.train;
    o.seed = cfg.seed;
    o.workers = hooks.workers;
    o.bootstrap = cfg.bootstrap;
    o.layer_pairs = cfg.layer_pairs;
    o.cell_dir = hooks.cell_root ? *hooks.cell_root / which : cfg.out / "cells" / which;
    o.resume = hooks.resume;
    o.should_stop = hooks.should_stop;
    if (hooks.on_cell)
        o.on_cell = [cb = hooks.on_cell, which](std::size_t l, std::size_t t, const CellResult& r) { cb(which, l, t, r); };
    return o;
}

inline Json pipeline_summary(const PipelineConfig& cfg, const PipelineResult& r) {
    return Json{{"config", cfg},
                {"layer_pairs", r.macro.layer_pairs()},
                {"tokens", r.macro.tokens()},
                {"micro_tokens", r.micro.tokens()},
                {"failed_cells", r.macro.failures().size() + r.micro.failures().size()}};
}

// Writes every report file for a finished (possibly partial) run.
inline void write_pipeline_outputs(const PipelineConfig& cfg, const PipelineResult& r) {
    const auto& o = cfg.out;
    write_text_file(o / "mi_matrix.csv", render_mi_matrix(r.macro));
    write_text_file(o / "mi_matrix_micro.csv", render_mi_matrix(r.micro));
    if (cfg.bootstrap) {
        write_text_file(o / "mi_bootstrap.csv", render_bootstrap(r.macro));
        write_text_file(o / "mi_bootstrap_micro.csv", render_bootstrap(r.micro));
    }
    write_text_file(o / "failed_cells.csv", render_failed_cells({{"macro", &r.macro}, {"micro", &r.micro}}));
    write_text_file(o / "ie_profile.csv", render_ie_profile(r.profile));
    if (cfg.shot_length && !r.profile.shot_stats.empty()) {
        const auto rows = shot_report(r.profile);
        write_text_file(o / "shot_report.csv", render_shot_report(rows));
        write_text_file(o / "shot_table.csv", render_shot_table(rows));
    }
    if (cfg.svg) write_text_file(o / "ie_profile.svg", render_profile_svg({{"e_hat", r.profile}}));
    write_text_file(o / "pipeline.json", pipeline_summary(cfg, r).dump(2) + "\n");
}

inline PipelineResult run_pipeline(const StoreSource& macro, const StoreSource& micro, const PipelineConfig& cfg,
                                   const PipelineHooks& hooks = {}) {
    cfg.validate();
    check_store_agreement(macro, micro, cfg.micro_protocol);
    std::filesystem::create_directories(cfg.out);

    EstimateOptions mo = estimate_options(cfg, hooks, "macro");
    mo.tokens = cfg.tokens;
    EstimateOptions uo = estimate_options(cfg, hooks, "micro");
    if (cfg.micro_protocol == MicroProtocol::first_entity) uo.tokens = {0, 1};

    PipelineResult r;
    r.macro = estimate_all(macro, mo);
    r.micro = estimate_all(micro, uo);
    r.profile = compute_ie(r.macro, r.micro, cfg.micro_protocol, cfg.shot_length);
    write_pipeline_outputs(cfg, r);
    return r;
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineHooks& hooks = {}) {
    cfg.validate();
    std::vector<StoreSource> parts;
    for (const auto& p : cfg.micro_stores) parts.push_back(StoreSource::from_file(p));
    return run_pipeline(StoreSource::from_file(cfg.macro_store), concat_tokens(parts), cfg, hooks);
}

struct PersistedRun {
    MIMatrix macro;
    MIMatrix micro;
    PipelineConfig config;
};

// Reloads the estimates of a finished run from its CSV files.
inline PersistedRun load_persisted_run(const std::filesystem::path& dir) {
    const Json s = Json::parse(read_text_file(dir / "pipeline.json"));
    PersistedRun r;
    r.config = s.at("config").get<PipelineConfig>();
    const auto pairs = s.at("layer_pairs").get<std::size_t>();
    auto load = [&](const char* csv, const char* boot, std::size_t tokens) {
        std::istringstream in(read_text_file(dir / csv));
        MIMatrix m = read_mi_matrix(in, pairs, tokens);
        if (r.config.bootstrap && std::filesystem::exists(dir / boot)) {
            std::istringstream b(read_text_file(dir / boot));
            read_bootstrap(b, m);
        }
        return m;
    };
    r.macro = load("mi_matrix.csv", "mi_bootstrap.csv", s.at("tokens").get<std::size_t>());
    r.micro = load("mi_matrix_micro.csv", "mi_bootstrap_micro.csv", s.at("micro_tokens").get<std::size_t>());
    return r;
}

// E(l) and Ê(t) recomputed from a persisted run, rendered as ie_profile.csv.
inline std::string recompute_ie_profile(const std::filesystem::path& dir) {
    const auto run = load_persisted_run(dir);
    return render_ie_profile(compute_ie(run.macro, run.micro, run.config.micro_protocol, run.config.shot_length));
}

} // namespace ie
