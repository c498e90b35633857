#pragma once

// MI estimation over every (layer pair, token) cell of a store. Cell (l, t)
// trains on x = slice(l, t), y = slice(l + 1, t) with its own seed derived
// from (run seed, l, t), so results do not depend on scheduling. Cells run
// on a bounded worker pool; a failed cell is recorded and left empty.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ie/core/checksum.hpp"
#include "ie/core/error.hpp"
#include "ie/core/random.hpp"
#include "ie/core/types.hpp"
#include "ie/io/repr1.hpp"
#include "ie/mine/train.hpp"

namespace ie {

// Read-only access to the slices of a store, safe to call concurrently.
struct StoreSource {
    StoreDims dims;
    StoreMode mode = StoreMode::macro;
    std::string source_id;
    std::function<Slice(std::size_t l, std::size_t t)> read;

    static StoreSource from_store(std::shared_ptr<const RepresentationStore> store) {
        return {store->dims(), store->mode(), store->source_id(),
                [store](std::size_t l, std::size_t t) { return store->slice(l, t); }};
    }

    static StoreSource from_file(const std::filesystem::path& path) {
        auto reader = std::make_shared<const Repr1Reader>(path);
        return {reader->dims(), reader->header().mode, reader->header().source_id,
                [reader](std::size_t l, std::size_t t) { return reader->read_slice(l, t); }};
    }
};

// Half-open index range; empty `end` means "to the end".
struct IndexRange {
    std::size_t begin = 0;
    std::optional<std::size_t> end;

    std::size_t stop(std::size_t size) const { return end ? std::min(*end, size) : size; }
    bool operator==(const IndexRange&) const = default;
};

struct CellFailure {
    std::size_t layer_pair = 0;
    std::size_t token = 0;
    std::string error;
};

struct CellResult {
    std::optional<MIEstimate> estimate;
    std::vector<double> bootstrap_bits;
    std::optional<std::string> error;
};

// (L - 1) x T grid of cell results; cells that were not requested stay empty.
class MIMatrix {
public:
    MIMatrix() = default;
    MIMatrix(std::size_t layer_pairs, std::size_t tokens)
        : layer_pairs_(layer_pairs), tokens_(tokens), cells_(layer_pairs * tokens) {}

    std::size_t layer_pairs() const { return layer_pairs_; }
    std::size_t tokens() const { return tokens_; }

    const CellResult& cell(std::size_t l, std::size_t t) const { return cells_.at(index(l, t)); }
    CellResult& cell(std::size_t l, std::size_t t) { return cells_.at(index(l, t)); }

    std::optional<double> bits(std::size_t l, std::size_t t) const {
        const auto& c = cell(l, t);
        return c.estimate ? std::optional<double>(c.estimate->value_bits) : std::nullopt;
    }

    std::vector<CellFailure> failures() const {
        std::vector<CellFailure> out;
        for (std::size_t l = 0; l < layer_pairs_; ++l)
            for (std::size_t t = 0; t < tokens_; ++t)
                if (const auto& c = cell(l, t); c.error) out.push_back({l, t, *c.error});
        return out;
    }

    bool operator==(const MIMatrix& o) const {
        if (layer_pairs_ != o.layer_pairs_ || tokens_ != o.tokens_) return false;
        for (std::size_t i = 0; i < cells_.size(); ++i) {
            const auto& a = cells_[i];
            const auto& b = o.cells_[i];
            if (a.estimate != b.estimate || a.bootstrap_bits != b.bootstrap_bits || a.error != b.error) return false;
        }
        return true;
    }

private:
    std::size_t index(std::size_t l, std::size_t t) const {
        if (l >= layer_pairs_ || t >= tokens_)
            throw InvalidArgument("cell (" + std::to_string(l) + "," + std::to_string(t) + ") out of range");
        return l * tokens_ + t;
    }

    std::size_t layer_pairs_ = 0;
    std::size_t tokens_ = 0;
    std::vector<CellResult> cells_;
};

struct EstimateOptions {
    TrainConfig train;             // train.seed is replaced by the per-cell seed
    std::uint64_t seed = 0;        // run seed
    std::size_t workers = 1;
    std::size_t bootstrap = 0;     // resamples per cell for the s.d. component
    IndexRange layer_pairs;
    IndexRange tokens;
    std::optional<std::filesystem::path> cell_dir; // persisted cells, reused when their hash matches
    bool resume = false;
    std::function<bool()> should_stop;             // checked before each new cell
    std::function<void(std::size_t l, std::size_t t, const CellResult&)> on_cell;
};

inline std::uint64_t cell_seed(std::uint64_t run_seed, std::size_t l, std::size_t t) {
    return derive_seed(run_seed, {static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(t)});
}

inline std::size_t default_workers() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

namespace detail {

inline std::string slice_checksum(const Slice& s) {
    Fnv1a64 h;
    h.update(std::string_view(reinterpret_cast<const char*>(s.data()), sizeof(float) * static_cast<std::size_t>(s.size())));
    return h.hex();
}

inline Json cell_to_json(const CellResult& c) {
    Json j{{"bootstrap_bits", c.bootstrap_bits}};
    j["estimate"] = c.estimate ? Json(*c.estimate) : Json(nullptr);
    j["error"] = c.error ? Json(*c.error) : Json(nullptr);
    return j;
}

inline CellResult cell_from_json(const Json& j) {
    CellResult c;
    if (!j.at("estimate").is_null()) c.estimate = j.at("estimate").get<MIEstimate>();
    if (!j.at("error").is_null()) c.error = j.at("error").get<std::string>();
    c.bootstrap_bits = j.at("bootstrap_bits").get<std::vector<double>>();
    return c;
}

inline std::filesystem::path cell_path(const std::filesystem::path& dir, std::size_t l, std::size_t t) {
    return dir / ("cell_l" + std::to_string(l) + "_t" + std::to_string(t) + ".json");
}

inline std::optional<CellResult> load_cell(const std::filesystem::path& path, const std::string& hash) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        const Json j = Json::parse(in);
        if (j.at("config_hash").get<std::string>() != hash) return std::nullopt;
        return cell_from_json(j.at("result"));
    } catch (const std::exception&) {
        return std::nullopt; // unreadable or partial cell file: recompute
    }
}

inline void save_cell(const std::filesystem::path& path, const std::string& hash, const CellResult& c) {
    const auto tmp = path.string() + ".partial";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write " + tmp);
        // Doubles are written in shortest roundtrip form, so reloads are exact.
        out << Json{{"config_hash", hash}, {"result", cell_to_json(c)}}.dump() << '\n';
        if (!out) throw IoError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline CellResult run_cell(std::size_t l, std::size_t t, const EstimateOptions& opt,
                           const Slice& x, const Slice& y) {
    CellResult r;
    TrainConfig cfg = opt.train;
    cfg.seed = cell_seed(opt.seed, l, t);
    try {
        CriticNetwork best;
        MIEstimate est = train_mi(x, y, cfg, {}, opt.bootstrap ? &best : nullptr);
        est.layer_pair = l;
        est.token = t;
        if (opt.bootstrap)
            r.bootstrap_bits = bootstrap_bounds(best, x, y, cfg.standardize, opt.bootstrap, derive_seed(cfg.seed, {1}));
        r.estimate = est;
    } catch (const InvalidArgument&) {
        throw;
    } catch (const Error& e) {
        r.error = e.what(); // divergence or non-finite critic output
    }
    return r;
}

} // namespace detail

// Identity of everything a cell result depends on.
inline std::string cell_hash(const StoreSource& store, std::size_t l, std::size_t t, const EstimateOptions& opt,
                             const std::string& x_sum, const std::string& y_sum) {
    TrainConfig cfg = opt.train;
    cfg.seed = cell_seed(opt.seed, l, t);
    const Json id{{"train", cfg},          {"bootstrap", opt.bootstrap}, {"l", l}, {"t", t},
                  {"dims", store.dims},    {"mode", to_string(store.mode)},
                  {"source_id", store.source_id}, {"x", x_sum}, {"y", y_sum}};
    Fnv1a64 h;
    h.update(id.dump());
    return h.hex();
}

inline MIMatrix estimate_all(const StoreSource& store, const EstimateOptions& opt) {
    opt.train.validate();
    const auto& d = store.dims;
    if (d.layers < 2) throw InvalidArgument("need at least 2 layers to form a layer pair");
    const std::size_t pairs = d.layers - 1;
    MIMatrix m(pairs, d.tokens);

    std::vector<std::pair<std::size_t, std::size_t>> todo;
    for (std::size_t l = opt.layer_pairs.begin; l < opt.layer_pairs.stop(pairs); ++l)
        for (std::size_t t = opt.tokens.begin; t < opt.tokens.stop(d.tokens); ++t) todo.emplace_back(l, t);
    if (opt.cell_dir) std::filesystem::create_directories(*opt.cell_dir);

    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;
    std::exception_ptr fatal;
    auto work = [&] {
        for (;;) {
            if (opt.should_stop && opt.should_stop()) return;
            const std::size_t k = next.fetch_add(1);
            if (k >= todo.size()) return;
            const auto [l, t] = todo[k];
            try {
                const Slice x = store.read(l, t);
                const Slice y = store.read(l + 1, t);
                std::optional<CellResult> result;
                std::string hash;
                if (opt.cell_dir) {
                    hash = cell_hash(store, l, t, opt, detail::slice_checksum(x), detail::slice_checksum(y));
                    if (opt.resume) result = detail::load_cell(detail::cell_path(*opt.cell_dir, l, t), hash);
                }
                if (!result) {
                    result = detail::run_cell(l, t, opt, x, y);
                    if (opt.cell_dir) detail::save_cell(detail::cell_path(*opt.cell_dir, l, t), hash, *result);
                }
                m.cell(l, t) = *result;
                if (opt.on_cell) {
                    std::lock_guard lock(callback_mutex);
                    opt.on_cell(l, t, m.cell(l, t));
                }
            } catch (...) {
                std::lock_guard lock(callback_mutex);
                if (!fatal) fatal = std::current_exception();
                next = todo.size();
                return;
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(opt.workers, todo.size()));
    if (n == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (fatal) std::rethrow_exception(fatal);
    return m;
}

} // namespace ie
