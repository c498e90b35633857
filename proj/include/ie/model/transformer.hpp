#pragma once

// A small decoder-only transformer with pre-norm blocks:
//   a = attention(norm1(h)),  h' = h + a,  m = mlp(norm2(h')),  out = h' + m
// Weights are random and never trained. Every token row is computed with
// the same per-row kernels regardless of sequence length, so a token's
// representation depends only on the tokens at or before it.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ie/core/error.hpp"
#include "ie/core/random.hpp"
#include "ie/core/types.hpp"

namespace ie {

struct ToyModelConfig {
    std::size_t blocks = 4;
    std::size_t width = 64;
    std::size_t heads = 4;
    std::size_t vocab_size = 0;
    std::size_t max_positions = 256;
    std::size_t mlp_ratio = 4;
    std::uint64_t seed = 0;

    void validate() const {
        if (blocks < 2) throw InvalidArgument("the toy model needs at least 2 blocks");
        if (width == 0 || heads == 0 || width % heads != 0)
            throw InvalidArgument("width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                                  " heads");
        if (vocab_size == 0) throw InvalidArgument("vocab_size must be positive");
        if (max_positions == 0) throw InvalidArgument("max_positions must be positive");
        if (mlp_ratio == 0) throw InvalidArgument("mlp_ratio must be positive");
    }

    std::size_t head_width() const { return width / heads; }

    bool operator==(const ToyModelConfig&) const = default;
};

inline void to_json(Json& j, const ToyModelConfig& c) {
    j = Json{{"blocks", c.blocks},       {"width", c.width},
             {"heads", c.heads},         {"vocab_size", c.vocab_size},
             {"max_positions", c.max_positions}, {"mlp_ratio", c.mlp_ratio},
             {"seed", c.seed}};
}

inline void from_json(const Json& j, ToyModelConfig& c) {
    const ToyModelConfig d;
    c.blocks = j.value("blocks", d.blocks);
    c.width = j.value("width", d.width);
    c.heads = j.value("heads", d.heads);
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.max_positions = j.value("max_positions", d.max_positions);
    c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
    c.seed = j.value("seed", d.seed);
}

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Linear maps are stored (in x out) so a token row maps as x * W.
struct BlockWeights {
    Eigen::RowVectorXf norm1_gain, norm1_bias, norm2_gain, norm2_bias;
    Eigen::MatrixXf wq, wk, wv, wo;
    Eigen::MatrixXf w1, w2;
    Eigen::RowVectorXf b1, b2;
};

// Per-block intermediate values for one sequence, (T x D) each.
struct BlockTrace {
    RowMatrixXf input;
    RowMatrixXf attention;
    RowMatrixXf mlp;
    RowMatrixXf output;
};

namespace detail {

inline void layer_norm_row(const float* x, float* y, const Eigen::RowVectorXf& gain, const Eigen::RowVectorXf& bias) {
    const auto n = gain.size();
    float mean = 0.0f;
    for (Eigen::Index i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<float>(n);
    float var = 0.0f;
    for (Eigen::Index i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<float>(n);
    const float inv = 1.0f / std::sqrt(var + 1e-5f);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv * gain[i] + bias[i];
}

inline float gelu(float x) {
    constexpr float k = 0.7978845608028654f; // sqrt(2 / pi)
    return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

// y = x * W for one row, accumulated in a fixed order.
inline void row_times(const float* x, const Eigen::MatrixXf& w, float* y) {
    const Eigen::Index in = w.rows(), out = w.cols();
    for (Eigen::Index o = 0; o < out; ++o) {
        const float* col = w.data() + o * in;
        float s = 0.0f;
        for (Eigen::Index i = 0; i < in; ++i) s += x[i] * col[i];
        y[o] = s;
    }
}

} // namespace detail

class ToyTransformer {
public:
    ToyTransformer() = default;

    // Gaussian weights with variance 1/fan_in; output projections are
    // further scaled by 1/sqrt(2 * blocks). Norm gains 1, biases 0.
    explicit ToyTransformer(const ToyModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const auto d = static_cast<Eigen::Index>(cfg_.width);
        const auto hidden = static_cast<Eigen::Index>(cfg_.width * cfg_.mlp_ratio);
        Rng rng(cfg_.seed);
        auto gaussian = [&](Eigen::Index rows, Eigen::Index cols, double sd) {
            Eigen::MatrixXf m(rows, cols);
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(sd * rng.normal());
            return m;
        };
        token_embedding_ = gaussian(static_cast<Eigen::Index>(cfg_.vocab_size), d, 1.0);
        position_embedding_ = gaussian(static_cast<Eigen::Index>(cfg_.max_positions), d, 1.0);
        const double proj = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg_.blocks));
        for (std::size_t l = 0; l < cfg_.blocks; ++l) {
            BlockWeights b;
            b.norm1_gain = b.norm2_gain = Eigen::RowVectorXf::Ones(d);
            b.norm1_bias = b.norm2_bias = Eigen::RowVectorXf::Zero(d);
            const double s = 1.0 / std::sqrt(static_cast<double>(d));
            b.wq = gaussian(d, d, s);
            b.wk = gaussian(d, d, s);
            b.wv = gaussian(d, d, s);
            b.wo = gaussian(d, d, s * proj);
            b.w1 = gaussian(d, hidden, s);
            b.w2 = gaussian(hidden, d, proj / std::sqrt(static_cast<double>(hidden)));
            b.b1 = Eigen::RowVectorXf::Zero(hidden);
            b.b2 = Eigen::RowVectorXf::Zero(d);
            blocks_.push_back(std::move(b));
        }
    }

    const ToyModelConfig& config() const { return cfg_; }
    const std::vector<BlockWeights>& blocks() const { return blocks_; }
    const Eigen::MatrixXf& token_embedding() const { return token_embedding_; }
    const Eigen::MatrixXf& position_embedding() const { return position_embedding_; }

    RowMatrixXf embed(const std::vector<std::uint32_t>& ids) const {
        if (ids.size() > cfg_.max_positions)
            throw InvalidArgument("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_positions " +
                                  std::to_string(cfg_.max_positions));
        const auto d = static_cast<Eigen::Index>(cfg_.width);
        RowMatrixXf h(static_cast<Eigen::Index>(ids.size()), d);
        for (std::size_t t = 0; t < ids.size(); ++t) {
            if (ids[t] >= cfg_.vocab_size)
                throw InvalidArgument("token id " + std::to_string(ids[t]) + " outside vocabulary of " +
                                      std::to_string(cfg_.vocab_size));
            const auto row = static_cast<Eigen::Index>(t);
            h.row(row) = token_embedding_.row(ids[t]) + position_embedding_.row(row);
        }
        return h;
    }

    BlockTrace block(std::size_t l, const RowMatrixXf& h) const {
        const auto& b = blocks_.at(l);
        const Eigen::Index n = h.rows(), d = h.cols();
        const auto heads = static_cast<Eigen::Index>(cfg_.heads);
        const auto hw = static_cast<Eigen::Index>(cfg_.head_width());
        const float scale = 1.0f / std::sqrt(static_cast<float>(hw));
        BlockTrace tr;
        tr.input = h;

        RowMatrixXf x(n, d), q(n, d), k(n, d), v(n, d), ctx(n, d);
        for (Eigen::Index t = 0; t < n; ++t) {
            detail::layer_norm_row(h.row(t).data(), x.row(t).data(), b.norm1_gain, b.norm1_bias);
            detail::row_times(x.row(t).data(), b.wq, q.row(t).data());
            detail::row_times(x.row(t).data(), b.wk, k.row(t).data());
            detail::row_times(x.row(t).data(), b.wv, v.row(t).data());
        }
        std::vector<float> p(static_cast<std::size_t>(n));
        for (Eigen::Index t = 0; t < n; ++t)
            for (Eigen::Index hd = 0; hd < heads; ++hd) {
                const Eigen::Index o = hd * hw;
                float m = -INFINITY;
                for (Eigen::Index j = 0; j <= t; ++j) {
                    float s = 0.0f;
                    for (Eigen::Index i = 0; i < hw; ++i) s += q(t, o + i) * k(j, o + i);
                    p[static_cast<std::size_t>(j)] = s * scale;
                    m = std::max(m, p[static_cast<std::size_t>(j)]);
                }
                float z = 0.0f;
                for (Eigen::Index j = 0; j <= t; ++j) z += p[static_cast<std::size_t>(j)] = std::exp(p[static_cast<std::size_t>(j)] - m);
                for (Eigen::Index i = 0; i < hw; ++i) {
                    float s = 0.0f;
                    for (Eigen::Index j = 0; j <= t; ++j) s += p[static_cast<std::size_t>(j)] * v(j, o + i);
                    ctx(t, o + i) = s / z;
                }
            }
        tr.attention.resize(n, d);
        for (Eigen::Index t = 0; t < n; ++t) detail::row_times(ctx.row(t).data(), b.wo, tr.attention.row(t).data());
        const RowMatrixXf mid = h + tr.attention;

        const auto hidden = b.w1.cols();
        Eigen::RowVectorXf y(d), u(hidden);
        tr.mlp.resize(n, d);
        for (Eigen::Index t = 0; t < n; ++t) {
            detail::layer_norm_row(mid.row(t).data(), y.data(), b.norm2_gain, b.norm2_bias);
            detail::row_times(y.data(), b.w1, u.data());
            for (Eigen::Index i = 0; i < hidden; ++i) u[i] = detail::gelu(u[i] + b.b1[i]);
            detail::row_times(u.data(), b.w2, tr.mlp.row(t).data());
            tr.mlp.row(t) += b.b2;
        }
        tr.output = mid + tr.mlp;
        return tr;
    }

    // Output of every block, (T x D) each.
    std::vector<RowMatrixXf> hidden_states(const std::vector<std::uint32_t>& ids) const {
        std::vector<RowMatrixXf> out;
        out.reserve(cfg_.blocks);
        RowMatrixXf h = embed(ids);
        for (std::size_t l = 0; l < cfg_.blocks; ++l) {
            h = block(l, h).output;
            out.push_back(h);
        }
        return out;
    }

    // "TOYW1\0", u16 version, u32 config-JSON length, config JSON, then the
    // f32 little-endian tensors in declaration order (column-major).
    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(kMagic, 6);
        put(out, std::uint16_t{1});
        const std::string cfg = Json(cfg_).dump();
        put(out, static_cast<std::uint32_t>(cfg.size()));
        out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
        visit(*this, [&](const auto& t) { put_floats(out, t.data(), t.size()); });
        out.close();
        if (!out) throw IoError("write failed for " + path.string());
    }

    static ToyTransformer load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path.string());
        char magic[6] = {};
        in.read(magic, 6);
        if (!in || std::memcmp(magic, kMagic, 6) != 0) throw IoError(path.string() + ": bad magic, not a TOYW1 file");
        const auto version = get<std::uint16_t>(in, path);
        if (version != 1) throw IoError(path.string() + ": unsupported TOYW1 version " + std::to_string(version));
        const auto len = get<std::uint32_t>(in, path);
        if (len > (1u << 20)) throw IoError(path.string() + ": config block too large");
        std::string cfg(len, '\0');
        in.read(cfg.data(), len);
        if (!in) throw IoError(path.string() + ": truncated config");
        ToyTransformer m(Json::parse(cfg).get<ToyModelConfig>());
        m.for_each_tensor([&](auto& t) { get_floats(in, t.data(), t.size(), path); });
        if (in.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes");
        return m;
    }

    bool operator==(const ToyTransformer& o) const {
        if (!(cfg_ == o.cfg_)) return false;
        std::vector<const float*> mine, theirs;
        std::vector<std::size_t> sizes;
        visit(*this, [&](const auto& t) {
            mine.push_back(t.data());
            sizes.push_back(static_cast<std::size_t>(t.size()));
        });
        visit(o, [&](const auto& t) { theirs.push_back(t.data()); });
        for (std::size_t i = 0; i < mine.size(); ++i)
            if (std::memcmp(mine[i], theirs[i], sizeof(float) * sizes[i]) != 0) return false;
        return true;
    }

private:
    static constexpr char kMagic[6] = {'T', 'O', 'Y', 'W', '1', '\0'};

    template <typename F>
    void for_each_tensor(F&& f) {
        visit(*this, f);
    }

    template <typename Self, typename F>
    static void visit(Self& self, F&& f) {
        f(self.token_embedding_);
        f(self.position_embedding_);
        for (auto& b : self.blocks_) {
            f(b.norm1_gain), f(b.norm1_bias), f(b.wq), f(b.wk), f(b.wv), f(b.wo);
            f(b.norm2_gain), f(b.norm2_bias), f(b.w1), f(b.b1), f(b.w2), f(b.b2);
        }
    }

    template <typename T>
    static T swap_bytes(T v) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        std::reverse(b, b + sizeof v);
        return v;
    }

    template <typename T>
    static void put(std::ostream& out, T v) {
        if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }

    template <typename T>
    static T get(std::istream& in, const std::filesystem::path& path) {
        T v{};
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw IoError(path.string() + ": truncated header");
        if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
        return v;
    }

    static void put_floats(std::ostream& out, const float* p, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i) put(out, std::bit_cast<std::uint32_t>(p[i]));
    }

    static void get_floats(std::istream& in, float* p, Eigen::Index n, const std::filesystem::path& path) {
        for (Eigen::Index i = 0; i < n; ++i) p[i] = std::bit_cast<float>(get<std::uint32_t>(in, path));
    }

    ToyModelConfig cfg_;
    Eigen::MatrixXf token_embedding_;
    Eigen::MatrixXf position_embedding_;
    std::vector<BlockWeights> blocks_;
};

} // namespace ie
