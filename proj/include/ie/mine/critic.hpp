#pragma once

// Scalar critic f(x || y) used inside the Donsker-Varadhan bound: a stack of
// affine layers whose widths halve from the input, with leaky rectifiers in
// between and a single linear output.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ie/core/error.hpp"
#include "ie/core/random.hpp"
#include "ie/core/types.hpp"

namespace ie {

struct CriticShape {
    std::size_t depth = 10;       // number of affine layers, last one maps to a scalar
    std::size_t min_hidden = 8;   // floor applied to the halving width sequence
    double leaky_slope = 0.01;

    void validate() const {
        if (depth == 0) throw InvalidArgument("critic depth must be positive");
        if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw InvalidArgument("leaky_slope must lie in [0, 1)");
    }

    bool operator==(const CriticShape&) const = default;
};

// Widths w[0] = input, w[i] = max(w[i-1] / 2, min_hidden), w[depth] = 1.
inline std::vector<std::size_t> critic_widths(std::size_t input_width, const CriticShape& shape) {
    if (input_width == 0) throw InvalidArgument("critic input width must be positive");
    shape.validate();
    std::vector<std::size_t> w{input_width};
    for (std::size_t i = 1; i < shape.depth; ++i)
        w.push_back(std::max<std::size_t>({w.back() / 2, shape.min_hidden, 1}));
    w.push_back(1);
    return w;
}

// Activations recorded by a forward pass, kept for the backward pass.
// inputs[i] is the (batch x width_i) input of layer i.
struct CriticTape {
    std::vector<Eigen::MatrixXd> inputs;
};

// Batches are laid out one sample per row, so every feature is a contiguous
// column and the layer kernels below reduce to vectorised axpy/dot loops.
class CriticNetwork {
public:
    CriticNetwork() = default;

    // Glorot-uniform weights, zero biases, all drawn from `seed`.
    CriticNetwork(std::size_t input_width, CriticShape shape, std::uint64_t seed)
        : shape_(shape), widths_(critic_widths(input_width, shape)) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
            offsets_.push_back(offset);
            offset += widths_[i + 1] * widths_[i] + widths_[i + 1];
        }
        theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
        Rng rng(seed);
        for (std::size_t i = 0; i < layer_count(); ++i) {
            const double limit = std::sqrt(6.0 / static_cast<double>(widths_[i] + widths_[i + 1]));
            auto w = weight(i);
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
        }
    }

    std::size_t input_width() const { return widths_.front(); }
    std::size_t layer_count() const { return widths_.size() - 1; }
    const std::vector<std::size_t>& widths() const { return widths_; }
    const CriticShape& shape() const { return shape_; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(theta_.size()); }

    // Flat parameter vector; per layer: column-major (out x in) weight, then bias.
    Eigen::VectorXd& parameters() { return theta_; }
    const Eigen::VectorXd& parameters() const { return theta_; }

    Eigen::Map<Eigen::MatrixXd> weight(std::size_t i) {
        return {theta_.data() + offsets_[i], rows(i), cols(i)};
    }
    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t i) const {
        return {theta_.data() + offsets_[i], rows(i), cols(i)};
    }
    Eigen::Map<Eigen::VectorXd> bias(std::size_t i) {
        return {theta_.data() + offsets_[i] + rows(i) * cols(i), rows(i)};
    }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t i) const {
        return {theta_.data() + offsets_[i] + rows(i) * cols(i), rows(i)};
    }

    // Critic outputs for a (batch x input_width) block. Fills `tape` when given.
    Eigen::VectorXd forward(const Eigen::Ref<const Eigen::MatrixXd>& rows_in, CriticTape* tape = nullptr) const {
        check_input(rows_in);
        if (tape) tape->inputs.resize(layer_count());
        Eigen::MatrixXd a = rows_in;
        Eigen::MatrixXd z;
        for (std::size_t i = 0; i < layer_count(); ++i) {
            affine(i, a, z);
            if (i + 1 < layer_count()) leaky_in_place(z);
            if (tape) {
                std::swap(tape->inputs[i], a);
                a.swap(z);
            } else {
                a.swap(z);
            }
        }
        return a.col(0);
    }

    // Vector-Jacobian product: gradient of sum_b d_out[b] * f(row_b) with
    // respect to the flat parameter vector.
    Eigen::VectorXd backward(const CriticTape& tape, const Eigen::Ref<const Eigen::VectorXd>& d_out) const {
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_.size());
        accumulate_backward(tape, d_out, grad);
        return grad;
    }

    // Same values as forward() and backward() on the whole block, computed in
    // fixed-size chunks so each layer's activations stay in cache. Chunks are
    // reduced in a fixed order, which keeps results bitwise reproducible.
    Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::MatrixXd>& rows_in) const {
        check_input(rows_in);
        Eigen::VectorXd out(rows_in.rows());
        for (Eigen::Index r0 = 0; r0 < rows_in.rows(); r0 += kChunk) {
            const Eigen::Index n = std::min(kChunk, rows_in.rows() - r0);
            out.segment(r0, n) = forward(rows_in.middleRows(r0, n));
        }
        return out;
    }

    Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::MatrixXd>& rows_in,
                             const Eigen::Ref<const Eigen::VectorXd>& d_out) const {
        check_input(rows_in);
        if (d_out.size() != rows_in.rows()) throw InvalidArgument("d_out length does not match batch");
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta_.size());
        CriticTape tape;
        for (Eigen::Index r0 = 0; r0 < rows_in.rows(); r0 += kChunk) {
            const Eigen::Index n = std::min(kChunk, rows_in.rows() - r0);
            forward(rows_in.middleRows(r0, n), &tape);
            accumulate_backward(tape, d_out.segment(r0, n), grad);
        }
        return grad;
    }

private:
    static constexpr Eigen::Index kChunk = 256;

    void check_input(const Eigen::Ref<const Eigen::MatrixXd>& rows_in) const {
        if (static_cast<std::size_t>(rows_in.cols()) != input_width())
            throw InvalidArgument("critic expects input width " + std::to_string(input_width()) + ", got " +
                                  std::to_string(rows_in.cols()));
    }

    // z = a * W^T + 1 b^T, one output feature at a time.
    void affine(std::size_t i, const Eigen::MatrixXd& a, Eigen::MatrixXd& z) const {
        const auto w = weight(i);
        const auto b = bias(i);
        z.resize(a.rows(), w.rows());
        for (Eigen::Index o = 0; o < w.rows(); ++o) {
            auto zo = z.col(o);
            zo.setConstant(b[o]);
            for (Eigen::Index k = 0; k < w.cols(); ++k) zo += w(o, k) * a.col(k);
        }
    }

    void leaky_in_place(Eigen::MatrixXd& z) const {
        // max(v, slope * v) is the leaky rectifier for 0 <= slope < 1.
        z = z.cwiseMax(shape_.leaky_slope * z);
    }

    void accumulate_backward(const CriticTape& tape, const Eigen::Ref<const Eigen::VectorXd>& d_out,
                             Eigen::VectorXd& grad) const {
        if (tape.inputs.size() != layer_count()) throw InvalidArgument("tape does not match critic");
        if (tape.inputs.front().rows() != d_out.size()) throw InvalidArgument("d_out length does not match tape");
        Eigen::MatrixXd delta = d_out;
        Eigen::MatrixXd prev;
        const double slope = shape_.leaky_slope;
        for (std::size_t i = layer_count(); i-- > 0;) {
            const Eigen::MatrixXd& a = tape.inputs[i];
            const auto w = weight(i);
            Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[i], rows(i), cols(i));
            Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets_[i] + rows(i) * cols(i), rows(i));
            for (Eigen::Index o = 0; o < w.rows(); ++o) {
                const auto d = delta.col(o);
                gb[o] += d.sum();
                for (Eigen::Index k = 0; k < w.cols(); ++k) gw(o, k) += d.dot(a.col(k));
            }
            if (i == 0) break;
            prev.resize(a.rows(), w.cols());
            for (Eigen::Index k = 0; k < w.cols(); ++k) {
                auto pk = prev.col(k);
                pk.setZero();
                for (Eigen::Index o = 0; o < w.rows(); ++o) pk += w(o, k) * delta.col(o);
                // a = leaky(z) keeps the sign of z, so the mask comes from a.
                double* pp = pk.data();
                const double* ap = a.col(k).data();
                for (Eigen::Index r = 0; r < a.rows(); ++r) pp[r] = ap[r] > 0.0 ? pp[r] : slope * pp[r];
            }
            delta.swap(prev);
        }
    }

    Eigen::Index rows(std::size_t i) const { return static_cast<Eigen::Index>(widths_[i + 1]); }
    Eigen::Index cols(std::size_t i) const { return static_cast<Eigen::Index>(widths_[i]); }

    CriticShape shape_;
    std::vector<std::size_t> widths_;
    std::vector<std::size_t> offsets_;
    Eigen::VectorXd theta_;
};

struct ForwardBackward {
    Eigen::VectorXd outputs;
    Eigen::VectorXd gradient;
};

// Outputs for each row of `rows` (batch x input_width) and the gradient of
// sum_b d_out[b] * f(row_b) with respect to the critic parameters.
inline ForwardBackward forward_backward(const CriticNetwork& critic, const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                        const Eigen::Ref<const Eigen::VectorXd>& d_out) {
    if (static_cast<std::size_t>(rows.cols()) != critic.input_width())
        throw InvalidArgument("row width " + std::to_string(rows.cols()) + " does not match critic input " +
                              std::to_string(critic.input_width()));
    if (d_out.size() != rows.rows()) throw InvalidArgument("d_out length does not match row count");
    CriticTape tape;
    ForwardBackward r;
    r.outputs = critic.forward(rows, &tape);
    r.gradient = critic.backward(tape, d_out);
    return r;
}

} // namespace ie
