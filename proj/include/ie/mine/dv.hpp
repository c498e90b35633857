#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "ie/core/error.hpp"
#include "ie/core/types.hpp"
#include "ie/mine/critic.hpp"

namespace ie {

inline constexpr double kBitsPerNat = std::numbers::log2e;

// log((1/n) sum exp(v)) with the maximum subtracted first.
inline double log_mean_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() == 0) throw InvalidArgument("log_mean_exp of an empty vector");
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) throw Error("non-finite critic output");
    const double s = (v.array() - m).exp().sum();
    return m + std::log(s / static_cast<double>(v.size()));
}

// DV lower bound in nats from critic outputs on joint and marginal samples:
// mean(f_joint) - log mean exp(f_marginal).
inline double dv_bound_from_outputs(const Eigen::Ref<const Eigen::VectorXd>& joint,
                                    const Eigen::Ref<const Eigen::VectorXd>& marginal) {
    if (joint.size() != marginal.size())
        throw InvalidArgument("joint and marginal batches differ in size (" + std::to_string(joint.size()) +
                              " vs " + std::to_string(marginal.size()) + ")");
    if (joint.size() == 0) throw InvalidArgument("empty batch");
    if (!joint.allFinite()) throw Error("non-finite critic output");
    return joint.mean() - log_mean_exp(marginal);
}

// Both blocks are (B x input_width), one sample per row.
inline double dv_bound(const CriticNetwork& critic, const Eigen::Ref<const Eigen::MatrixXd>& joint_rows,
                       const Eigen::Ref<const Eigen::MatrixXd>& marginal_rows) {
    if (joint_rows.rows() != marginal_rows.rows())
        throw InvalidArgument("joint and marginal batches differ in row count (" +
                              std::to_string(joint_rows.rows()) + " vs " + std::to_string(marginal_rows.rows()) +
                              ")");
    if (!joint_rows.allFinite() || !marginal_rows.allFinite()) throw InvalidArgument("non-finite input rows");
    return dv_bound_from_outputs(critic.evaluate(joint_rows), critic.evaluate(marginal_rows));
}

// Gradient of the loss -(DV bound) with respect to the critic outputs, laid
// out as [joint; marginal].
inline Eigen::VectorXd dv_loss_output_gradient(const Eigen::Ref<const Eigen::VectorXd>& joint,
                                               const Eigen::Ref<const Eigen::VectorXd>& marginal) {
    const Eigen::Index n = joint.size();
    Eigen::VectorXd g(n + marginal.size());
    g.head(n).setConstant(-1.0 / static_cast<double>(n));
    const double m = marginal.maxCoeff();
    Eigen::VectorXd w = (marginal.array() - m).exp();
    g.tail(marginal.size()) = w / w.sum();
    return g;
}

} // namespace ie
