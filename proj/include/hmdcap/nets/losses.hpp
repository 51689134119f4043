#pragma once

#include <span>

#include <Eigen/Core>

#include "hmdcap/face_model.hpp"

namespace hmdcap::nets {

struct LossValue {
    double value = 0.0;
    Eigen::VectorXd grad; ///< d value / d pred
};

/// Squared L2 distance.
LossValue eye_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& label);

struct FacialLossWeights {
    double omega_d = 1e-6; ///< dense term over the visible vertices
    double omega_l = 1.0;  ///< projected mouth-landmark term
};

/// ||pred - label||^2 + omega_d * sum_{visible} ||v*_i - v_i||^2 + omega_l * sum_{mouth} ||Pi(v*_i) - Pi(v_i)||^2,
/// where v*, v are the label-identity meshes with the predicted and label expressions and Pi is the label pose.
LossValue facial_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& label, const FaceBasis& basis,
                      const Pose& label_pose, const FacialLossWeights& weights, std::span<const int> visible);

/// The facial loss is the quadratic form (pred - label)^T H (pred - label); returns H.
Eigen::MatrixXd facial_loss_metric(const FaceBasis& basis, const Pose& label_pose, const FacialLossWeights& weights,
                                   std::span<const int> visible);

/// (pred - label)^T H (pred - label) and its gradient 2 H (pred - label).
LossValue quadratic_loss(const Eigen::MatrixXd& metric, const Eigen::VectorXd& pred, const Eigen::VectorXd& label);

} // namespace hmdcap::nets
