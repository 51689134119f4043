#include "hmdcap/nets/losses.hpp"

#include "hmdcap/error.hpp"

namespace hmdcap::nets {

LossValue eye_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& label)
{
    if (pred.size() != label.size()) {
        throw DimensionError("eye_loss: prediction and label differ in length");
    }
    const Eigen::VectorXd d = pred - label;
    return {d.squaredNorm(), 2.0 * d};
}

namespace {

void check_dims(const Eigen::VectorXd& pred, const Eigen::VectorXd& label, const FaceBasis& basis)
{
    if (pred.size() != basis.dim_exp() || label.size() != basis.dim_exp()) {
        throw DimensionError("facial_loss: expression length does not match the basis");
    }
}

void check_visible(std::span<const int> visible, const FaceBasis& basis)
{
    for (int i : visible) {
        if (i < 0 || i >= basis.vertex_count()) {
            throw DimensionError("facial_loss: visible vertex index out of range");
        }
    }
}

} // namespace

LossValue facial_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& label, const FaceBasis& basis,
                      const Pose& label_pose, const FacialLossWeights& weights, std::span<const int> visible)
{
    check_dims(pred, label, basis);
    check_visible(visible, basis);
    const Eigen::VectorXd delta = pred - label;
    LossValue out{delta.squaredNorm(), 2.0 * delta};
    // Identity and mean cancel in v*_i - v_i, leaving the expression rows applied to delta.
    for (int i : visible) {
        const auto rows = basis.axes_exp.middleRows<3>(3 * i);
        const Eigen::Vector3d d = rows * delta;
        out.value += weights.omega_d * d.squaredNorm();
        out.grad += 2.0 * weights.omega_d * rows.transpose() * d;
    }
    const Eigen::Matrix<double, 2, 3> sr = label_pose.scale() * label_pose.rotation().topRows<2>();
    for (int i : basis.landmark_indices_mouth) {
        const Eigen::MatrixXd rows = sr * basis.axes_exp.middleRows<3>(3 * i);
        const Eigen::Vector2d d = rows * delta;
        out.value += weights.omega_l * d.squaredNorm();
        out.grad += 2.0 * weights.omega_l * rows.transpose() * d;
    }
    return out;
}

Eigen::MatrixXd facial_loss_metric(const FaceBasis& basis, const Pose& label_pose, const FacialLossWeights& weights,
                                   std::span<const int> visible)
{
    check_visible(visible, basis);
    const int d = basis.dim_exp();
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d);
    if (weights.omega_d != 0.0) {
        Eigen::MatrixXd rows(3 * static_cast<Eigen::Index>(visible.size()), d);
        for (std::size_t k = 0; k < visible.size(); ++k) {
            rows.middleRows<3>(3 * static_cast<Eigen::Index>(k)) = basis.axes_exp.middleRows<3>(3 * visible[k]);
        }
        h.noalias() += weights.omega_d * rows.transpose() * rows;
    }
    if (weights.omega_l != 0.0) {
        const Eigen::Matrix<double, 2, 3> sr = label_pose.scale() * label_pose.rotation().topRows<2>();
        for (int i : basis.landmark_indices_mouth) {
            const Eigen::MatrixXd rows = sr * basis.axes_exp.middleRows<3>(3 * i);
            h.noalias() += weights.omega_l * rows.transpose() * rows;
        }
    }
    return h;
}

LossValue quadratic_loss(const Eigen::MatrixXd& metric, const Eigen::VectorXd& pred, const Eigen::VectorXd& label)
{
    if (pred.size() != label.size() || metric.rows() != pred.size() || metric.cols() != pred.size()) {
        throw DimensionError("quadratic_loss: size mismatch");
    }
    const Eigen::VectorXd delta = pred - label;
    const Eigen::VectorXd hd = metric * delta;
    return {delta.dot(hd), 2.0 * hd};
}

} // namespace hmdcap::nets
