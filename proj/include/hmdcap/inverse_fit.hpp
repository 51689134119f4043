#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hmdcap/face_model.hpp"

namespace hmdcap {

struct LandmarkPoint {
    int index = 0; ///< vertex index into the basis
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
    double weight = 1.0;
};

struct LandmarkObservations {
    std::vector<int> frame_ids;
    std::vector<std::vector<LandmarkPoint>> frames;
};

struct FitConfig {
    int max_iterations = 200;
    double damping = 1e-6;     ///< Levenberg-Marquardt damping of the pose step
    double w_r = 5e-5;         ///< Tikhonov weight on sigma-scaled coefficients
    double tolerance = 1e-12;  ///< stop when the relative objective change falls below this
    int pose_iterations = 5;   ///< Gauss-Newton iterations per pose step

    void validate() const;
};

struct FitResult {
    Eigen::VectorXd x_id;
    std::vector<Eigen::VectorXd> x_exp;
    std::vector<Pose> poses;
    bool converged = false;
    int iterations = 0;
    std::vector<double> objective_history; ///< after initialisation, then after every outer iteration
    double rms_residual = 0.0;             ///< pixels
};

/// Weak-perspective pose from 3D-2D correspondences: affine least squares, projection onto scaled
/// orthonormal rows, then Gauss-Newton. Throws std::invalid_argument for fewer than 4 points and
/// NumericalError when the 3D or 2D points are collinear.
Pose fit_pose(std::span<const Eigen::Vector3d> points3d, std::span<const Eigen::Vector2d> points2d);

/// Sum over frames of weighted squared reprojection error plus the coefficient prior.
double fit_objective(const LandmarkObservations& obs, const FaceBasis& basis, const FitConfig& config,
                     const Eigen::VectorXd& x_id, std::span<const Eigen::VectorXd> x_exp,
                     std::span<const Pose> poses);

/// Alternates per-frame pose refinement with a joint linear solve for the shared identity and all
/// per-frame expressions, followed by a joint damped Gauss-Newton step over everything. Every step is
/// kept only if it lowers the objective, so the objective never increases. `warm_start` seeds
/// coefficients and poses.
FitResult fit_identity_expression(const LandmarkObservations& obs, const FaceBasis& basis, const FitConfig& config,
                                  const FitResult* warm_start = nullptr);

/// {"frames": [{"frame": id, "points": [[index, x, y], ...]}, ...]}; an optional fourth entry is the weight.
LandmarkObservations load_landmarks_json(const std::filesystem::path& path);
void save_landmarks_json(const LandmarkObservations& obs, const std::filesystem::path& path);

/// Writes x_id, optional x_alb, per-frame x_exp and pose, and convergence information.
void save_fit_json(const FitResult& fit, const LandmarkObservations& obs, const Eigen::VectorXd* x_alb,
                   const std::filesystem::path& path);

} // namespace hmdcap
