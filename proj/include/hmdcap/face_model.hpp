#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hmdcap {

using Triangle = std::array<int, 3>;
using Topology = std::vector<Triangle>;

/// Linear 3D morphable model. Vertex data is stored as (x0, y0, z0, x1, ...).
/// Object space is image aligned: x right, y down, z away from the viewer.
struct FaceBasis {
    Eigen::VectorXd mean_shape;
    Eigen::VectorXd mean_albedo; // RGB per vertex, nominally in [0, 1]
    Eigen::MatrixXd axes_id;
    Eigen::MatrixXd axes_exp;
    Eigen::MatrixXd axes_alb;
    Eigen::VectorXd sigma_id;
    Eigen::VectorXd sigma_exp;
    Eigen::VectorXd sigma_alb;
    std::shared_ptr<const Topology> triangles;
    std::vector<int> landmark_indices_lower;
    std::vector<int> landmark_indices_mouth;

    int vertex_count() const { return static_cast<int>(mean_shape.size() / 3); }
    int dim_id() const { return static_cast<int>(axes_id.cols()); }
    int dim_exp() const { return static_cast<int>(axes_exp.cols()); }
    int dim_alb() const { return static_cast<int>(axes_alb.cols()); }

    /// Throws DimensionError / DataError when any structural invariant is broken.
    /// Orthonormality is checked separately (it is a numerical property).
    void validate() const;

    /// max |AᵀA - I| over the three axis sets.
    double orthonormality_error() const;
};

struct FaceParams {
    Eigen::VectorXd x_id;
    Eigen::VectorXd x_exp;
    Eigen::VectorXd x_alb;

    /// All-zero coefficients sized for the basis.
    static FaceParams zeros(const FaceBasis& basis);
};

/// Weak-perspective pose: p = s * [I2 0] * R * v + t.
class Pose {
public:
    /// Identity rotation, zero translation, unit scale.
    Pose();

    /// Rejects rotations that are not orthonormal with det +1 (within 1e-10) and s <= 0.
    Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector2d& translation, double scale);

    /// R = Rz(roll) * Rx(pitch) * Ry(yaw).
    static Pose from_angles(double yaw, double pitch, double roll, const Eigen::Vector2d& translation, double scale);

    const Eigen::Matrix3d& rotation() const { return rotation_; }
    const Eigen::Vector2d& translation() const { return translation_; }
    double scale() const { return scale_; }

    Pose with_translation(const Eigen::Vector2d& translation) const;
    Pose with_scale(double scale) const;

    bool operator==(const Pose&) const = default;

private:
    Eigen::Matrix3d rotation_;
    Eigen::Vector2d translation_;
    double scale_;
};

/// Vertex positions over a shared topology.
struct Mesh {
    Eigen::VectorXd vertices;
    std::shared_ptr<const Topology> triangles;

    int vertex_count() const { return static_cast<int>(vertices.size() / 3); }
    Eigen::Vector3d vertex(int i) const { return vertices.segment<3>(3 * i); }

    /// Every vertex must be referenced: vertex count == max index + 1.
    void validate() const;
};

/// A mesh together with the pose that places it in the image.
struct PosedMesh {
    const Mesh* mesh;
    Pose pose;
};

enum class LandmarkSet { lower, mouth };

enum class VisibilityMethod {
    ray_cast, ///< exact per-vertex depth test, grid accelerated
    z_buffer, ///< triangle-id raster, then an exact plane test against the winning triangle
};

inline constexpr double kDepthTolerance = 1e-6;

Mesh evaluate_shape(const FaceBasis& basis, const FaceParams& params);

/// Raw per-vertex RGB albedo; clamping happens at render time.
Eigen::VectorXd evaluate_albedo(const FaceBasis& basis, const FaceParams& params);

Eigen::Vector2d project(const Pose& pose, const Eigen::Vector3d& vertex);

/// Camera-space position (x, y in pixels, z = s * (R v).z; smaller z is nearer).
Eigen::Vector3d to_camera(const Pose& pose, const Eigen::Vector3d& vertex);

/// Indices (ascending) of mesh vertices that no triangle of the mesh or of an occluder covers
/// at a depth nearer than kDepthTolerance (scaled by the mesh pose scale) along the viewing ray.
std::vector<int> visible_vertices(const Mesh& mesh, const Pose& pose, std::span<const PosedMesh> occluders,
                                  VisibilityMethod method = VisibilityMethod::ray_cast);

/// Shape vertices for a subset of indices, without evaluating the full mesh.
std::vector<Eigen::Vector3d> evaluate_vertices(const FaceBasis& basis, const FaceParams& params,
                                               std::span<const int> indices);

std::vector<Eigen::Vector2d> landmarks_2d(const FaceBasis& basis, const FaceParams& params, const Pose& pose,
                                          LandmarkSet which);

/// Binary "FEB1" file plus a JSON sidecar (path + ".json") carrying provenance.
struct BasisProvenance {
    std::uint64_t seed = 0;
    std::string preset;
};

void save_basis(const FaceBasis& basis, const std::filesystem::path& path, const BasisProvenance& provenance);
FaceBasis load_basis(const std::filesystem::path& path);
BasisProvenance load_basis_provenance(const std::filesystem::path& path);

} // namespace hmdcap
