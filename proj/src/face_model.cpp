#include "hmdcap/face_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "hmdcap/binary_io.hpp"
#include "hmdcap/error.hpp"
#include "hmdcap/raster.hpp"

namespace hmdcap {

namespace {

void check_unique(const std::vector<int>& indices, int vertex_count, const char* what)
{
    std::set<int> seen;
    for (int i : indices) {
        if (i < 0 || i >= vertex_count) {
            throw DataError(std::string(what) + ": landmark index out of range");
        }
        if (!seen.insert(i).second) {
            throw DataError(std::string(what) + ": duplicate landmark index " + std::to_string(i));
        }
    }
}

void check_params(const FaceBasis& basis, const FaceParams& params, bool need_albedo)
{
    if (params.x_id.size() != basis.dim_id() || params.x_exp.size() != basis.dim_exp()) {
        throw DimensionError("FaceParams: x_id/x_exp lengths (" + std::to_string(params.x_id.size()) + ", " +
                             std::to_string(params.x_exp.size()) + ") do not match basis (" +
                             std::to_string(basis.dim_id()) + ", " + std::to_string(basis.dim_exp()) + ")");
    }
    if (need_albedo && params.x_alb.size() != basis.dim_alb()) {
        throw DimensionError("FaceParams: x_alb length " + std::to_string(params.x_alb.size()) +
                             " does not match basis " + std::to_string(basis.dim_alb()));
    }
}

} // namespace

void FaceBasis::validate() const
{
    const Eigen::Index n3 = mean_shape.size();
    if (n3 == 0 || n3 % 3 != 0) {
        throw DimensionError("FaceBasis: mean_shape length must be a positive multiple of 3");
    }
    if (mean_albedo.size() != n3 || axes_id.rows() != n3 || axes_exp.rows() != n3 || axes_alb.rows() != n3) {
        throw DimensionError("FaceBasis: component row counts disagree with 3N");
    }
    if (sigma_id.size() != axes_id.cols() || sigma_exp.size() != axes_exp.cols() ||
        sigma_alb.size() != axes_alb.cols()) {
        throw DimensionError("FaceBasis: sigma lengths disagree with axis counts");
    }
    if ((sigma_id.array() <= 0).any() || (sigma_exp.array() <= 0).any() || (sigma_alb.array() <= 0).any()) {
        throw DataError("FaceBasis: sigma entries must be positive");
    }
    if (!triangles) {
        throw DataError("FaceBasis: missing topology");
    }
    for (const Triangle& t : *triangles) {
        for (int i : t) {
            if (i < 0 || i >= vertex_count()) {
                throw DataError("FaceBasis: triangle index out of range");
            }
        }
    }
    check_unique(landmark_indices_lower, vertex_count(), "lower landmarks");
    check_unique(landmark_indices_mouth, vertex_count(), "mouth landmarks");
}

double FaceBasis::orthonormality_error() const
{
    double worst = 0.0;
    for (const Eigen::MatrixXd* axes : {&axes_id, &axes_exp, &axes_alb}) {
        const Eigen::MatrixXd gram = axes->transpose() * *axes;
        worst = std::max(worst, (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff());
    }
    return worst;
}

FaceParams FaceParams::zeros(const FaceBasis& basis)
{
    return {Eigen::VectorXd::Zero(basis.dim_id()), Eigen::VectorXd::Zero(basis.dim_exp()),
            Eigen::VectorXd::Zero(basis.dim_alb())};
}

Pose::Pose() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector2d::Zero()), scale_(1.0) {}

Pose::Pose(const Eigen::Matrix3d& rotation, const Eigen::Vector2d& translation, double scale)
    : rotation_(rotation), translation_(translation), scale_(scale)
{
    if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(scale)) {
        throw std::invalid_argument("Pose: non-finite values");
    }
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-10 || std::abs(rotation.determinant() - 1.0) > 1e-10) {
        throw std::invalid_argument("Pose: rotation is not a proper orthonormal matrix");
    }
    if (scale <= 0.0) {
        throw std::invalid_argument("Pose: scale must be positive");
    }
}

Pose Pose::from_angles(double yaw, double pitch, double roll, const Eigen::Vector2d& translation, double scale)
{
    const Eigen::Matrix3d r = (Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ()) *
                               Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()) *
                               Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()))
                                  .toRotationMatrix();
    return Pose(r, translation, scale);
}

Pose Pose::with_translation(const Eigen::Vector2d& translation) const
{
    Pose p = *this;
    p.translation_ = translation;
    return p;
}

Pose Pose::with_scale(double scale) const
{
    return Pose(rotation_, translation_, scale);
}

void Mesh::validate() const
{
    if (vertices.size() % 3 != 0 || !triangles) {
        throw DataError("Mesh: malformed vertex array or missing topology");
    }
    int max_index = -1;
    for (const Triangle& t : *triangles) {
        for (int i : t) {
            if (i < 0) {
                throw DataError("Mesh: negative triangle index");
            }
            max_index = std::max(max_index, i);
        }
    }
    if (max_index + 1 != vertex_count()) {
        throw DataError("Mesh: vertex count " + std::to_string(vertex_count()) + " != max index + 1 (" +
                        std::to_string(max_index + 1) + ")");
    }
}

Mesh evaluate_shape(const FaceBasis& basis, const FaceParams& params)
{
    check_params(basis, params, false);
    Mesh mesh;
    mesh.vertices = basis.mean_shape + basis.axes_id * params.x_id + basis.axes_exp * params.x_exp;
    mesh.triangles = basis.triangles;
    return mesh;
}

Eigen::VectorXd evaluate_albedo(const FaceBasis& basis, const FaceParams& params)
{
    if (params.x_alb.size() != basis.dim_alb()) {
        throw DimensionError("FaceParams: x_alb length does not match basis");
    }
    return basis.mean_albedo + basis.axes_alb * params.x_alb;
}

Eigen::Vector2d project(const Pose& pose, const Eigen::Vector3d& vertex)
{
    return pose.scale() * (pose.rotation() * vertex).head<2>() + pose.translation();
}

Eigen::Vector3d to_camera(const Pose& pose, const Eigen::Vector3d& vertex)
{
    const Eigen::Vector3d r = pose.rotation() * vertex;
    return {pose.scale() * r.x() + pose.translation().x(), pose.scale() * r.y() + pose.translation().y(),
            pose.scale() * r.z()};
}

namespace {

struct CameraTriangle {
    Eigen::Vector2d a, b, c;
    Eigen::Vector3d depth;
};

std::vector<Eigen::Vector3d> camera_vertices(const Mesh& mesh, const Pose& pose)
{
    std::vector<Eigen::Vector3d> out(mesh.vertex_count());
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        out[i] = to_camera(pose, mesh.vertex(i));
    }
    return out;
}

void append_triangles(const Mesh& mesh, const std::vector<Eigen::Vector3d>& cam, std::vector<CameraTriangle>& out)
{
    for (const Triangle& t : *mesh.triangles) {
        const Eigen::Vector3d& p0 = cam[t[0]];
        const Eigen::Vector3d& p1 = cam[t[1]];
        const Eigen::Vector3d& p2 = cam[t[2]];
        out.push_back({p0.head<2>(), p1.head<2>(), p2.head<2>(), {p0.z(), p1.z(), p2.z()}});
    }
}

std::vector<int> visible_ray_cast(const std::vector<Eigen::Vector3d>& cam, const std::vector<CameraTriangle>& tris,
                                  double tolerance)
{
    Eigen::Vector2d lo = cam.front().head<2>();
    Eigen::Vector2d hi = lo;
    for (const auto& p : cam) {
        lo = lo.cwiseMin(p.head<2>());
        hi = hi.cwiseMax(p.head<2>());
    }
    const int cells = std::clamp(static_cast<int>(std::sqrt(static_cast<double>(tris.size()))), 1, 256);
    const Eigen::Vector2d extent = (hi - lo).cwiseMax(Eigen::Vector2d::Constant(1e-12));
    const Eigen::Vector2d cell_size = extent / cells;
    auto cell_of = [&](double v, int axis) {
        return std::clamp(static_cast<int>(std::floor((v - lo[axis]) / cell_size[axis])), 0, cells - 1);
    };

    std::vector<std::vector<int>> grid(static_cast<std::size_t>(cells) * cells);
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
        const CameraTriangle& tri = tris[t];
        const Eigen::Vector2d tmin = tri.a.cwiseMin(tri.b).cwiseMin(tri.c);
        const Eigen::Vector2d tmax = tri.a.cwiseMax(tri.b).cwiseMax(tri.c);
        if (tmax.x() < lo.x() || tmax.y() < lo.y() || tmin.x() > hi.x() || tmin.y() > hi.y()) {
            continue;
        }
        for (int gy = cell_of(tmin.y(), 1); gy <= cell_of(tmax.y(), 1); ++gy) {
            for (int gx = cell_of(tmin.x(), 0); gx <= cell_of(tmax.x(), 0); ++gx) {
                grid[static_cast<std::size_t>(gy) * cells + gx].push_back(t);
            }
        }
    }

    std::vector<int> visible;
    Eigen::Vector3d w;
    for (int i = 0; i < static_cast<int>(cam.size()); ++i) {
        const Eigen::Vector2d p = cam[i].head<2>();
        bool occluded = false;
        for (int t : grid[static_cast<std::size_t>(cell_of(p.y(), 1)) * cells + cell_of(p.x(), 0)]) {
            const CameraTriangle& tri = tris[t];
            if (raster::barycentric(tri.a, tri.b, tri.c, p, w) && w.dot(tri.depth) < cam[i].z() - tolerance) {
                occluded = true;
                break;
            }
        }
        if (!occluded) {
            visible.push_back(i);
        }
    }
    return visible;
}

std::vector<int> visible_z_buffer(const std::vector<Eigen::Vector3d>& cam, const std::vector<CameraTriangle>& tris,
                                  double tolerance)
{
    constexpr int kResolution = 512;
    Eigen::Vector2d lo = cam.front().head<2>();
    Eigen::Vector2d hi = lo;
    for (const auto& p : cam) {
        lo = lo.cwiseMin(p.head<2>());
        hi = hi.cwiseMax(p.head<2>());
    }
    const double spacing = std::max((hi - lo).maxCoeff(), 1e-9) / (kResolution - 1);
    const int cols = static_cast<int>(std::ceil((hi.x() - lo.x()) / spacing)) + 1;
    const int rows = static_cast<int>(std::ceil((hi.y() - lo.y()) / spacing)) + 1;
    auto to_grid = [&](const Eigen::Vector2d& p) -> Eigen::Vector2d { return (p - lo) / spacing; };

    std::vector<double> depth(static_cast<std::size_t>(rows) * cols, std::numeric_limits<double>::infinity());
    std::vector<int> owner(depth.size(), -1);
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
        const CameraTriangle& tri = tris[t];
        raster::for_each_covered_pixel(to_grid(tri.a), to_grid(tri.b), to_grid(tri.c), rows, cols,
                                       [&](int r, int c, const Eigen::Vector3d& w) {
                                           const double z = w.dot(tri.depth);
                                           const std::size_t k = static_cast<std::size_t>(r) * cols + c;
                                           if (z < depth[k]) {
                                               depth[k] = z;
                                               owner[k] = t;
                                           }
                                       });
    }

    std::vector<int> visible;
    for (int i = 0; i < static_cast<int>(cam.size()); ++i) {
        const Eigen::Vector2d g = to_grid(cam[i].head<2>());
        const int r = std::clamp(static_cast<int>(std::lround(g.y())), 0, rows - 1);
        const int c = std::clamp(static_cast<int>(std::lround(g.x())), 0, cols - 1);
        const int t = owner[static_cast<std::size_t>(r) * cols + c];
        bool occluded = false;
        if (t >= 0) {
            const CameraTriangle& tri = tris[t];
            const double area = raster::edge(tri.a, tri.b, tri.c);
            const Eigen::Vector2d p = cam[i].head<2>();
            const Eigen::Vector3d w(raster::edge(tri.b, tri.c, p) / area, raster::edge(tri.c, tri.a, p) / area,
                                    raster::edge(tri.a, tri.b, p) / area);
            occluded = w.dot(tri.depth) < cam[i].z() - tolerance;
        }
        if (!occluded) {
            visible.push_back(i);
        }
    }
    return visible;
}

} // namespace

std::vector<int> visible_vertices(const Mesh& mesh, const Pose& pose, std::span<const PosedMesh> occluders,
                                  VisibilityMethod method)
{
    if (mesh.vertex_count() == 0 || !mesh.triangles) {
        return {};
    }
    const std::vector<Eigen::Vector3d> cam = camera_vertices(mesh, pose);
    std::vector<CameraTriangle> tris;
    append_triangles(mesh, cam, tris);
    for (const PosedMesh& occluder : occluders) {
        append_triangles(*occluder.mesh, camera_vertices(*occluder.mesh, occluder.pose), tris);
    }
    const double tolerance = kDepthTolerance * pose.scale();
    return method == VisibilityMethod::ray_cast ? visible_ray_cast(cam, tris, tolerance)
                                                : visible_z_buffer(cam, tris, tolerance);
}

std::vector<Eigen::Vector3d> evaluate_vertices(const FaceBasis& basis, const FaceParams& params,
                                               std::span<const int> indices)
{
    check_params(basis, params, false);
    std::vector<Eigen::Vector3d> out;
    out.reserve(indices.size());
    for (int i : indices) {
        out.push_back(basis.mean_shape.segment<3>(3 * i) + basis.axes_id.middleRows<3>(3 * i) * params.x_id +
                      basis.axes_exp.middleRows<3>(3 * i) * params.x_exp);
    }
    return out;
}

std::vector<Eigen::Vector2d> landmarks_2d(const FaceBasis& basis, const FaceParams& params, const Pose& pose,
                                          LandmarkSet which)
{
    const std::vector<int>& indices =
        which == LandmarkSet::lower ? basis.landmark_indices_lower : basis.landmark_indices_mouth;
    std::vector<Eigen::Vector2d> out;
    out.reserve(indices.size());
    for (const Eigen::Vector3d& v : evaluate_vertices(basis, params, indices)) {
        out.push_back(project(pose, v));
    }
    return out;
}

namespace {

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m)
{
    // column-major, as Eigen stores it
    binary::write_reals(out, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

void read_matrix(std::istream& in, Eigen::MatrixXd& m)
{
    binary::read_reals(in, std::span<double>(m.data(), static_cast<std::size_t>(m.size())));
}

std::filesystem::path sidecar_path(const std::filesystem::path& path)
{
    return std::filesystem::path(path.string() + ".json");
}

} // namespace

void save_basis(const FaceBasis& basis, const std::filesystem::path& path, const BasisProvenance& provenance)
{
    basis.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path.string());
    }
    binary::write_magic(out, "FEB1");
    for (std::size_t v : {static_cast<std::size_t>(basis.vertex_count()), static_cast<std::size_t>(basis.dim_id()),
                          static_cast<std::size_t>(basis.dim_exp()), static_cast<std::size_t>(basis.dim_alb()),
                          basis.triangles->size(), basis.landmark_indices_lower.size(),
                          basis.landmark_indices_mouth.size()}) {
        binary::write(out, static_cast<std::uint32_t>(v));
    }
    write_matrix(out, basis.mean_shape);
    write_matrix(out, basis.mean_albedo);
    write_matrix(out, basis.axes_id);
    write_matrix(out, basis.axes_exp);
    write_matrix(out, basis.axes_alb);
    write_matrix(out, basis.sigma_id);
    write_matrix(out, basis.sigma_exp);
    write_matrix(out, basis.sigma_alb);
    for (const Triangle& t : *basis.triangles) {
        for (int i : t) {
            binary::write(out, static_cast<std::uint32_t>(i));
        }
    }
    for (int i : basis.landmark_indices_lower) {
        binary::write(out, static_cast<std::uint32_t>(i));
    }
    for (int i : basis.landmark_indices_mouth) {
        binary::write(out, static_cast<std::uint32_t>(i));
    }
    if (!out) {
        throw DataError("write failed: " + path.string());
    }

    nlohmann::json sidecar = {{"format", "FEB1"},
                              {"seed", provenance.seed},
                              {"preset", provenance.preset},
                              {"vertex_count", basis.vertex_count()},
                              {"dim_id", basis.dim_id()},
                              {"dim_exp", basis.dim_exp()},
                              {"dim_alb", basis.dim_alb()}};
    std::ofstream side(sidecar_path(path));
    side << sidecar.dump(2) << '\n';
    if (!side) {
        throw DataError("write failed: " + sidecar_path(path).string());
    }
}

FaceBasis load_basis(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open basis: " + path.string());
    }
    binary::expect_magic(in, "FEB1");
    std::uint32_t header[7];
    for (auto& h : header) {
        h = binary::read<std::uint32_t>(in);
    }
    const auto [n, d_id, d_exp, d_alb, tri_count, n_lower, n_mouth] =
        std::tuple(header[0], header[1], header[2], header[3], header[4], header[5], header[6]);
    if (n == 0 || n > (1u << 24) || d_id > 3 * n || d_exp > 3 * n || d_alb > 3 * n) {
        throw DataError("implausible basis header: " + path.string());
    }
    FaceBasis basis;
    basis.mean_shape.resize(3 * n);
    basis.mean_albedo.resize(3 * n);
    basis.axes_id.resize(3 * n, d_id);
    basis.axes_exp.resize(3 * n, d_exp);
    basis.axes_alb.resize(3 * n, d_alb);
    basis.sigma_id.resize(d_id);
    basis.sigma_exp.resize(d_exp);
    basis.sigma_alb.resize(d_alb);
    auto read_vec = [&](Eigen::VectorXd& v) {
        binary::read_reals(in, std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
    };
    read_vec(basis.mean_shape);
    read_vec(basis.mean_albedo);
    read_matrix(in, basis.axes_id);
    read_matrix(in, basis.axes_exp);
    read_matrix(in, basis.axes_alb);
    read_vec(basis.sigma_id);
    read_vec(basis.sigma_exp);
    read_vec(basis.sigma_alb);
    auto topology = std::make_shared<Topology>(tri_count);
    for (Triangle& t : *topology) {
        for (int& i : t) {
            i = static_cast<int>(binary::read<std::uint32_t>(in));
        }
    }
    basis.triangles = std::move(topology);
    basis.landmark_indices_lower.resize(n_lower);
    basis.landmark_indices_mouth.resize(n_mouth);
    for (int& i : basis.landmark_indices_lower) {
        i = static_cast<int>(binary::read<std::uint32_t>(in));
    }
    for (int& i : basis.landmark_indices_mouth) {
        i = static_cast<int>(binary::read<std::uint32_t>(in));
    }
    basis.validate();
    return basis;
}

BasisProvenance load_basis_provenance(const std::filesystem::path& path)
{
    std::ifstream in(sidecar_path(path));
    if (!in) {
        throw DataError("missing basis sidecar: " + sidecar_path(path).string());
    }
    const nlohmann::json j = nlohmann::json::parse(in);
    return {j.at("seed").get<std::uint64_t>(), j.at("preset").get<std::string>()};
}

} // namespace hmdcap
