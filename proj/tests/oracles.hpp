// Independent reference implementations used as test oracles.
#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "hmdcap/face_model.hpp"

namespace oracle {

/// Moller-Trumbore ray/triangle intersection; returns the ray parameter of the hit.
inline std::optional<double> ray_triangle(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                                          const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c)
{
    const Eigen::Vector3d e1 = b - a;
    const Eigen::Vector3d e2 = c - a;
    const Eigen::Vector3d p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) {
        return std::nullopt;
    }
    const double inv = 1.0 / det;
    const Eigen::Vector3d s = origin - a;
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) {
        return std::nullopt;
    }
    const Eigen::Vector3d q = s.cross(e1);
    const double v = dir.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) {
        return std::nullopt;
    }
    return e2.dot(q) * inv;
}

/// Brute force over every (vertex, triangle) pair: a vertex is hidden when some triangle of the mesh
/// or of an occluder is hit nearer than its own depth minus tolerance along the +z camera ray.
inline std::vector<int> visible_vertices(const hmdcap::Mesh& mesh, const hmdcap::Pose& pose,
                                         const std::vector<hmdcap::PosedMesh>& occluders, double tolerance)
{
    struct Tri {
        Eigen::Vector3d a, b, c;
    };
    std::vector<Tri> tris;
    auto add = [&](const hmdcap::Mesh& m, const hmdcap::Pose& p) {
        for (const auto& t : *m.triangles) {
            tris.push_back({hmdcap::to_camera(p, m.vertex(t[0])), hmdcap::to_camera(p, m.vertex(t[1])),
                            hmdcap::to_camera(p, m.vertex(t[2]))});
        }
    };
    add(mesh, pose);
    for (const auto& o : occluders) {
        add(*o.mesh, o.pose);
    }
    std::vector<int> visible;
    const Eigen::Vector3d dir(0.0, 0.0, 1.0);
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        const Eigen::Vector3d v = hmdcap::to_camera(pose, mesh.vertex(i));
        const Eigen::Vector3d origin(v.x(), v.y(), v.z() - 1e6);
        bool hidden = false;
        for (const Tri& t : tris) {
            const auto hit = ray_triangle(origin, dir, t.a, t.b, t.c);
            if (hit && origin.z() + *hit < v.z() - tolerance) {
                hidden = true;
                break;
            }
        }
        if (!hidden) {
            visible.push_back(i);
        }
    }
    return visible;
}

/// Strict point-in-triangle by sign of the three edge functions (either winding).
inline bool inside_triangle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                            const Eigen::Vector2d& p)
{
    auto cross = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v, const Eigen::Vector2d& w) {
        return (v.x() - u.x()) * (w.y() - u.y()) - (v.y() - u.y()) * (w.x() - u.x());
    };
    const double d1 = cross(a, b, p);
    const double d2 = cross(b, c, p);
    const double d3 = cross(c, a, p);
    const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
    const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
    return !(neg && pos);
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}

/// Random small basis: vertices on a jittered grid, triangles from the grid, random orthonormal axes.
inline hmdcap::FaceBasis random_basis(std::mt19937_64& rng, int grid, int d_id, int d_exp, int d_alb)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    hmdcap::FaceBasis b;
    const int n = grid * grid;
    b.mean_shape.resize(3 * n);
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            const int i = r * grid + c;
            b.mean_shape.segment<3>(3 * i) = Eigen::Vector3d(c + 0.2 * u(rng), r + 0.2 * u(rng), 0.3 * u(rng));
        }
    }
    b.mean_albedo = (Eigen::VectorXd::Random(3 * n).array() * 0.3 + 0.5).matrix();
    auto axes = [&](int d) {
        Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(3 * n, d, [&]() { return u(rng); });
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
        return Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(3 * n, d));
    };
    b.axes_id = axes(d_id);
    b.axes_exp = axes(d_exp);
    b.axes_alb = axes(d_alb);
    auto sig = [](int d) {
        Eigen::VectorXd s(d);
        for (int k = 0; k < d; ++k) {
            s(k) = std::pow(0.9, k);
        }
        return s;
    };
    b.sigma_id = sig(d_id);
    b.sigma_exp = sig(d_exp);
    b.sigma_alb = sig(d_alb);
    auto tris = std::make_shared<hmdcap::Topology>();
    for (int r = 0; r + 1 < grid; ++r) {
        for (int c = 0; c + 1 < grid; ++c) {
            const int i = r * grid + c;
            tris->push_back({i, i + 1, i + grid});
            tris->push_back({i + 1, i + grid + 1, i + grid});
        }
    }
    b.triangles = tris;
    for (int i = 0; i < std::min(n, 29); ++i) {
        b.landmark_indices_lower.push_back(i);
    }
    b.landmark_indices_mouth = {0, 1, 2, 3, 4, 5};
    return b;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int n, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) {
        v(i) = g(rng);
    }
    return v;
}

/// Random triangle soup in [-10, 10]^3 whose every vertex is referenced.
inline hmdcap::FaceParams random_params(std::mt19937_64& rng, const hmdcap::FaceBasis& b)
{
    return {oracle::random_vector(rng, b.dim_id()), oracle::random_vector(rng, b.dim_exp()),
            oracle::random_vector(rng, b.dim_alb())};
}

inline hmdcap::Mesh random_soup(std::mt19937_64& rng, int triangles)
{
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    const int n = triangles * 3 / 2 + 3;
    hmdcap::Mesh m;
    m.vertices.resize(3 * n);
    for (int i = 0; i < 3 * n; ++i) {
        m.vertices(i) = u(rng);
    }
    auto tris = std::make_shared<hmdcap::Topology>();
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int t = 0; t < triangles; ++t) {
        int a = (3 * t) % n;
        int b = pick(rng);
        int c = pick(rng);
        while (b == a) b = pick(rng);
        while (c == a || c == b) c = pick(rng);
        tris->push_back({a, b, c});
    }
    // make sure the last vertex is referenced
    tris->back()[0] = n - 1;
    if (tris->back()[1] == n - 1 || tris->back()[2] == n - 1) {
        tris->back() = {n - 1, 0, 1};
    }
    m.triangles = tris;
    return m;
}

/// Axis-aligned closed box.
inline hmdcap::Mesh box(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi)
{
    hmdcap::Mesh m;
    m.vertices.resize(24);
    for (int i = 0; i < 8; ++i) {
        m.vertices.segment<3>(3 * i) =
            Eigen::Vector3d(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
    }
    m.triangles = std::make_shared<hmdcap::Topology>(hmdcap::Topology{{0, 1, 3}, {0, 3, 2}, {4, 7, 5}, {4, 6, 7}, {0, 4, 5},
                                                      {0, 5, 1}, {2, 3, 7}, {2, 7, 6}, {0, 2, 6}, {0, 6, 4},
                                                      {1, 5, 7}, {1, 7, 3}});
    return m;
}

} // namespace oracle
