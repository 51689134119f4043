#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace hmdcap::raster {

/// Twice the signed area of (a, b, p); positive when p is left of a->b in a y-down frame.
inline double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p)
{
    return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

/// Barycentric weights of p; false when p is outside (edges inclusive) or the triangle is degenerate.
inline bool barycentric(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                        const Eigen::Vector2d& p, Eigen::Vector3d& weights)
{
    const double area = edge(a, b, c);
    if (std::abs(area) < 1e-12) {
        return false;
    }
    const double w0 = edge(b, c, p) / area;
    const double w1 = edge(c, a, p) / area;
    const double w2 = edge(a, b, p) / area;
    if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) {
        return false;
    }
    weights = {w0, w1, w2};
    return true;
}

/// Calls fn(row, col, weights) for every pixel centre (x = col, y = row) covered by the triangle.
template <typename Fn>
void for_each_covered_pixel(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c, int rows,
                            int cols, Fn&& fn)
{
    const double min_x = std::min({a.x(), b.x(), c.x()});
    const double max_x = std::max({a.x(), b.x(), c.x()});
    const double min_y = std::min({a.y(), b.y(), c.y()});
    const double max_y = std::max({a.y(), b.y(), c.y()});
    if (!(max_x >= 0.0 && max_y >= 0.0 && min_x <= cols - 1 && min_y <= rows - 1)) {
        return;
    }
    const int c0 = std::max(0, static_cast<int>(std::ceil(min_x)));
    const int c1 = std::min(cols - 1, static_cast<int>(std::floor(max_x)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(min_y)));
    const int r1 = std::min(rows - 1, static_cast<int>(std::floor(max_y)));
    Eigen::Vector3d w;
    for (int r = r0; r <= r1; ++r) {
        for (int col = c0; col <= c1; ++col) {
            if (barycentric(a, b, c, Eigen::Vector2d(col, r), w)) {
                fn(r, col, w);
            }
        }
    }
}

} // namespace hmdcap::raster
