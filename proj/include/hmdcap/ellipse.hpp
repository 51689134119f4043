#pragma once

#include <cmath>

#include <Eigen/Core>

namespace hmdcap {

/// Ellipse in image coordinates; orientation is the major-axis angle from +x, in [0, pi).
struct EllipseFit {
    Eigen::Vector2d centre = Eigen::Vector2d::Zero();
    double a = 0.0; ///< semi-major
    double b = 0.0; ///< semi-minor
    double orientation = 0.0;

    /// (u/a)^2 + (v/b)^2 in the ellipse frame; <= 1 inside.
    double level(const Eigen::Vector2d& p) const
    {
        const double c = std::cos(orientation);
        const double s = std::sin(orientation);
        const Eigen::Vector2d d = p - centre;
        const double u = c * d.x() + s * d.y();
        const double v = -s * d.x() + c * d.y();
        return (u / a) * (u / a) + (v / b) * (v / b);
    }

    bool contains(const Eigen::Vector2d& p) const { return level(p) <= 1.0; }
    double area() const { return 3.14159265358979323846 * a * b; }
};

} // namespace hmdcap
