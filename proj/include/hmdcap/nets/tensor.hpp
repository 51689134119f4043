#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace hmdcap::nets {

/// Single-sample activation in channel-major (C, H, W) order; vectors use H = W = 1.
struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    Eigen::VectorXd data;

    Tensor() = default;
    Tensor(int channels, int height, int width) : c(channels), h(height), w(width), data(Eigen::VectorXd::Zero(size())) {}

    Eigen::Index size() const { return static_cast<Eigen::Index>(c) * h * w; }
    double& at(int ch, int y, int x) { return data[(static_cast<Eigen::Index>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return data[(static_cast<Eigen::Index>(ch) * h + y) * w + x]; }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;
    bool operator==(const Shape&) const = default;
    std::string str() const
    {
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

inline Shape shape_of(const Tensor& t)
{
    return {t.c, t.h, t.w};
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace hmdcap::nets
