#pragma once

#include <memory>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmdcap/nets/tensor.hpp"

namespace hmdcap::nets {

struct Param {
    Eigen::VectorXd value;
    Eigen::VectorXd grad;
    Eigen::VectorXd velocity;
    Eigen::VectorXd second; ///< Adam's squared-gradient average, sized on first use
};

/// A layer caches what it needs from the latest forward call; backward must follow the matching forward.
class Layer {
public:
    virtual ~Layer() = default;
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual void forward(const Tensor& in, Tensor& out) = 0;
    /// Returns dL/d(input) and accumulates parameter gradients.
    virtual void backward(const Tensor& grad_out, Tensor& grad_in) = 0;
    virtual std::vector<Param*> params() { return {}; }
    virtual void init(std::mt19937_64&) {}
    virtual nlohmann::json spec() const = 0;
};

class Conv2D : public Layer {
public:
    Conv2D(int in_channels, int out_channels, int kernel_h, int kernel_w, int stride, int padding);

    Shape output_shape(const Shape& in) const override;
    void forward(const Tensor& in, Tensor& out) override;
    void backward(const Tensor& grad_out, Tensor& grad_in) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    void init(std::mt19937_64& rng) override;
    nlohmann::json spec() const override;

    /// Weight (out, in, kh, kw) row-major, then bias.
    Param& weight() { return weight_; }
    Param& bias() { return bias_; }

private:
    int in_c_, out_c_, kh_, kw_, stride_, pad_;
    Param weight_;
    Param bias_;
    Shape in_shape_;
    Shape out_shape_;
    RowMatrix columns_;
};

class ReLU : public Layer {
public:
    Shape output_shape(const Shape& in) const override { return in; }
    void forward(const Tensor& in, Tensor& out) override;
    void backward(const Tensor& grad_out, Tensor& grad_in) override;
    nlohmann::json spec() const override { return {{"type", "relu"}}; }

private:
    Tensor input_;
};

/// Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped.
/// Gradient goes to the first maximal element of each window (row-major scan).
class MaxPool : public Layer {
public:
    MaxPool(int size_h, int size_w) : sh_(size_h), sw_(size_w) {}
    Shape output_shape(const Shape& in) const override;
    void forward(const Tensor& in, Tensor& out) override;
    void backward(const Tensor& grad_out, Tensor& grad_in) override;
    nlohmann::json spec() const override { return {{"type", "maxpool"}, {"size", {sh_, sw_}}}; }

private:
    int sh_, sw_;
    Shape in_shape_;
    std::vector<Eigen::Index> argmax_;
};

/// relu(conv3x3(relu(conv3x3(x))) + x), channels preserved.
class ResidualBlock : public Layer {
public:
    explicit ResidualBlock(int channels);
    Shape output_shape(const Shape& in) const override;
    void forward(const Tensor& in, Tensor& out) override;
    void backward(const Tensor& grad_out, Tensor& grad_in) override;
    std::vector<Param*> params() override;
    void init(std::mt19937_64& rng) override;
    nlohmann::json spec() const override { return {{"type", "residual"}, {"channels", channels_}}; }

    Conv2D& first() { return conv1_; }
    Conv2D& second() { return conv2_; }

private:
    int channels_;
    Conv2D conv1_;
    Conv2D conv2_;
    ReLU relu1_;
    Tensor mid_, act_, branch_, sum_;
};

class GlobalAvgPool : public Layer {
public:
    Shape output_shape(const Shape& in) const override { return {in.c, 1, 1}; }
    void forward(const Tensor& in, Tensor& out) override;
    void backward(const Tensor& grad_out, Tensor& grad_in) override;
    nlohmann::json spec() const override { return {{"type", "gap"}}; }

private:
    Shape in_shape_;
};

/// Fully connected on the flattened input.
class FullyConnected : public Layer {
public:
    FullyConnected(int in_features, int out_features);
    Shape output_shape(const Shape& in) const override;
    void forward(const Tensor& in, Tensor& out) override;
    void backward(const Tensor& grad_out, Tensor& grad_in) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    void init(std::mt19937_64& rng) override;
    nlohmann::json spec() const override { return {{"type", "fc"}, {"out", out_}}; }

    Param& weight() { return weight_; }
    Param& bias() { return bias_; }

private:
    int in_, out_;
    Param weight_;
    Param bias_;
    Shape in_shape_;
    Eigen::VectorXd input_;
};

} // namespace hmdcap::nets
