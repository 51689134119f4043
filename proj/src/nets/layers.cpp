#include "hmdcap/nets/layers.hpp"

#include <cmath>
#include <limits>

#include "hmdcap/error.hpp"

namespace hmdcap::nets {

namespace {

void he_normal(Eigen::VectorXd& v, int fan_in, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / fan_in));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = n(rng);
    }
}

void allocate(Param& p, Eigen::Index n)
{
    p.value = Eigen::VectorXd::Zero(n);
    p.grad = Eigen::VectorXd::Zero(n);
    p.velocity = Eigen::VectorXd::Zero(n);
}

void expect_shape(const Shape& got, const Shape& want, const char* layer)
{
    if (!(got == want)) {
        throw DimensionError(std::string(layer) + ": expected input " + want.str() + ", got " + got.str());
    }
}

} // namespace

Conv2D::Conv2D(int in_channels, int out_channels, int kernel_h, int kernel_w, int stride, int padding)
    : in_c_(in_channels), out_c_(out_channels), kh_(kernel_h), kw_(kernel_w), stride_(stride), pad_(padding)
{
    if (in_c_ < 1 || out_c_ < 1 || kh_ < 1 || kw_ < 1 || stride_ < 1 || pad_ < 0) {
        throw std::invalid_argument("Conv2D: invalid geometry");
    }
    allocate(weight_, static_cast<Eigen::Index>(out_c_) * in_c_ * kh_ * kw_);
    allocate(bias_, out_c_);
}

Shape Conv2D::output_shape(const Shape& in) const
{
    if (in.c != in_c_) {
        throw DimensionError("Conv2D: expected " + std::to_string(in_c_) + " input channels, got " +
                             std::to_string(in.c));
    }
    const int oh = (in.h + 2 * pad_ - kh_) / stride_ + 1;
    const int ow = (in.w + 2 * pad_ - kw_) / stride_ + 1;
    if (in.h + 2 * pad_ < kh_ || in.w + 2 * pad_ < kw_) {
        throw DimensionError("Conv2D: input " + in.str() + " smaller than the kernel");
    }
    return {out_c_, oh, ow};
}

void Conv2D::init(std::mt19937_64& rng)
{
    he_normal(weight_.value, in_c_ * kh_ * kw_, rng);
    bias_.value.setZero();
}

nlohmann::json Conv2D::spec() const
{
    return {{"type", "conv"}, {"kernel", {kh_, kw_}}, {"channels", out_c_}, {"stride", stride_}, {"padding", pad_}};
}

void Conv2D::forward(const Tensor& in, Tensor& out)
{
    in_shape_ = shape_of(in);
    out_shape_ = output_shape(in_shape_);
    const int oh = out_shape_.h;
    const int ow = out_shape_.w;
    const Eigen::Index k = static_cast<Eigen::Index>(in_c_) * kh_ * kw_;
    const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
    columns_.resize(k, p);
    for (int c = 0; c < in_c_; ++c) {
        for (int ky = 0; ky < kh_; ++ky) {
            for (int kx = 0; kx < kw_; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * kh_ + ky) * kw_ + kx;
                double* dst = columns_.row(row).data();
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride_ + ky - pad_;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride_ + kx - pad_;
                        dst[oy * ow + ox] =
                            (iy >= 0 && iy < in.h && ix >= 0 && ix < in.w) ? in.at(c, iy, ix) : 0.0;
                    }
                }
            }
        }
    }
    out = Tensor(out_c_, oh, ow);
    const Eigen::Map<const RowMatrix> w(weight_.value.data(), out_c_, k);
    Eigen::Map<RowMatrix> o(out.data.data(), out_c_, p);
    o.noalias() = w * columns_;
    o.colwise() += bias_.value;
}

void Conv2D::backward(const Tensor& grad_out, Tensor& grad_in)
{
    expect_shape(shape_of(grad_out), out_shape_, "Conv2D backward");
    const int oh = out_shape_.h;
    const int ow = out_shape_.w;
    const Eigen::Index k = static_cast<Eigen::Index>(in_c_) * kh_ * kw_;
    const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
    const Eigen::Map<const RowMatrix> g(grad_out.data.data(), out_c_, p);
    Eigen::Map<RowMatrix> gw(weight_.grad.data(), out_c_, k);
    gw.noalias() += g * columns_.transpose();
    bias_.grad += g.rowwise().sum();

    const Eigen::Map<const RowMatrix> w(weight_.value.data(), out_c_, k);
    const RowMatrix gcols = w.transpose() * g;
    grad_in = Tensor(in_shape_.c, in_shape_.h, in_shape_.w);
    for (int c = 0; c < in_c_; ++c) {
        for (int ky = 0; ky < kh_; ++ky) {
            for (int kx = 0; kx < kw_; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * kh_ + ky) * kw_ + kx;
                const double* src = gcols.row(row).data();
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride_ + ky - pad_;
                    if (iy < 0 || iy >= in_shape_.h) {
                        continue;
                    }
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride_ + kx - pad_;
                        if (ix >= 0 && ix < in_shape_.w) {
                            grad_in.at(c, iy, ix) += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

void ReLU::forward(const Tensor& in, Tensor& out)
{
    input_ = in;
    out = in;
    out.data = in.data.cwiseMax(0.0);
}

void ReLU::backward(const Tensor& grad_out, Tensor& grad_in)
{
    if (!grad_out.same_shape(input_)) {
        throw DimensionError("ReLU backward: shape mismatch");
    }
    grad_in = grad_out;
    grad_in.data = (input_.data.array() > 0.0).select(grad_out.data, 0.0);
}

Shape MaxPool::output_shape(const Shape& in) const
{
    if (in.h < sh_ || in.w < sw_) {
        throw DimensionError("MaxPool: input " + in.str() + " smaller than the window");
    }
    return {in.c, in.h / sh_, in.w / sw_};
}

void MaxPool::forward(const Tensor& in, Tensor& out)
{
    in_shape_ = shape_of(in);
    const Shape os = output_shape(in_shape_);
    out = Tensor(os.c, os.h, os.w);
    argmax_.assign(static_cast<std::size_t>(out.size()), 0);
    for (int c = 0; c < os.c; ++c) {
        for (int oy = 0; oy < os.h; ++oy) {
            for (int ox = 0; ox < os.w; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                Eigen::Index best_index = 0;
                for (int dy = 0; dy < sh_; ++dy) {
                    for (int dx = 0; dx < sw_; ++dx) {
                        const int y = oy * sh_ + dy;
                        const int x = ox * sw_ + dx;
                        const double v = in.at(c, y, x);
                        if (v > best) {
                            best = v;
                            best_index = (static_cast<Eigen::Index>(c) * in.h + y) * in.w + x;
                        }
                    }
                }
                const Eigen::Index o = (static_cast<Eigen::Index>(c) * os.h + oy) * os.w + ox;
                out.data[o] = best;
                argmax_[static_cast<std::size_t>(o)] = best_index;
            }
        }
    }
}

void MaxPool::backward(const Tensor& grad_out, Tensor& grad_in)
{
    if (grad_out.size() != static_cast<Eigen::Index>(argmax_.size())) {
        throw DimensionError("MaxPool backward: shape mismatch");
    }
    grad_in = Tensor(in_shape_.c, in_shape_.h, in_shape_.w);
    for (Eigen::Index o = 0; o < grad_out.size(); ++o) {
        grad_in.data[argmax_[static_cast<std::size_t>(o)]] += grad_out.data[o];
    }
}

ResidualBlock::ResidualBlock(int channels)
    : channels_(channels), conv1_(channels, channels, 3, 3, 1, 1), conv2_(channels, channels, 3, 3, 1, 1)
{
}

Shape ResidualBlock::output_shape(const Shape& in) const
{
    return conv2_.output_shape(conv1_.output_shape(in));
}

std::vector<Param*> ResidualBlock::params()
{
    auto p = conv1_.params();
    for (Param* q : conv2_.params()) {
        p.push_back(q);
    }
    return p;
}

void ResidualBlock::init(std::mt19937_64& rng)
{
    conv1_.init(rng);
    conv2_.init(rng);
}

void ResidualBlock::forward(const Tensor& in, Tensor& out)
{
    conv1_.forward(in, mid_);
    relu1_.forward(mid_, act_);
    conv2_.forward(act_, branch_);
    sum_ = branch_;
    sum_.data += in.data;
    out = sum_;
    out.data = sum_.data.cwiseMax(0.0);
}

void ResidualBlock::backward(const Tensor& grad_out, Tensor& grad_in)
{
    if (!grad_out.same_shape(sum_)) {
        throw DimensionError("ResidualBlock backward: shape mismatch");
    }
    Tensor g = grad_out;
    g.data = (sum_.data.array() > 0.0).select(grad_out.data, 0.0);
    Tensor g_act;
    conv2_.backward(g, g_act);
    Tensor g_mid;
    relu1_.backward(g_act, g_mid);
    conv1_.backward(g_mid, grad_in);
    grad_in.data += g.data;
}

void GlobalAvgPool::forward(const Tensor& in, Tensor& out)
{
    in_shape_ = shape_of(in);
    out = Tensor(in.c, 1, 1);
    const Eigen::Index hw = static_cast<Eigen::Index>(in.h) * in.w;
    for (int c = 0; c < in.c; ++c) {
        out.data[c] = in.data.segment(c * hw, hw).mean();
    }
}

void GlobalAvgPool::backward(const Tensor& grad_out, Tensor& grad_in)
{
    if (grad_out.size() != in_shape_.c) {
        throw DimensionError("GlobalAvgPool backward: shape mismatch");
    }
    grad_in = Tensor(in_shape_.c, in_shape_.h, in_shape_.w);
    const Eigen::Index hw = static_cast<Eigen::Index>(in_shape_.h) * in_shape_.w;
    for (int c = 0; c < in_shape_.c; ++c) {
        grad_in.data.segment(c * hw, hw).setConstant(grad_out.data[c] / static_cast<double>(hw));
    }
}

FullyConnected::FullyConnected(int in_features, int out_features) : in_(in_features), out_(out_features)
{
    if (in_ < 1 || out_ < 1) {
        throw std::invalid_argument("FullyConnected: invalid size");
    }
    allocate(weight_, static_cast<Eigen::Index>(out_) * in_);
    allocate(bias_, out_);
}

Shape FullyConnected::output_shape(const Shape& in) const
{
    if (static_cast<long>(in.c) * in.h * in.w != in_) {
        throw DimensionError("FullyConnected: expected " + std::to_string(in_) + " inputs, got " + in.str());
    }
    return {out_, 1, 1};
}

void FullyConnected::init(std::mt19937_64& rng)
{
    he_normal(weight_.value, in_, rng);
    bias_.value.setZero();
}

void FullyConnected::forward(const Tensor& in, Tensor& out)
{
    in_shape_ = shape_of(in);
    output_shape(in_shape_);
    input_ = in.data;
    const Eigen::Map<const RowMatrix> w(weight_.value.data(), out_, in_);
    out = Tensor(out_, 1, 1);
    out.data.noalias() = w * input_;
    out.data += bias_.value;
}

void FullyConnected::backward(const Tensor& grad_out, Tensor& grad_in)
{
    if (grad_out.size() != out_) {
        throw DimensionError("FullyConnected backward: shape mismatch");
    }
    Eigen::Map<RowMatrix> gw(weight_.grad.data(), out_, in_);
    gw.noalias() += grad_out.data * input_.transpose();
    bias_.grad += grad_out.data;
    const Eigen::Map<const RowMatrix> w(weight_.value.data(), out_, in_);
    grad_in = Tensor(in_shape_.c, in_shape_.h, in_shape_.w);
    grad_in.data.noalias() = w.transpose() * grad_out.data;
}

} // namespace hmdcap::nets
