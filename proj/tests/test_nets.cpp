#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "hmdcap/error.hpp"
#include "hmdcap/nets/layers.hpp"
#include "hmdcap/nets/losses.hpp"
#include "hmdcap/nets/network.hpp"
#include "hmdcap/nets/regressors.hpp"
#include "hmdcap/nets/train.hpp"
#include "hmdcap/synth_eye.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hmdcap;
using namespace hmdcap::nets;
using gradcheck::layer_gradient_error;
using gradcheck::random_tensor;
using gradcheck::rel_error;

namespace {

/// Naive cross-correlation with zero padding.
Tensor naive_conv(const Tensor& x, Conv2D& conv, int out_c, int k, int stride, int pad)
{
    const int oh = (x.h + 2 * pad - k) / stride + 1;
    const int ow = (x.w + 2 * pad - k) / stride + 1;
    Tensor y(out_c, oh, ow);
    const Eigen::VectorXd& wt = conv.weight().value;
    for (int o = 0; o < out_c; ++o) {
        for (int r = 0; r < oh; ++r) {
            for (int c = 0; c < ow; ++c) {
                double sum = conv.bias().value[o];
                for (int i = 0; i < x.c; ++i) {
                    for (int a = 0; a < k; ++a) {
                        for (int b = 0; b < k; ++b) {
                            const int yy = r * stride + a - pad;
                            const int xx = c * stride + b - pad;
                            if (yy >= 0 && xx >= 0 && yy < x.h && xx < x.w) {
                                sum += wt[((o * x.c + i) * k + a) * k + b] * x.at(i, yy, xx);
                            }
                        }
                    }
                }
                y.at(o, r, c) = sum;
            }
        }
    }
    return y;
}

Tensor vec_tensor(const Eigen::VectorXd& v)
{
    Tensor t(static_cast<int>(v.size()), 1, 1);
    t.data = v;
    return t;
}

NetworkSpec linear_spec(int in, int out, std::uint64_t seed)
{
    NetworkSpec s;
    s.input = {in, 1, 1};
    s.layers = {{{"type", "fc"}, {"out", out}}};
    s.seed = seed;
    return s;
}

FullyConnected& only_fc(Network& net)
{
    return dynamic_cast<FullyConnected&>(*net.layers().front());
}

} // namespace

TEST_SUITE("nets")
{
    TEST_CASE("layer gradients match central differences")
    {
        std::mt19937_64 rng(31);
        std::uniform_int_distribution<int> small(1, 3);
        std::uniform_int_distribution<int> side(5, 9);
        double worst_conv = 0, worst_relu = 0, worst_pool = 0, worst_res = 0, worst_gap = 0, worst_fc = 0;
        for (int t = 0; t < 20; ++t) {
            const int c = small(rng);
            const int h = side(rng);
            const int w = side(rng);
            {
                const int k = 1 + 2 * (t % 3);
                Conv2D conv(c, small(rng), k, k, 1 + t % 2, t % 3);
                conv.init(rng);
                worst_conv = std::max(worst_conv, layer_gradient_error(conv, random_tensor(rng, c, h, w), rng));
            }
            {
                ReLU relu;
                worst_relu = std::max(worst_relu, layer_gradient_error(relu, random_tensor(rng, c, h, w), rng));
            }
            {
                MaxPool pool(1 + t % 2, 2 + t % 2);
                worst_pool = std::max(worst_pool, layer_gradient_error(pool, random_tensor(rng, c, h, w), rng));
            }
            {
                ResidualBlock res(c);
                res.init(rng);
                worst_res = std::max(worst_res, layer_gradient_error(res, random_tensor(rng, c, h, w), rng));
            }
            {
                GlobalAvgPool gap;
                worst_gap = std::max(worst_gap, layer_gradient_error(gap, random_tensor(rng, c, h, w), rng));
            }
            {
                FullyConnected fc(c * h * w, small(rng) + 2);
                fc.init(rng);
                worst_fc = std::max(worst_fc, layer_gradient_error(fc, random_tensor(rng, c, h, w), rng));
            }
        }
        CHECK(worst_conv <= 1e-4);
        CHECK(worst_relu <= 1e-4);
        CHECK(worst_pool <= 1e-4);
        CHECK(worst_res <= 1e-4);
        CHECK(worst_gap <= 1e-4);
        CHECK(worst_fc <= 1e-4);
    }

    TEST_CASE("loss gradients match central differences")
    {
        std::mt19937_64 rng(32);
        constexpr double eps = 1e-6;
        double worst_face = 0;
        double worst_eye = 0;
        for (int t = 0; t < 20; ++t) {
            const FaceBasis b = oracle::random_basis(rng, 6, 3, 4 + t % 3, 2);
            const Pose pose(oracle::random_rotation(rng), oracle::random_vector(rng, 2, 10.0), 2.0 + t % 4);
            std::vector<int> visible;
            for (int i = 0; i < b.vertex_count(); i += 1 + t % 3) {
                visible.push_back(i);
            }
            const FacialLossWeights weights{0.1 * (t % 4), 0.5 * (t % 3)};
            Eigen::VectorXd pred = oracle::random_vector(rng, b.dim_exp());
            const Eigen::VectorXd label = oracle::random_vector(rng, b.dim_exp());
            const LossValue lv = facial_loss(pred, label, b, pose, weights, visible);
            for (Eigen::Index i = 0; i < pred.size(); ++i) {
                const double keep = pred[i];
                pred[i] = keep + eps;
                const double up = facial_loss(pred, label, b, pose, weights, visible).value;
                pred[i] = keep - eps;
                const double down = facial_loss(pred, label, b, pose, weights, visible).value;
                pred[i] = keep;
                worst_face = std::max(worst_face, rel_error(lv.grad[i], (up - down) / (2 * eps)));
            }
            // the quadratic-form shortcut agrees with the direct loss
            const Eigen::MatrixXd h = facial_loss_metric(b, pose, weights, visible);
            CHECK(quadratic_loss(h, pred, label).value == doctest::Approx(lv.value).epsilon(1e-10));

            // central differences are exact for a quadratic, so a wide step only reduces round-off
            constexpr double eye_eps = 1e-3;
            Eigen::VectorXd ep = oracle::random_vector(rng, 5);
            const Eigen::VectorXd el = oracle::random_vector(rng, 5);
            const LossValue e = eye_loss(ep, el);
            for (Eigen::Index i = 0; i < 5; ++i) {
                const double keep = ep[i];
                ep[i] = keep + eye_eps;
                const double up = eye_loss(ep, el).value;
                ep[i] = keep - eye_eps;
                const double down = eye_loss(ep, el).value;
                ep[i] = keep;
                worst_eye = std::max(worst_eye, rel_error(e.grad[i], (up - down) / (2 * eye_eps)));
            }
        }
        CHECK(worst_face <= 1e-4);
        CHECK(worst_eye <= 1e-8);
    }

    TEST_CASE("loss examples")
    {
        std::mt19937_64 rng(33);
        const FaceBasis b = oracle::random_basis(rng, 6, 3, 5, 2);
        const Pose pose(oracle::random_rotation(rng), Eigen::Vector2d(3, 4), 2.0);
        std::vector<int> visible{0, 3, 7, 11};
        const Eigen::VectorXd label = oracle::random_vector(rng, 5);
        const LossValue same = facial_loss(label, label, b, pose, {1e-6, 1.0}, visible);
        CHECK(same.value == 0.0);
        CHECK(same.grad.norm() == 0.0);
        const Eigen::VectorXd pred = oracle::random_vector(rng, 5);
        CHECK(facial_loss(pred, label, b, pose, {0, 0}, visible).value ==
              doctest::Approx((pred - label).squaredNorm()).epsilon(1e-14));
        CHECK_THROWS_AS(facial_loss(Eigen::VectorXd::Zero(4), label, b, pose, {0, 0}, visible), DimensionError);

        Eigen::VectorXd e(5);
        e << 0.1, 0.2, 0.3, 0.4, 0.5;
        CHECK(eye_loss(e, e).value == 0.0);
        Eigen::VectorXd shifted = e;
        shifted[2] += 1.0;
        CHECK(eye_loss(shifted, e).value == doctest::Approx(1.0).epsilon(1e-14));
    }

    TEST_CASE("a single Newton step reaches the label for quadratic losses")
    {
        std::mt19937_64 rng(34);
        for (int t = 0; t < 10; ++t) {
            const FaceBasis b = oracle::random_basis(rng, 6, 3, 6, 2);
            const Pose pose(oracle::random_rotation(rng), Eigen::Vector2d(1, 2), 3.0);
            const std::vector<int> visible{0, 1, 2, 5, 8, 13, 21};
            const Eigen::VectorXd label = oracle::random_vector(rng, 6);
            const Eigen::VectorXd start = oracle::random_vector(rng, 6, 10.0);
            // pure L2: Hessian is 2I
            const LossValue l2 = facial_loss(start, label, b, pose, {0, 0}, visible);
            CHECK((start - l2.grad / 2.0 - label).norm() <= 1e-10);
            const Eigen::VectorXd e0 = oracle::random_vector(rng, 5, 10.0);
            const Eigen::VectorXd el = oracle::random_vector(rng, 5);
            CHECK((e0 - eye_loss(e0, el).grad / 2.0 - el).norm() <= 1e-10);
            // combined: Hessian is 2H
            const FacialLossWeights w{1e-2, 1.0};
            const Eigen::MatrixXd h = facial_loss_metric(b, pose, w, visible);
            const LossValue full = facial_loss(start, label, b, pose, w, visible);
            CHECK((start - (2.0 * h).ldlt().solve(full.grad) - label).norm() <= 1e-9);
        }
    }

    TEST_CASE("forward pass equals a naive loop-nest reference")
    {
        std::mt19937_64 rng(35);
        for (int t = 0; t < 5; ++t) {
            NetworkSpec s;
            s.input = {2, 11, 13};
            s.layers = {{{"type", "conv"}, {"kernel", {3, 3}}, {"channels", 4}, {"stride", 1}, {"padding", 1}},
                        {{"type", "relu"}},
                        {{"type", "conv"}, {"kernel", {5, 5}}, {"channels", 3}, {"stride", 2}, {"padding", 2}},
                        {{"type", "relu"}},
                        {{"type", "maxpool"}, {"size", {2, 2}}},
                        {{"type", "fc"}, {"out", 4}}};
            s.seed = 100 + t;
            Network net(s);
            const Tensor x = random_tensor(rng, 2, 11, 13);
            const Tensor got = net.forward(x);

            auto& c1 = dynamic_cast<Conv2D&>(*net.layers()[0]);
            auto& c2 = dynamic_cast<Conv2D&>(*net.layers()[2]);
            auto& fc = dynamic_cast<FullyConnected&>(*net.layers()[5]);
            Tensor a = naive_conv(x, c1, 4, 3, 1, 1);
            a.data = a.data.cwiseMax(0.0);
            Tensor b = naive_conv(a, c2, 3, 5, 2, 2);
            b.data = b.data.cwiseMax(0.0);
            Tensor p(b.c, b.h / 2, b.w / 2);
            for (int c = 0; c < p.c; ++c) {
                for (int r = 0; r < p.h; ++r) {
                    for (int q = 0; q < p.w; ++q) {
                        p.at(c, r, q) = std::max({b.at(c, 2 * r, 2 * q), b.at(c, 2 * r, 2 * q + 1),
                                                  b.at(c, 2 * r + 1, 2 * q), b.at(c, 2 * r + 1, 2 * q + 1)});
                    }
                }
            }
            const int n = static_cast<int>(p.size());
            Eigen::VectorXd expected(4);
            for (int o = 0; o < 4; ++o) {
                double sum = fc.bias().value[o];
                for (int i = 0; i < n; ++i) {
                    sum += fc.weight().value[o * n + i] * p.data[i];
                }
                expected[o] = sum;
            }
            CHECK((got.data - expected).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }

    TEST_CASE("forward examples")
    {
        std::mt19937_64 rng(36);
        Conv2D id(3, 3, 1, 1, 1, 0);
        id.init(rng);
        id.weight().value.setZero();
        id.bias().value.setZero();
        for (int c = 0; c < 3; ++c) {
            id.weight().value[c * 3 + c] = 1.0;
        }
        const Tensor x = random_tensor(rng, 3, 7, 9);
        Tensor y;
        id.forward(x, y);
        CHECK(y.data == x.data);

        NetworkSpec s = NetworkSpec::eye();
        Network net(s);
        auto& fc = dynamic_cast<FullyConnected&>(*net.layers().back());
        fc.weight().value.setZero();
        fc.bias().value.setZero();
        CHECK(net.forward(Tensor(1, 87, 135)).data.isZero(0.0));

        CHECK_THROWS_AS(net.forward(Tensor(1, 80, 135)), DimensionError);
        NetworkSpec bad;
        bad.input = {1, 4, 4};
        bad.layers = {{{"type", "conv"}, {"kernel", {7, 7}}, {"channels", 2}, {"stride", 1}, {"padding", 0}}};
        CHECK_THROWS_AS(Network{bad}, DimensionError);
    }

    TEST_CASE("learning-rate schedules")
    {
        const TrainConfig f = TrainConfig::facial_paper();
        CHECK(f.learning_rate == 1e-3);
        CHECK(f.decay == 0.9);
        CHECK(f.epochs == 70);
        CHECK(f.batch_size == 64);
        CHECK(f.omega_l == 1.0);
        CHECK(f.omega_d == 1e-6);
        for (int e = 0; e < 70; ++e) {
            CHECK(f.learning_rate_at(e) == 1e-3 * std::pow(0.9, e));
        }
        const TrainConfig eye = TrainConfig::eye_paper();
        CHECK(eye.learning_rate == 1e-4);
        CHECK(eye.batch_size == 256);
        for (int e = 0; e < 70; ++e) {
            CHECK(eye.learning_rate_at(e, false) == 1e-4 * std::pow(0.96, 2 * e));
            CHECK(eye.learning_rate_at(e, true) == 1e-4 * std::pow(0.96, 2 * e + 1));
        }
        TrainConfig bad;
        bad.batch_size = 0;
        CHECK_THROWS(bad.validate());
    }

    TEST_CASE("one SGD step on a linear net equals the closed form")
    {
        Network net(linear_spec(3, 2, 7));
        FullyConnected& fc = only_fc(net);
        const Eigen::Map<const Eigen::Matrix<double, 2, 3, Eigen::RowMajor>> w0_map(fc.weight().value.data());
        const Eigen::Matrix<double, 2, 3> w0 = w0_map;
        const Eigen::Vector2d b0 = fc.bias().value;
        const Eigen::Vector3d x(0.5, -1.0, 2.0);
        const Eigen::Vector2d y(1.0, -0.5);
        TrainConfig c;
        c.learning_rate = 0.1;
        c.epochs = 1;
        c.batch_size = 1;
        train(
            net, 1, [&](std::size_t) { return vec_tensor(x); },
            [&](std::size_t, const Tensor& out, Tensor& g) {
                const LossValue l = eye_loss(out.data, y);
                g.data = l.grad;
                return l.value;
            },
            c);
        const Eigen::Vector2d r = w0 * x + b0 - y;
        const Eigen::Matrix<double, 2, 3> w1 = w0 - 0.1 * 2.0 * r * x.transpose();
        const Eigen::Vector2d b1 = b0 - 0.1 * 2.0 * r;
        const Eigen::Map<const Eigen::Matrix<double, 2, 3, Eigen::RowMajor>> got(fc.weight().value.data());
        CHECK((got - w1).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK((fc.bias().value - b1).cwiseAbs().maxCoeff() <= 1e-14);
    }

    TEST_CASE("full-batch training without momentum is gradient descent")
    {
        std::mt19937_64 rng(37);
        const int n = 6;
        std::vector<Eigen::VectorXd> xs;
        std::vector<Eigen::VectorXd> ys;
        for (int i = 0; i < n; ++i) {
            xs.push_back(oracle::random_vector(rng, 4));
            ys.push_back(oracle::random_vector(rng, 3));
        }
        Network net(linear_spec(4, 3, 8));
        FullyConnected& fc = only_fc(net);
        Eigen::Matrix<double, 3, 4, Eigen::RowMajor> w =
            Eigen::Map<const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>>(fc.weight().value.data());
        Eigen::Vector3d b = fc.bias().value;
        TrainConfig c;
        c.learning_rate = 0.05;
        c.decay = 0.9;
        c.momentum = 0.0;
        c.epochs = 8;
        c.batch_size = n;
        const auto history = train(
            net, n, [&](std::size_t s) { return vec_tensor(xs[s]); },
            [&](std::size_t s, const Tensor& out, Tensor& g) {
                const LossValue l = eye_loss(out.data, ys[s]);
                g.data = l.grad;
                return l.value;
            },
            c);
        for (int e = 0; e < c.epochs; ++e) {
            Eigen::Matrix<double, 3, 4> gw = Eigen::Matrix<double, 3, 4>::Zero();
            Eigen::Vector3d gb = Eigen::Vector3d::Zero();
            double loss = 0;
            for (int i = 0; i < n; ++i) {
                const Eigen::Vector3d r = w * xs[i] + b - ys[i];
                loss += r.squaredNorm();
                gw += 2.0 * r * xs[i].transpose() / n;
                gb += 2.0 * r / n;
            }
            CHECK(history[e].loss == doctest::Approx(loss / n).epsilon(1e-12));
            CHECK(history[e].learning_rate == 0.05 * std::pow(0.9, e));
            w -= 0.05 * std::pow(0.9, e) * gw;
            b -= 0.05 * std::pow(0.9, e) * gb;
        }
        const Eigen::Map<const Eigen::Matrix<double, 3, 4, Eigen::RowMajor>> got(fc.weight().value.data());
        CHECK((got - w).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((fc.bias().value - b).cwiseAbs().maxCoeff() <= 1e-12);
    }

    TEST_CASE("non-finite loss aborts training")
    {
        Network net(linear_spec(2, 1, 9));
        TrainConfig c;
        c.epochs = 1;
        CHECK_THROWS_AS(train(
                            net, 3, [](std::size_t) { return Tensor(2, 1, 1); },
                            [](std::size_t, const Tensor&, Tensor&) { return std::nan(""); }, c),
                        NumericalError);
    }

    TEST_CASE("reduced facial net overfits eight samples")
    {
        std::mt19937_64 rng(38);
        std::vector<Tensor> xs;
        std::vector<Eigen::VectorXd> ys;
        for (int i = 0; i < 8; ++i) {
            Tensor t(1, 112, 224);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            for (Eigen::Index k = 0; k < t.size(); ++k) {
                t.data[k] = u(rng);
            }
            xs.push_back(t);
            ys.push_back(oracle::random_vector(rng, 10));
        }
        Network net(NetworkSpec::face_desk(10));
        TrainConfig c;
        c.learning_rate = 1e-3;
        c.decay = 1.0;
        c.epochs = 500;
        c.batch_size = 8;
        c.optimizer = Optimizer::adam;
        const auto history = train(
            net, 8, [&](std::size_t s) { return xs[s]; },
            [&](std::size_t s, const Tensor& out, Tensor& g) {
                const LossValue l = eye_loss(out.data, ys[s]);
                g.data = l.grad;
                return l.value;
            },
            c);
        CHECK(history.back().loss <= 1e-3 * history.front().loss);
    }

    TEST_CASE("training is bit-reproducible and weights round-trip")
    {
        std::mt19937_64 rng(39);
        std::vector<Eigen::VectorXd> xs;
        std::vector<Eigen::VectorXd> ys;
        for (int i = 0; i < 20; ++i) {
            xs.push_back(oracle::random_vector(rng, 6));
            ys.push_back(oracle::random_vector(rng, 5));
        }
        NetworkSpec s;
        s.input = {6, 1, 1};
        s.layers = {{{"type", "fc"}, {"out", 8}}, {{"type", "relu"}}, {{"type", "fc"}, {"out", 5}}};
        auto run = [&](Network& net) {
            TrainConfig c;
            c.learning_rate = 0.01;
            c.epochs = 5;
            c.batch_size = 3;
            return train(
                net, xs.size(), [&](std::size_t k) { return vec_tensor(xs[k]); },
                [&](std::size_t k, const Tensor& out, Tensor& g) {
                    const LossValue l = eye_loss(out.data, ys[k]);
                    g.data = l.grad;
                    return l.value;
                },
                c);
        };
        Network a(s);
        Network b(s);
        const auto ha = run(a);
        const auto hb = run(b);
        REQUIRE(ha.size() == hb.size());
        for (std::size_t i = 0; i < ha.size(); ++i) {
            CHECK(ha[i].loss == hb[i].loss);
        }
        for (std::size_t i = 0; i < a.params().size(); ++i) {
            CHECK(a.params()[i]->value == b.params()[i]->value);
        }

        const auto dir = testutil::temp_dir("fen");
        save_network(a, dir / "n.fen");
        CHECK(testutil::slurp(dir / "n.fen").substr(0, 4) == "FEN1");
        Network loaded = load_network(dir / "n.fen");
        for (std::size_t i = 0; i < a.params().size(); ++i) {
            CHECK(loaded.params()[i]->value == a.params()[i]->value);
        }
        CHECK(loaded.forward(vec_tensor(xs[0])).data == a.forward(vec_tensor(xs[0])).data);
        std::ofstream(dir / "bad.fen", std::ios::binary) << "FEN2";
        std::filesystem::copy_file(dir / "n.fen.json", dir / "bad.fen.json");
        CHECK_THROWS_AS(load_network(dir / "bad.fen"), DataError);
    }

    TEST_CASE("regressor outputs")
    {
        CHECK(Network(NetworkSpec::face_resnet18(79)).output_shape() == Shape{79, 1, 1});
        Network face(NetworkSpec::face_desk(79));
        Image img(112, 224);
        for (std::size_t i = 0; i < img.data().size(); ++i) {
            img.data()[i] = static_cast<std::uint8_t>(i % 251);
        }
        const Eigen::VectorXd e1 = predict_expression(face, img);
        CHECK(e1.size() == 79);
        CHECK(predict_expression(face, img) == e1);
        CHECK_THROWS_AS(predict_expression(face, Image(100, 224)), DimensionError);

        Network eye(NetworkSpec::eye());
        CHECK(eye.output_shape() == Shape{5, 1, 1});
        Image eimg(87, 135);
        const EyeState s1 = predict_eye(eye, eimg);
        CHECK(predict_eye(eye, eimg) == s1);

        EyeState st;
        st.pitch = 0.1;
        st.yaw = -0.2;
        st.pupil_size = 33;
        st.pupil_centre = Eigen::Vector2d(150, 130);
        const EyeState back = eye_state_from_target(eye_target(st));
        CHECK(std::abs(back.pitch - st.pitch) <= 1e-12);
        CHECK(std::abs(back.yaw - st.yaw) <= 1e-12);
        CHECK(std::abs(back.pupil_size - st.pupil_size) <= 1e-12);
        CHECK((back.pupil_centre - st.pupil_centre).norm() <= 1e-12);

        // input normalisation keeps black at exactly zero
        Image black(2, 2);
        CHECK(image_to_tensor(black).data.isZero(0.0));
        black.at(0, 0) = 255;
        CHECK(image_to_tensor(black).data[0] == 1.0);
    }
}
