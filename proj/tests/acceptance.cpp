// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "hmdcap/capture_pipeline.hpp"
#include "hmdcap/face_model.hpp"
#include "hmdcap/inverse_fit.hpp"
#include "hmdcap/nets/layers.hpp"
#include "hmdcap/nets/losses.hpp"
#include "hmdcap/nets/regressors.hpp"
#include "hmdcap/pupil_pipeline.hpp"
#include "hmdcap/synth_eye.hpp"
#include "hmdcap/synth_face.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hmdcap;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t)
{
    return std::chrono::duration<double>(Clock::now() - t).count();
}

int failures = 0;

void report(int id, bool pass, const std::string& detail)
{
    failures += pass ? 0 : 1;
    std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path work(const std::string& name)
{
    const fs::path p = fs::path(HMDCAP_WORK) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

/// Runs the CLI with stdout captured to `log`; returns the exit code.
int cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string("\"") + HMDCAP_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return status == -1 ? -1 : WEXITSTATUS(status);
}

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

// 1. Loss ablation on the held-out face subject.
void criterion1()
{
    const auto start = Clock::now();
    const fs::path dir = work("c1");
    const FaceBasis basis = gen_basis(SyntheticBasisSpec::desk());
    const HmdProxy hmd = HmdProxy::standard();
    const FaceDataConfig config = FaceDataConfig::desk();
    const FaceDataset ds = gen_face_dataset(basis, config, hmd, dir / "data", 7);

    double errors[2] = {0, 0};
    const nets::FacialLossKind kinds[2] = {nets::FacialLossKind::l2, nets::FacialLossKind::combined};
    for (int k = 0; k < 2; ++k) {
        const nets::TrainConfig tc = nets::TrainConfig::facial_desk();
        nets::Network net(nets::NetworkSpec::face_desk(basis.dim_exp()));
        const auto data = nets::load_face_training(ds, basis, hmd, "train", kinds[k], tc);
        nets::train_face(net, data, tc);
        errors[k] = evaluate_face(network_expression_regressor(net), ds, basis, "test").mean_landmark_error;
    }
    const double elapsed = seconds_since(start);
    const double ratio = errors[0] / errors[1];
    const bool pass = config.subjects == 6 && ds.samples.size() >= 2000 && errors[1] < errors[0] && ratio >= 1.5 &&
                      elapsed <= 900.0;
    report(1, pass,
           fmt("samples %zu, held-out mean landmark error: L2-only %.3f px, combined %.3f px, ratio %.3f (need >= 1.5), "
               "%.0f s (budget 900 s)",
               ds.samples.size(), errors[0], errors[1], ratio, elapsed));
}

// 2. Eye network versus the ellipse-ratio baseline.
void criterion2()
{
    const auto start = Clock::now();
    const fs::path dir = work("c2");
    const EyeDataset ds = gen_eye_dataset(EyeDataConfig::desk(), dir / "data", 7);
    const nets::TrainConfig tc = nets::TrainConfig::eye_desk();
    nets::Network net(nets::NetworkSpec::eye());
    nets::train_eye(net, nets::load_eye_training(ds, "train"), tc);
    const EyeEvaluation ev = evaluate_eye(network_eye_regressor(net), ds, "test");
    const double elapsed = seconds_since(start);
    const bool pass = ev.frames >= 500 && ev.net_gaze_error <= ev.baseline_gaze_error &&
                      ev.net_ms < ev.baseline_ms && elapsed <= 900.0;
    report(2, pass,
           fmt("%d held-out frames: gaze error net %.2f deg vs baseline %.2f deg (%d baseline failures); "
               "time net %.2f ms vs baseline %.2f ms per frame; %.0f s (budget 900 s)",
               ev.frames, ev.net_gaze_error, ev.baseline_gaze_error, ev.baseline_failures, ev.net_ms, ev.baseline_ms,
               elapsed));
}

// 3. Pupil pipeline accuracy.
void criterion3()
{
    const EyeDataConfig config = EyeDataConfig::desk();
    double worst_centre = 0;
    double worst_size = 0;
    int renders = 0;
    for (int s = 0; s < 4; ++s) {
        EyeRenderSpec spec = eye_subject_spec(config, 3, s);
        for (int f = 0; f < 50; ++f) {
            const EyeState truth = eye_frame_state(config, 3, s, 2 * f);
            if (truth.pupil_size < 16.0) {
                continue;
            }
            spec.seed = static_cast<std::uint64_t>(100 * s + f);
            const EyeRender r = render_eye(truth, spec);
            const PupilLabels l = pupil_labels(detect_pupil(r.image).fit);
            worst_centre = std::max(worst_centre, (l.centre - truth.pupil_centre).norm());
            worst_size = std::max(worst_size, std::abs(l.size - truth.pupil_size) / truth.pupil_size);
            ++renders;
        }
    }
    EllipseFit e;
    e.centre = Eigen::Vector2d(50, 60);
    e.a = 20;
    e.b = 10;
    e.orientation = 30.0 * std::numbers::pi / 180.0;
    std::vector<Eigen::Vector2d> pts;
    for (int i = 0; i < 32; ++i) {
        const double t = 2.0 * std::numbers::pi * i / 32;
        pts.push_back(e.centre + Eigen::Rotation2Dd(e.orientation) * Eigen::Vector2d(e.a * std::cos(t), e.b * std::sin(t)));
    }
    const EllipseFit f = fit_ellipse(pts);
    const double fit_err = std::max({(f.centre - e.centre).norm(), std::abs(f.a - e.a), std::abs(f.b - e.b),
                                     std::abs(f.orientation - e.orientation)});
    report(3, renders == 200 && worst_centre <= 1.5 && worst_size <= 0.05 && fit_err <= 1e-6,
           fmt("%d renders: worst centre error %.3f px (<= 1.5), worst size error %.2f%% (<= 5%%); "
               "ellipse refit error %.2e (<= 1e-6)",
               renders, worst_centre, 100.0 * worst_size, fit_err));
}

// 4. Finite-difference gradient checks for every layer type and both losses.
void criterion4()
{
    using namespace hmdcap::nets;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> small(1, 3);
    std::uniform_int_distribution<int> side(5, 9);
    double worst[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    constexpr int configs = 20;
    for (int t = 0; t < configs; ++t) {
        const int c = small(rng);
        const int h = side(rng);
        const int w = side(rng);
        const int k = 1 + 2 * (t % 3);
        Conv2D conv(c, small(rng), k, k, 1 + t % 2, t % 3);
        conv.init(rng);
        worst[0] = std::max(worst[0], gradcheck::layer_gradient_error(conv, gradcheck::random_tensor(rng, c, h, w), rng));
        ReLU relu;
        worst[1] = std::max(worst[1], gradcheck::layer_gradient_error(relu, gradcheck::random_tensor(rng, c, h, w), rng));
        MaxPool pool(1 + t % 2, 2 + t % 2);
        worst[2] = std::max(worst[2], gradcheck::layer_gradient_error(pool, gradcheck::random_tensor(rng, c, h, w), rng));
        ResidualBlock res(c);
        res.init(rng);
        worst[3] = std::max(worst[3], gradcheck::layer_gradient_error(res, gradcheck::random_tensor(rng, c, h, w), rng));
        GlobalAvgPool gap;
        worst[4] = std::max(worst[4], gradcheck::layer_gradient_error(gap, gradcheck::random_tensor(rng, c, h, w), rng));
        FullyConnected fc(c * h * w, small(rng) + 2);
        fc.init(rng);
        worst[5] = std::max(worst[5], gradcheck::layer_gradient_error(fc, gradcheck::random_tensor(rng, c, h, w), rng));

        const FaceBasis b = oracle::random_basis(rng, 6, 3, 4 + t % 3, 2);
        const Pose pose(oracle::random_rotation(rng), oracle::random_vector(rng, 2, 10.0), 2.0 + t % 4);
        std::vector<int> visible;
        for (int i = 0; i < b.vertex_count(); i += 1 + t % 3) {
            visible.push_back(i);
        }
        const FacialLossWeights weights{0.1 * (1 + t % 4), 0.5 * (1 + t % 3)};
        Eigen::VectorXd pred = oracle::random_vector(rng, b.dim_exp());
        const Eigen::VectorXd label = oracle::random_vector(rng, b.dim_exp());
        const Eigen::VectorXd grad = facial_loss(pred, label, b, pose, weights, visible).grad;
        Eigen::VectorXd ep = oracle::random_vector(rng, 5);
        const Eigen::VectorXd el = oracle::random_vector(rng, 5);
        const Eigen::VectorXd egrad = eye_loss(ep, el).grad;
        constexpr double eps = 1e-6;
        for (Eigen::Index i = 0; i < pred.size(); ++i) {
            const double keep = pred[i];
            pred[i] = keep + eps;
            const double up = facial_loss(pred, label, b, pose, weights, visible).value;
            pred[i] = keep - eps;
            const double down = facial_loss(pred, label, b, pose, weights, visible).value;
            pred[i] = keep;
            worst[6] = std::max(worst[6], gradcheck::rel_error(grad[i], (up - down) / (2 * eps)));
        }
        for (Eigen::Index i = 0; i < 5; ++i) {
            const double keep = ep[i];
            ep[i] = keep + eps;
            const double up = eye_loss(ep, el).value;
            ep[i] = keep - eps;
            const double down = eye_loss(ep, el).value;
            ep[i] = keep;
            worst[7] = std::max(worst[7], gradcheck::rel_error(egrad[i], (up - down) / (2 * eps)));
        }
    }
    const char* names[8] = {"conv", "relu", "maxpool", "residual", "gap", "fc", "facial loss", "eye loss"};
    bool pass = true;
    std::string detail = fmt("%d configurations each; max relative error:", configs);
    for (int i = 0; i < 8; ++i) {
        pass = pass && worst[i] <= 1e-4;
        detail += fmt(" %s %.1e", names[i], worst[i]);
    }
    report(4, pass, detail + " (<= 1e-4)");
}

// 5. Shape/albedo model, projection and visibility.
void criterion5()
{
    std::mt19937_64 rng(5);
    const FaceBasis b = oracle::random_basis(rng, 6, 5, 4, 3);
    const FaceParams zero = FaceParams::zeros(b);
    double model_err = std::max((evaluate_shape(b, zero).vertices - b.mean_shape).cwiseAbs().maxCoeff(),
                                (evaluate_albedo(b, zero) - b.mean_albedo).cwiseAbs().maxCoeff());
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int t = 0; t < 20; ++t) {
        const FaceParams p = oracle::random_params(rng, b);
        const FaceParams q = oracle::random_params(rng, b);
        const double al = u(rng);
        const double be = u(rng);
        const FaceParams mix{al * p.x_id + be * q.x_id, al * p.x_exp + be * q.x_exp, al * p.x_alb + be * q.x_alb};
        const Eigen::VectorXd ls = evaluate_shape(b, mix).vertices;
        const Eigen::VectorXd rs =
            al * evaluate_shape(b, p).vertices + be * evaluate_shape(b, q).vertices - (al + be - 1.0) * b.mean_shape;
        const Eigen::VectorXd la = evaluate_albedo(b, mix);
        const Eigen::VectorXd ra =
            al * evaluate_albedo(b, p) + be * evaluate_albedo(b, q) - (al + be - 1.0) * b.mean_albedo;
        model_err = std::max({model_err, (ls - rs).cwiseAbs().maxCoeff(), (la - ra).cwiseAbs().maxCoeff()});
    }

    const Eigen::Vector3d v(1, 2, 3);
    double proj_err = (project(Pose(), v) - Eigen::Vector2d(1, 2)).norm();
    proj_err = std::max(proj_err, (project(Pose(Eigen::Matrix3d::Identity(), Eigen::Vector2d(10, 20), 2.0), v) -
                                   Eigen::Vector2d(12, 24))
                                      .norm());
    for (int t = 0; t < 50; ++t) {
        const Eigen::Vector2d tr = oracle::random_vector(rng, 2, 20.0);
        const Eigen::Vector2d delta = oracle::random_vector(rng, 2, 5.0);
        const Eigen::Vector3d x = oracle::random_vector(rng, 3, 3.0);
        const Pose p(oracle::random_rotation(rng), tr, 1.5);
        proj_err = std::max(proj_err, (project(p.with_translation(tr + delta), x) - project(p, x) - delta).norm());
        proj_err = std::max(proj_err, (project(p.with_scale(3.0), x) - tr - 2.0 * (project(p, x) - tr)).norm());
    }

    std::uniform_int_distribution<int> count(1, 200);
    std::uniform_real_distribution<double> scale(0.5, 3.0);
    int agree = 0;
    for (int t = 0; t < 50; ++t) {
        const Mesh m = oracle::random_soup(rng, count(rng));
        const Mesh occ = oracle::box(Eigen::Vector3d(-4, -4, -15), Eigen::Vector3d(3, 2, -12));
        const Pose pose(oracle::random_rotation(rng), oracle::random_vector(rng, 2, 10.0), scale(rng));
        const std::vector<PosedMesh> occluders{{&occ, pose}};
        agree += visible_vertices(m, pose, occluders) ==
                         oracle::visible_vertices(m, pose, occluders, kDepthTolerance * pose.scale())
                     ? 1
                     : 0;
    }
    report(5, model_err <= 1e-10 && proj_err <= 1e-12 && agree == 50,
           fmt("model zero/linearity error %.1e (<= 1e-10); projection example error %.1e (<= 1e-12); "
               "visibility agrees with ray casting on %d/50 random meshes",
               model_err, proj_err, agree));
}

// 6. Every pixel inside the projected headset is black.
void criterion6()
{
    const FaceBasis b = gen_basis(SyntheticBasisSpec::desk());
    const HmdProxy hmd = HmdProxy::standard();
    const Mesh placed = hmd.placed_mesh();
    std::mt19937_64 rng(6);
    const double lim = 20.0 * std::numbers::pi / 180.0;
    std::uniform_real_distribution<double> ang(-lim, lim);
    std::uniform_real_distribution<double> shift(-10.0, 10.0);
    long leaks = 0;
    long inside_px = 0;
    for (int t = 0; t < 100; ++t) {
        const Pose pose =
            Pose::from_angles(ang(rng), ang(rng), ang(rng), Eigen::Vector2d(160 + shift(rng), 128 + shift(rng)), 90.0);
        FaceParams p = FaceParams::zeros(b);
        p.x_exp = oracle::random_vector(rng, b.dim_exp());
        const Image masked = mask_hmd(render_face(b, p, pose, 320, 256), hmd, pose);
        std::vector<Eigen::Vector2d> proj(static_cast<std::size_t>(placed.vertex_count()));
        for (int i = 0; i < placed.vertex_count(); ++i) {
            proj[static_cast<std::size_t>(i)] = project(pose, placed.vertex(i));
        }
        for (int r = 0; r < 256; ++r) {
            for (int c = 0; c < 320; ++c) {
                for (const auto& tri : *placed.triangles) {
                    if (oracle::inside_triangle(proj[tri[0]], proj[tri[1]], proj[tri[2]], Eigen::Vector2d(c, r))) {
                        ++inside_px;
                        leaks += masked.at(r, c) != 0 ? 1 : 0;
                        break;
                    }
                }
            }
        }
    }
    report(6, leaks == 0 && inside_px > 0,
           fmt("100 poses, %ld pixels inside the projected headset, %ld non-black", inside_px, leaks));
}

// 7. Landmark fitting round trip.
void criterion7()
{
    const FaceBasis b = gen_basis(SyntheticBasisSpec::desk());
    auto synth = [&](double noise, int frames, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g(0.0, 1.0);
        std::uniform_real_distribution<double> ang(-0.35, 0.35);
        LandmarkObservations obs;
        FaceParams p = FaceParams::zeros(b);
        for (int k = 0; k < b.dim_id(); ++k) {
            p.x_id(k) = 0.7 * b.sigma_id(k) * g(rng);
        }
        for (int f = 0; f < frames; ++f) {
            for (int k = 0; k < b.dim_exp(); ++k) {
                p.x_exp(k) = 0.7 * b.sigma_exp(k) * g(rng);
            }
            const Pose pose = Pose::from_angles(ang(rng), ang(rng), ang(rng), Eigen::Vector2d(160, 128), 90.0);
            const auto lm = landmarks_2d(b, p, pose, LandmarkSet::lower);
            std::vector<LandmarkPoint> pts;
            for (std::size_t i = 0; i < lm.size(); ++i) {
                pts.push_back({b.landmark_indices_lower[i], lm[i] + noise * Eigen::Vector2d(g(rng), g(rng)), 1.0});
            }
            obs.frame_ids.push_back(f);
            obs.frames.push_back(pts);
        }
        return obs;
    };
    auto monotone = [](const FitResult& r) {
        for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
            if (r.objective_history[i] > r.objective_history[i - 1]) {
                return false;
            }
        }
        return true;
    };
    const FitResult clean = fit_identity_expression(synth(0.0, 3, 70), b, FitConfig{});
    bool mono = monotone(clean);
    double rmse = 0;
    for (int t = 0; t < 100; ++t) {
        const FitResult r = fit_identity_expression(synth(0.5, 1, 1000 + t), b, FitConfig{});
        mono = mono && monotone(r);
        rmse += r.rms_residual / 100.0;
    }
    report(7, clean.rms_residual <= 1e-3 && mono && rmse <= 1.0,
           fmt("noiseless residual %.2e px (<= 1e-3); objective monotone: %s; sigma 0.5 px mean RMSE %.3f px over 100 "
               "trials (<= 1.0)",
               clean.rms_residual, mono ? "yes" : "no", rmse));
}

// 8. Identical seeds give byte-identical CLI outputs.
void criterion8()
{
    const fs::path dir = work("c8");
    write_file(dir / "face.json", R"({"subjects": 2, "frames_per_subject": [3, 3], "test_subject": 1, "crops_per_frame": 2})");
    write_file(dir / "eye.json", R"({"subjects": 2, "frames_per_subject": [3, 2], "test_subject": 1, "crops_per_image": 2})");
    write_file(dir / "train.json", R"({"epochs": 2})");
    bool ok = true;
    std::string detail;
    for (const char* run : {"a", "b"}) {
        const fs::path r = dir / run;
        const std::string seed = " --seed 5 --out ";
        ok = ok && cli("gen-face-data --config " + (dir / "face.json").string() + seed + (r / "face").string(),
                       r.string() + "_gf.log") == 0;
        ok = ok && cli("gen-eye-data --config " + (dir / "eye.json").string() + seed + (r / "eye").string(),
                       r.string() + "_ge.log") == 0;
        ok = ok && cli("train-face --data " + (r / "face").string() + " --config " + (dir / "train.json").string() +
                           seed + (r / "tf").string(),
                       r.string() + "_tf.log") == 0;
        ok = ok && cli("train-eye --data " + (r / "eye").string() + " --config " + (dir / "train.json").string() +
                           seed + (r / "te").string(),
                       r.string() + "_te.log") == 0;
    }
    if (!ok) {
        report(8, false, "a CLI run failed; see logs in " + dir.string());
        return;
    }
    bool same = true;
    for (const char* sub : {"face", "eye", "tf", "te"}) {
        const bool eq = testutil::same_tree(dir / "a" / sub, dir / "b" / sub);
        same = same && eq;
        detail += fmt(" %s:%s", sub, eq ? "identical" : "DIFFERENT");
    }
    report(8, same, "two seeded runs of gen-face-data, gen-eye-data, train-face, train-eye;" + detail);
}

// 9. Throughput report.
void criterion9()
{
    const fs::path dir = work("c9");
    const int rc = cli("bench --frames 10 --out " + dir.string(), dir / "bench.log");
    const std::string text = testutil::slurp(dir / "bench.log");
    bool has_all = rc == 0 && fs::exists(dir / "bench.json");
    for (const char* needle : {"face crop", "facial network", "eye network", "frame total", "pupil baseline",
                               "comparison with the published figures", "31.50", "2.18", "136.90", "30.00"}) {
        has_all = has_all && text.find(needle) != std::string::npos;
    }
    report(9, has_all, fmt("bench exit %d; per-stage table and comparison table %s", rc, has_all ? "present" : "missing"));
    std::cout << text;
}

} // namespace

int main(int argc, char** argv)
{
    // optional list of criteria to run, e.g. "acceptance 3 5"
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        only.push_back(std::atoi(argv[i]));
    }
    const std::function<void()> all[] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                         criterion6, criterion7, criterion8, criterion9};
    for (int id = 1; id <= 9; ++id) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) {
            continue;
        }
        try {
            all[id - 1]();
        } catch (const std::exception& e) {
            report(id, false, std::string("exception: ") + e.what());
        }
    }
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
