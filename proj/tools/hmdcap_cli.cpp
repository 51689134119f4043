// hmdcap command-line front end.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hmdcap/capture_pipeline.hpp"
#include "hmdcap/error.hpp"
#include "hmdcap/inverse_fit.hpp"
#include "hmdcap/json_io.hpp"
#include "hmdcap/nets/regressors.hpp"
#include "hmdcap/pupil_pipeline.hpp"
#include "hmdcap/seeding.hpp"
#include "hmdcap/synth_eye.hpp"
#include "hmdcap/synth_face.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hmdcap;

namespace {

struct Common {
    std::uint64_t seed = 1;
    std::string preset = "desk";
    std::string out;
    std::string config;
};

void add_common(CLI::App* app, Common& c, bool needs_out)
{
    app->add_option("--seed", c.seed, "Master seed")->capture_default_str();
    app->add_option("--preset", c.preset, "Configuration preset")
        ->check(CLI::IsMember({"paper", "desk"}))
        ->capture_default_str();
    auto* out = app->add_option("--out", c.out, "Output directory");
    if (needs_out) {
        out->required();
    }
    app->add_option("--config", c.config, "JSON file overriding preset fields")->check(CLI::ExistingFile);
}

bool paper(const Common& c)
{
    return c.preset == "paper";
}

json overrides(const Common& c)
{
    return c.config.empty() ? json::object() : json_io::read_json(c.config);
}

SyntheticBasisSpec basis_spec(const Common& c)
{
    SyntheticBasisSpec s = paper(c) ? SyntheticBasisSpec::paper() : SyntheticBasisSpec::desk();
    s.seed = c.seed;
    const json j = overrides(c);
    const json& b = j.contains("basis") ? j.at("basis") : j;
    auto get = [&](const char* key, auto& v) {
        if (b.contains(key)) {
            b.at(key).get_to(v);
        }
    };
    get("vertex_count", s.vertex_count);
    get("dim_id", s.dim_id);
    get("dim_exp", s.dim_exp);
    get("dim_alb", s.dim_alb);
    get("decay", s.decay);
    return s;
}

template <class Config>
Config with_overrides(Config config, const Common& c)
{
    const json j = overrides(c);
    if (!j.empty()) {
        json merged = config;
        merged.merge_patch(j);
        config = merged.template get<Config>();
    }
    return config;
}

void print_json(const json& j)
{
    std::cout << j.dump(2) << '\n';
}

void write_log(const std::vector<nets::EpochRecord>& history, const fs::path& path)
{
    std::ofstream log(path);
    for (const auto& r : history) {
        log << nets::epoch_to_json(r).dump() << '\n';
    }
    if (!log) {
        throw DataError("failed writing " + path.string());
    }
}

Identity load_identity(const fs::path& path, const FaceBasis& basis)
{
    const json j = json_io::read_json(path);
    Identity id{json_io::vector_from_json(j.at("x_id")), Eigen::VectorXd::Zero(basis.dim_alb())};
    if (j.contains("x_alb")) {
        id.x_alb = json_io::vector_from_json(j.at("x_alb"));
    }
    return id;
}

// ---------------------------------------------------------------------------------------------

int gen_basis_cmd(const Common& c)
{
    const SyntheticBasisSpec spec = basis_spec(c);
    const FaceBasis basis = gen_basis(spec);
    fs::create_directories(c.out);
    save_basis(basis, fs::path(c.out) / "basis.feb", {spec.seed, c.preset});
    std::cout << "wrote " << (fs::path(c.out) / "basis.feb").string() << " (" << basis.vertex_count() << " vertices, "
              << basis.dim_id() << "/" << basis.dim_exp() << "/" << basis.dim_alb() << " dims)\n";
    return 0;
}

int gen_face_data_cmd(const Common& c, const std::string& basis_path)
{
    const FaceBasis basis = basis_path.empty() ? gen_basis(basis_spec(c)) : load_basis(basis_path);
    FaceDataConfig config = paper(c) ? FaceDataConfig::paper() : FaceDataConfig::desk();
    config = with_overrides(config, c);
    const FaceDataset ds = gen_face_dataset(basis, config, HmdProxy::standard(), c.out, c.seed);
    std::cout << "wrote " << ds.samples.size() << " samples from " << ds.frames.size() << " frames to " << c.out
              << '\n';
    return 0;
}

int gen_eye_data_cmd(const Common& c)
{
    EyeDataConfig config = paper(c) ? EyeDataConfig::paper() : EyeDataConfig::desk();
    config = with_overrides(config, c);
    const EyeDataset ds = gen_eye_dataset(config, c.out, c.seed);
    std::cout << "wrote " << ds.samples.size() << " samples from " << ds.frames.size() << " frames to " << c.out
              << '\n';
    return 0;
}

int fit_identity_cmd(const Common& c, const std::string& basis_path, const std::string& landmarks,
                     const std::string& data, int subject, int max_frames, double noise)
{
    LandmarkObservations obs;
    FaceBasis basis;
    if (!landmarks.empty()) {
        if (basis_path.empty()) {
            throw CLI::ValidationError("--basis is required with --landmarks");
        }
        basis = load_basis(basis_path);
        obs = load_landmarks_json(landmarks);
    } else if (!data.empty()) {
        const FaceDataset ds = load_face_dataset(data);
        basis = load_basis(basis_path.empty() ? ds.root / ds.basis_file : fs::path(basis_path));
        std::mt19937_64 rng(derive_seed(c.seed, {21, static_cast<std::uint64_t>(subject)}));
        std::normal_distribution<double> gauss(0.0, noise);
        for (const FaceFrameRecord& f : ds.frames) {
            if (f.subject != subject || static_cast<int>(obs.frames.size()) >= max_frames) {
                continue;
            }
            FaceParams p = neutral_params(basis, ds.subjects.at(static_cast<std::size_t>(subject)));
            p.x_exp = f.x_exp;
            const auto pts = landmarks_2d(basis, p, f.pose, LandmarkSet::lower);
            std::vector<LandmarkPoint> frame;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const Eigen::Vector2d jitter = noise > 0.0 ? Eigen::Vector2d(gauss(rng), gauss(rng))
                                                           : Eigen::Vector2d::Zero();
                frame.push_back({basis.landmark_indices_lower[i], pts[i] + jitter, 1.0});
            }
            obs.frame_ids.push_back(f.frame);
            obs.frames.push_back(std::move(frame));
        }
        if (obs.frames.empty()) {
            throw DataError("no frames for subject " + std::to_string(subject));
        }
    } else {
        throw CLI::ValidationError("either --landmarks or --data is required");
    }
    FitConfig config;
    const json j = overrides(c);
    auto get = [&](const char* key, auto& v) {
        if (j.contains(key)) {
            j.at(key).get_to(v);
        }
    };
    get("max_iterations", config.max_iterations);
    get("damping", config.damping);
    get("w_r", config.w_r);
    get("tolerance", config.tolerance);
    get("pose_iterations", config.pose_iterations);
    const FitResult fit = fit_identity_expression(obs, basis, config);
    fs::create_directories(c.out);
    const fs::path out = fs::path(c.out) / "identity.json";
    save_fit_json(fit, obs, nullptr, out);
    std::cout << "fit " << obs.frames.size() << " frames: " << fit.iterations << " iterations, rms "
              << fit.rms_residual << " px, " << (fit.converged ? "converged" : "not converged") << "\nwrote "
              << out.string() << '\n';
    return 0;
}

nets::TrainConfig train_config(const Common& c, bool face)
{
    nets::TrainConfig config = face ? (paper(c) ? nets::TrainConfig::facial_paper() : nets::TrainConfig::facial_desk())
                                    : (paper(c) ? nets::TrainConfig::eye_paper() : nets::TrainConfig::eye_desk());
    config.seed = c.seed;
    return with_overrides(config, c);
}

int train_face_cmd(const Common& c, const std::string& data, const std::string& loss)
{
    const FaceDataset ds = load_face_dataset(data);
    const FaceBasis basis = load_basis(ds.root / ds.basis_file);
    const nets::TrainConfig config = train_config(c, true);
    const int channels = ds.config.rgb ? 3 : 1;
    nets::NetworkSpec spec = paper(c) ? nets::NetworkSpec::face_resnet18(basis.dim_exp(), channels)
                                      : nets::NetworkSpec::face_desk(basis.dim_exp(), channels);
    spec.seed = c.seed;
    nets::Network net(spec);
    const auto train_data = nets::load_face_training(ds, basis, HmdProxy::standard(), "train",
                                                     nets::facial_loss_kind(loss), config);
    fs::create_directories(c.out);
    const auto history = nets::train_face(net, train_data, config, [](const nets::EpochRecord& r) {
        std::cout << nets::epoch_to_json(r).dump() << std::endl;
    });
    save_network(net, fs::path(c.out) / "face.fen");
    write_log(history, fs::path(c.out) / "train_log.jsonl");
    return 0;
}

int train_eye_cmd(const Common& c, const std::string& data)
{
    const EyeDataset ds = load_eye_dataset(data);
    const nets::TrainConfig config = train_config(c, false);
    nets::NetworkSpec spec = nets::NetworkSpec::eye();
    spec.seed = c.seed;
    nets::Network net(spec);
    const auto train_data = nets::load_eye_training(ds, "train");
    fs::create_directories(c.out);
    const auto history = nets::train_eye(net, train_data, config, [](const nets::EpochRecord& r) {
        std::cout << nets::epoch_to_json(r).dump() << std::endl;
    });
    save_network(net, fs::path(c.out) / "eye.fen");
    write_log(history, fs::path(c.out) / "train_log.jsonl");
    return 0;
}

int eval_face_cmd(const Common& c, const std::string& data, const std::string& weights, const std::string& split)
{
    const FaceDataset ds = load_face_dataset(data);
    const FaceBasis basis = load_basis(ds.root / ds.basis_file);
    nets::Network net = nets::load_network(weights);
    const FaceEvaluation ev = evaluate_face(network_expression_regressor(net), ds, basis, split);
    const json result = {{"split", split}, {"frames", ev.states.size()}, {"mean_landmark_error_px", ev.mean_landmark_error}};
    print_json(result);
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        json_io::write_json(result, fs::path(c.out) / "eval_face.json");
    }
    return 0;
}

int eval_eye_cmd(const Common& c, const std::string& data, const std::string& weights, const std::string& split)
{
    const EyeDataset ds = load_eye_dataset(data);
    nets::Network net = nets::load_network(weights);
    const EyeEvaluation ev = evaluate_eye(network_eye_regressor(net), ds, split);
    const json result = {{"split", split},
                         {"frames", ev.frames},
                         {"net_gaze_error_deg", ev.net_gaze_error},
                         {"baseline_gaze_error_deg", ev.baseline_gaze_error},
                         {"baseline_failures", ev.baseline_failures},
                         {"net_ms_per_frame", ev.net_ms},
                         {"baseline_ms_per_frame", ev.baseline_ms}};
    print_json(result);
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        json_io::write_json(result, fs::path(c.out) / "eval_eye.json");
    }
    return 0;
}

int infer_cmd(const Common& c, const std::string& face_data, const std::string& eye_data,
              const std::string& face_weights, const std::string& eye_weights, const std::string& identity_path,
              const std::string& poses_path, const std::string& split, int export_objs)
{
    const FaceDataset faces = load_face_dataset(face_data);
    const EyeDataset eyes = load_eye_dataset(eye_data);
    const FaceBasis basis = load_basis(faces.root / faces.basis_file);
    nets::Network face_net = nets::load_network(face_weights);
    nets::Network eye_net = nets::load_network(eye_weights);
    const PoseProvider poses = poses_path.empty() ? PoseProvider::from_dataset(faces) : PoseProvider::from_json(poses_path);

    std::vector<const EyeFrameRecord*> eye_frames;
    for (const auto& f : eyes.frames) {
        if (!f.mirrored) {
            eye_frames.push_back(&f);
        }
    }
    if (eye_frames.empty()) {
        throw DataError("eye dataset has no full frames");
    }
    fs::create_directories(c.out);
    std::ofstream out(fs::path(c.out) / "states.jsonl");
    const auto face_fn = network_expression_regressor(face_net);
    const auto eye_fn = network_eye_regressor(eye_net);
    int processed = 0;
    int index = 0;
    for (const FaceFrameRecord& f : faces.frames) {
        if (f.split != split) {
            continue;
        }
        const std::optional<Pose> pose = poses.pose(f.frame);
        if (!pose) {
            std::cerr << "warning: no pose for frame " << f.frame << "; skipped\n";
            continue;
        }
        const FaceSubject& subject = faces.subjects.at(static_cast<std::size_t>(f.subject));
        const Identity identity = identity_path.empty() ? Identity{subject.x_id, subject.x_alb}
                                                        : load_identity(identity_path, basis);
        const EyeFrameRecord& left = *eye_frames[static_cast<std::size_t>(index) % eye_frames.size()];
        const EyeFrameRecord& right = *eye_frames[static_cast<std::size_t>(index + 1) % eye_frames.size()];
        ++index;
        const AvatarState s = process_frame(f.frame, read_image(faces.root / f.image), read_image(eyes.root / left.image),
                                            read_image(eyes.root / right.image), *pose, basis, identity, face_fn, eye_fn);
        out << avatar_to_json(s).dump() << '\n';
        if (processed < export_objs) {
            export_avatar(s, basis, fs::path(c.out) / ("frame_" + std::to_string(f.frame) + ".obj"));
        }
        ++processed;
    }
    std::cout << "processed " << processed << " frames; wrote " << (fs::path(c.out) / "states.jsonl").string() << '\n';
    return 0;
}

int retarget_cmd(const Common& c, const std::string& states_path, const std::string& basis_path,
                 const std::string& identity_path, int export_objs)
{
    const FaceBasis basis = load_basis(basis_path);
    const Identity identity = load_identity(identity_path, basis);
    fs::create_directories(c.out);
    std::ofstream out(fs::path(c.out) / "states.jsonl");
    int n = 0;
    for (const json& j : json_io::read_jsonl(states_path)) {
        const AvatarState s = retarget(avatar_from_json(j), identity.x_id, identity.x_alb, basis);
        out << avatar_to_json(s).dump() << '\n';
        if (n < export_objs) {
            export_avatar(s, basis, fs::path(c.out) / ("frame_" + std::to_string(s.frame) + ".obj"));
        }
        ++n;
    }
    std::cout << "retargeted " << n << " states\n";
    return 0;
}

int bench_cmd(const Common& c, int frames, const std::string& face_weights, const std::string& eye_weights)
{
    const FaceBasis basis = gen_basis(basis_spec(c));
    const FaceDataConfig face_config = with_overrides(FaceDataConfig::desk(), c);
    const EyeDataConfig eye_config = EyeDataConfig::desk();
    const HmdProxy hmd = HmdProxy::standard();
    nets::Network face_net = face_weights.empty()
                                 ? nets::Network(nets::NetworkSpec::face_desk(basis.dim_exp(), face_config.rgb ? 3 : 1))
                                 : nets::load_network(face_weights);
    nets::Network eye_net = eye_weights.empty() ? nets::Network(nets::NetworkSpec::eye()) : nets::load_network(eye_weights);

    // Inputs are rendered up front so that timings exclude rendering and disk I/O.
    const FaceSubject subject = face_subject(basis, face_config, c.seed, 0);
    const Identity identity{subject.x_id, subject.x_alb};
    const EyeRenderSpec eye_spec = eye_subject_spec(eye_config, c.seed, 0);
    std::vector<FrameInput> inputs;
    std::vector<Pose> poses;
    const RenderOptions options{face_config.light_dir, face_config.rgb};
    for (int i = 0; i < frames; ++i) {
        const FaceParams p = face_frame_params(basis, face_config, subject, c.seed, i);
        const Pose pose = face_frame_pose(face_config, c.seed, 0, i);
        const Image face =
            mask_hmd(render_face(basis, p, pose, face_config.image_cols, face_config.image_rows, options), hmd, pose);
        inputs.push_back({i, face, render_eye(eye_frame_state(eye_config, c.seed, 0, 2 * i), eye_spec).image,
                          render_eye(eye_frame_state(eye_config, c.seed, 0, 2 * i + 1), eye_spec).image});
        poses.push_back(pose);
    }

    const auto face_fn = network_expression_regressor(face_net);
    const auto eye_fn = network_eye_regressor(eye_net);
    std::vector<double> crop_ms, face_ms, eye_ms, total_ms;
    BenchReport report;
    report.frames = frames;
    report.total = benchmark(
        [&](int i) {
            const FrameInput& in = inputs[static_cast<std::size_t>(i)];
            const AvatarState s = process_frame(i, in.face, in.left_eye, in.right_eye, poses[static_cast<std::size_t>(i)],
                                                basis, identity, face_fn, eye_fn);
            crop_ms.push_back(s.timings.face_crop);
            face_ms.push_back(s.timings.face_net);
            eye_ms.push_back(s.timings.eye_net);
        },
        frames);
    // drop the warm-up calls
    auto measured = [](std::vector<double> v) { return std::vector<double>(v.begin() + 5, v.end()); };
    report.face_crop = timing_stats(measured(crop_ms));
    report.face_net = timing_stats(measured(face_ms));
    report.eye_net = timing_stats(measured(eye_ms));
    const Eigen::Vector2d centre((kEyeFrameCols - 1) / 2.0, (kEyeFrameRows - 1) / 2.0);
    report.pupil_baseline = benchmark(
        [&](int i) {
            try {
                const PupilDetection d = detect_pupil(inputs[static_cast<std::size_t>(i)].left_eye);
                (void)gaze_baseline(d.fit, centre);
            } catch (const std::exception&) {
            }
        },
        frames);

    std::cout << format_bench_report(report);
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        json_io::write_json(bench_report_to_json(report), fs::path(c.out) / "bench.json");
    }
    return 0;
}

int pupil_debug_cmd(const Common& c, const std::string& image_path)
{
    const Image image = to_grayscale(read_image(image_path));
    fs::create_directories(c.out);
    const fs::path prefix = fs::path(c.out) / fs::path(image_path).stem();
    dump_pupil_debug(image, prefix);
    const PupilDetection d = detect_pupil(image);
    const Eigen::Vector2d centre((image.cols() - 1) / 2.0, (image.rows() - 1) / 2.0);
    const GazeAngles g = gaze_baseline(d.fit, centre);
    print_json({{"seed", {d.seed.row, d.seed.col}},
                {"ellipse", ellipse_to_json(d.fit)},
                {"pupil_size", pupil_labels(d.fit).size},
                {"baseline_pitch", g.pitch},
                {"baseline_yaw", g.yaw}});
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Synthetic HMD face and eye capture toolkit"};
    app.require_subcommand(1);

    Common basis_c, face_c, eye_c, fit_c, tface_c, teye_c, eface_c, eeye_c, infer_c, retarget_c, bench_c, pupil_c;

    auto* gen_basis_app = app.add_subcommand("gen-basis", "Generate a synthetic morphable model");
    add_common(gen_basis_app, basis_c, true);

    std::string face_basis;
    auto* gen_face_app = app.add_subcommand("gen-face-data", "Render a masked face training corpus");
    add_common(gen_face_app, face_c, true);
    gen_face_app->add_option("--basis", face_basis, "Basis file (default: generated from preset and seed)")
        ->check(CLI::ExistingFile);

    auto* gen_eye_app = app.add_subcommand("gen-eye-data", "Render a labelled IR eye corpus");
    add_common(gen_eye_app, eye_c, true);

    std::string fit_basis, fit_landmarks, fit_data;
    int fit_subject = 0, fit_frames = 8;
    double fit_noise = 0.0;
    auto* fit_app = app.add_subcommand("fit-identity", "Fit identity and expressions to 2D landmarks");
    add_common(fit_app, fit_c, true);
    fit_app->add_option("--basis", fit_basis)->check(CLI::ExistingFile);
    fit_app->add_option("--landmarks", fit_landmarks, "Landmark JSON")->check(CLI::ExistingFile);
    fit_app->add_option("--data", fit_data, "Face dataset to take ground-truth landmarks from")
        ->check(CLI::ExistingDirectory);
    fit_app->add_option("--subject", fit_subject)->capture_default_str();
    fit_app->add_option("--frames", fit_frames, "Frames used with --data")->capture_default_str();
    fit_app->add_option("--noise", fit_noise, "Landmark noise sigma in pixels with --data")->capture_default_str();

    std::string tface_data, tface_loss = "combined";
    auto* tface_app = app.add_subcommand("train-face", "Train the facial expression network");
    add_common(tface_app, tface_c, true);
    tface_app->add_option("--data", tface_data)->required()->check(CLI::ExistingDirectory);
    tface_app->add_option("--loss", tface_loss)->check(CLI::IsMember({"l2", "combined"}))->capture_default_str();

    std::string teye_data;
    auto* teye_app = app.add_subcommand("train-eye", "Train the eye gaze network");
    add_common(teye_app, teye_c, true);
    teye_app->add_option("--data", teye_data)->required()->check(CLI::ExistingDirectory);

    std::string eface_data, eface_weights, eface_split = "test";
    auto* eface_app = app.add_subcommand("eval-face", "Mean landmark error of a facial network");
    add_common(eface_app, eface_c, false);
    eface_app->add_option("--data", eface_data)->required()->check(CLI::ExistingDirectory);
    eface_app->add_option("--weights", eface_weights)->required()->check(CLI::ExistingFile);
    eface_app->add_option("--split", eface_split)->capture_default_str();

    std::string eeye_data, eeye_weights, eeye_split = "test";
    auto* eeye_app = app.add_subcommand("eval-eye", "Gaze error of the eye network and the ellipse baseline");
    add_common(eeye_app, eeye_c, false);
    eeye_app->add_option("--data", eeye_data)->required()->check(CLI::ExistingDirectory);
    eeye_app->add_option("--weights", eeye_weights)->required()->check(CLI::ExistingFile);
    eeye_app->add_option("--split", eeye_split)->capture_default_str();

    std::string inf_face, inf_eye, inf_fw, inf_ew, inf_identity, inf_poses, inf_split = "test";
    int inf_objs = 0;
    auto* infer_app = app.add_subcommand("infer", "Run the capture pipeline over a dataset");
    add_common(infer_app, infer_c, true);
    infer_app->add_option("--face-data", inf_face)->required()->check(CLI::ExistingDirectory);
    infer_app->add_option("--eye-data", inf_eye)->required()->check(CLI::ExistingDirectory);
    infer_app->add_option("--face-weights", inf_fw)->required()->check(CLI::ExistingFile);
    infer_app->add_option("--eye-weights", inf_ew)->required()->check(CLI::ExistingFile);
    infer_app->add_option("--identity", inf_identity, "identity.json (default: dataset identity)")
        ->check(CLI::ExistingFile);
    infer_app->add_option("--poses", inf_poses, "Pose stream JSON (default: dataset poses)")->check(CLI::ExistingFile);
    infer_app->add_option("--split", inf_split)->capture_default_str();
    infer_app->add_option("--export-obj", inf_objs, "Export OBJ meshes for the first N frames")->capture_default_str();

    std::string rt_states, rt_basis, rt_identity;
    int rt_objs = 0;
    auto* retarget_app = app.add_subcommand("retarget", "Drive another identity with captured states");
    add_common(retarget_app, retarget_c, true);
    retarget_app->add_option("--states", rt_states)->required()->check(CLI::ExistingFile);
    retarget_app->add_option("--basis", rt_basis)->required()->check(CLI::ExistingFile);
    retarget_app->add_option("--identity", rt_identity)->required()->check(CLI::ExistingFile);
    retarget_app->add_option("--export-obj", rt_objs)->capture_default_str();

    int bench_frames = 50;
    std::string bench_fw, bench_ew;
    auto* bench_app = app.add_subcommand("bench", "Per-stage timing of the capture pipeline");
    add_common(bench_app, bench_c, false);
    bench_app->add_option("--frames", bench_frames)->check(CLI::Range(10, 100000))->capture_default_str();
    bench_app->add_option("--face-weights", bench_fw)->check(CLI::ExistingFile);
    bench_app->add_option("--eye-weights", bench_ew)->check(CLI::ExistingFile);

    std::string pupil_image;
    auto* pupil_app = app.add_subcommand("pupil-debug", "Dump pupil-pipeline intermediates for one image");
    add_common(pupil_app, pupil_c, true);
    pupil_app->add_option("--image", pupil_image)->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen_basis_app) return gen_basis_cmd(basis_c);
        if (*gen_face_app) return gen_face_data_cmd(face_c, face_basis);
        if (*gen_eye_app) return gen_eye_data_cmd(eye_c);
        if (*fit_app) return fit_identity_cmd(fit_c, fit_basis, fit_landmarks, fit_data, fit_subject, fit_frames, fit_noise);
        if (*tface_app) return train_face_cmd(tface_c, tface_data, tface_loss);
        if (*teye_app) return train_eye_cmd(teye_c, teye_data);
        if (*eface_app) return eval_face_cmd(eface_c, eface_data, eface_weights, eface_split);
        if (*eeye_app) return eval_eye_cmd(eeye_c, eeye_data, eeye_weights, eeye_split);
        if (*infer_app)
            return infer_cmd(infer_c, inf_face, inf_eye, inf_fw, inf_ew, inf_identity, inf_poses, inf_split, inf_objs);
        if (*retarget_app) return retarget_cmd(retarget_c, rt_states, rt_basis, rt_identity, rt_objs);
        if (*bench_app) return bench_cmd(bench_c, bench_frames, bench_fw, bench_ew);
        if (*pupil_app) return pupil_debug_cmd(pupil_c, pupil_image);
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        // DataError, I/O, malformed JSON
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
