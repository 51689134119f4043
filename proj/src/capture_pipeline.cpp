#include "hmdcap/capture_pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "hmdcap/error.hpp"
#include "hmdcap/json_io.hpp"
#include "hmdcap/nets/regressors.hpp"
#include "hmdcap/pupil_pipeline.hpp"

namespace hmdcap {

using namespace json_io;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

nlohmann::json timings_to_json(const StageTimings& t)
{
    return {{"face_crop", t.face_crop}, {"face_net", t.face_net}, {"eye_net", t.eye_net}, {"total", t.total}};
}

void check_identity(const Identity& identity, const FaceBasis& basis)
{
    if (identity.x_id.size() != basis.dim_id() || identity.x_alb.size() != basis.dim_alb()) {
        throw DimensionError("identity coefficients do not match the basis");
    }
}

} // namespace

nlohmann::json avatar_to_json(const AvatarState& s)
{
    return {{"frame", s.frame},
            {"x_id", vector_to_json(s.x_id)},
            {"x_alb", vector_to_json(s.x_alb)},
            {"x_exp", vector_to_json(s.x_exp)},
            {"pose", pose_to_json(s.pose)},
            {"left_eye", eye_state_to_json(s.left_eye)},
            {"right_eye", eye_state_to_json(s.right_eye)},
            {"timings_ms", timings_to_json(s.timings)}};
}

AvatarState avatar_from_json(const nlohmann::json& j)
{
    AvatarState s;
    s.frame = j.at("frame").get<int>();
    s.x_id = vector_from_json(j.at("x_id"));
    s.x_alb = vector_from_json(j.at("x_alb"));
    s.x_exp = vector_from_json(j.at("x_exp"));
    s.pose = pose_from_json(j.at("pose"));
    s.left_eye = eye_state_from_json(j.at("left_eye"));
    s.right_eye = eye_state_from_json(j.at("right_eye"));
    if (j.contains("timings_ms")) {
        const auto& t = j.at("timings_ms");
        s.timings = {t.at("face_crop").get<double>(), t.at("face_net").get<double>(), t.at("eye_net").get<double>(),
                     t.at("total").get<double>()};
    }
    return s;
}

ExpressionRegressor network_expression_regressor(nets::Network& net)
{
    return [&net](const Image& crop) { return nets::predict_expression(net, crop); };
}

EyeRegressor network_eye_regressor(nets::Network& net)
{
    return [&net](const Image& crop) { return nets::predict_eye(net, crop); };
}

PoseProvider PoseProvider::from_dataset(const FaceDataset& dataset)
{
    std::map<int, Pose> poses;
    for (const FaceFrameRecord& f : dataset.frames) {
        poses.emplace(f.frame, f.pose);
    }
    return PoseProvider(std::move(poses));
}

PoseProvider PoseProvider::from_json(const std::filesystem::path& path)
{
    const nlohmann::json j = read_json(path);
    std::map<int, Pose> poses;
    try {
        for (const auto& entry : j.at("poses")) {
            const int frame = entry.at("frame").get<int>();
            if (!poses.emplace(frame, pose_from_json(entry.at("pose"))).second) {
                throw DataError(path.string() + ": duplicate pose for frame " + std::to_string(frame));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return PoseProvider(std::move(poses));
}

std::optional<Pose> PoseProvider::pose(int frame) const
{
    const auto it = poses_.find(frame);
    if (it == poses_.end()) {
        return std::nullopt;
    }
    return it->second;
}

Image face_input(const Image& frame, const Pose& pose, const FaceBasis& basis, const Identity& identity)
{
    FaceParams neutral = FaceParams::zeros(basis);
    neutral.x_id = identity.x_id;
    neutral.x_alb = identity.x_alb;
    const FaceRegion region = crop_face_region(frame, pose, basis, neutral);
    const CropOffset c = centre_crop_offset();
    return crop(region.image, c.row, c.col, kFaceInputRows, kFaceInputCols);
}

AvatarState process_frame(int frame, const Image& face_image, const Image& left_eye_image,
                          const Image& right_eye_image, const Pose& pose, const FaceBasis& basis,
                          const Identity& identity, const ExpressionRegressor& face_net, const EyeRegressor& eye_net)
{
    check_identity(identity, basis);
    for (const Image* eye : {&left_eye_image, &right_eye_image}) {
        if (eye->rows() != kEyeFrameRows || eye->cols() != kEyeFrameCols) {
            throw DimensionError("process_frame: eye images must be 240x320");
        }
    }
    AvatarState s;
    s.frame = frame;
    s.x_id = identity.x_id;
    s.x_alb = identity.x_alb;
    s.pose = pose;

    const auto start = Clock::now();
    const Image crop_image = face_input(face_image, pose, basis, identity);
    s.timings.face_crop = ms_since(start);

    const auto face_start = Clock::now();
    s.x_exp = face_net(crop_image);
    s.timings.face_net = ms_since(face_start);
    if (s.x_exp.size() != basis.dim_exp()) {
        throw DimensionError("expression regressor output does not match the basis");
    }

    const auto eye_start = Clock::now();
    s.left_eye = eye_net(eye_input(left_eye_image));
    s.right_eye = eye_net(eye_input(right_eye_image));
    s.timings.eye_net = ms_since(eye_start);
    s.timings.total = ms_since(start);
    return s;
}

std::vector<AvatarState> process_sequence(std::span<const FrameInput> frames, const PoseProvider& poses,
                                          const FaceBasis& basis, const Identity& identity,
                                          const ExpressionRegressor& face_net, const EyeRegressor& eye_net,
                                          const std::function<void(const std::string&)>& warn)
{
    std::vector<AvatarState> states;
    states.reserve(frames.size());
    for (const FrameInput& f : frames) {
        const std::optional<Pose> pose = poses.pose(f.frame);
        if (!pose) {
            if (warn) {
                warn("no pose for frame " + std::to_string(f.frame) + "; skipped");
            }
            continue;
        }
        states.push_back(
            process_frame(f.frame, f.face, f.left_eye, f.right_eye, *pose, basis, identity, face_net, eye_net));
    }
    return states;
}

AvatarState retarget(const AvatarState& state, const Eigen::VectorXd& x_id, const Eigen::VectorXd& x_alb,
                     const FaceBasis& basis)
{
    if (x_id.size() != basis.dim_id() || x_alb.size() != basis.dim_alb()) {
        throw DimensionError("retarget: coefficients do not match the basis");
    }
    AvatarState out = state;
    out.x_id = x_id;
    out.x_alb = x_alb;
    return out;
}

std::filesystem::path export_avatar(const AvatarState& state, const FaceBasis& basis,
                                    const std::filesystem::path& obj_path)
{
    const FaceParams params{state.x_id, state.x_exp, state.x_alb};
    const Mesh mesh = evaluate_shape(basis, params);
    const Eigen::VectorXd albedo = evaluate_albedo(basis, params);

    std::ofstream obj(obj_path);
    if (!obj) {
        throw DataError("cannot write " + obj_path.string());
    }
    obj << "# hmdcap avatar, frame " << state.frame << "\n";
    char line[160];
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        const Eigen::Vector3d v = mesh.vertex(i);
        const Eigen::Vector3d c = albedo.segment<3>(3 * i).cwiseMax(0.0).cwiseMin(1.0);
        std::snprintf(line, sizeof line, "v %.9g %.9g %.9g %.9g %.9g %.9g\n", v.x(), v.y(), v.z(), c.x(), c.y(),
                      c.z());
        obj << line;
    }
    for (const Triangle& t : *mesh.triangles) {
        obj << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    }
    if (!obj) {
        throw DataError("failed writing " + obj_path.string());
    }

    auto gaze = [](const EyeState& e) {
        const Eigen::Vector3d g = gaze_to_vector(e.pitch, e.yaw);
        return nlohmann::json{{"pitch", e.pitch}, {"yaw", e.yaw}, {"vector", {g.x(), g.y(), g.z()}}};
    };
    std::filesystem::path gaze_path = obj_path;
    gaze_path.replace_extension(".gaze.json");
    write_json({{"frame", state.frame}, {"left", gaze(state.left_eye)}, {"right", gaze(state.right_eye)}},
               gaze_path);
    return gaze_path;
}

std::vector<Eigen::Vector3d> read_obj_vertices(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read " + path.string());
    }
    std::vector<Eigen::Vector3d> vertices;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("v ", 0) != 0) {
            continue;
        }
        std::istringstream ss(line.substr(2));
        Eigen::Vector3d v;
        if (!(ss >> v.x() >> v.y() >> v.z())) {
            throw DataError(path.string() + ": malformed vertex line");
        }
        vertices.push_back(v);
    }
    return vertices;
}

double mean_landmark_error(std::span<const AvatarState> states, const FaceDataset& truth, const FaceBasis& basis)
{
    if (states.empty()) {
        throw DataError("mean_landmark_error: no states");
    }
    std::map<int, const FaceFrameRecord*> frames;
    for (const FaceFrameRecord& f : truth.frames) {
        frames.emplace(f.frame, &f);
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (const AvatarState& s : states) {
        const auto it = frames.find(s.frame);
        if (it == frames.end()) {
            throw DataError("mean_landmark_error: frame " + std::to_string(s.frame) + " not in the ground truth");
        }
        const FaceFrameRecord& f = *it->second;
        FaceParams gt = neutral_params(basis, truth.subjects.at(static_cast<std::size_t>(f.subject)));
        gt.x_exp = f.x_exp;
        const FaceParams pred{s.x_id, s.x_exp, s.x_alb};
        const auto a = landmarks_2d(basis, gt, f.pose, LandmarkSet::lower);
        const auto b = landmarks_2d(basis, pred, s.pose, LandmarkSet::lower);
        for (std::size_t i = 0; i < a.size(); ++i) {
            sum += (a[i] - b[i]).norm();
        }
        count += a.size();
    }
    return sum / static_cast<double>(count);
}

double mean_gaze_error(std::span<const EyeState> predicted, std::span<const EyeState> labels)
{
    if (predicted.size() != labels.size()) {
        throw DimensionError("mean_gaze_error: count mismatch");
    }
    if (predicted.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const Eigen::Vector3d a = gaze_to_vector(predicted[i].pitch, predicted[i].yaw);
        const Eigen::Vector3d b = gaze_to_vector(labels[i].pitch, labels[i].yaw);
        // half-angle form: accurate near 0 and 180 degrees, and exactly 0 for identical vectors
        sum += 2.0 * std::atan2((a - b).norm(), (a + b).norm());
    }
    return sum / static_cast<double>(predicted.size()) * 180.0 / std::numbers::pi;
}

FaceEvaluation evaluate_face(const ExpressionRegressor& face_net, const FaceDataset& dataset,
                             const FaceBasis& basis, const std::string& split)
{
    FaceEvaluation ev;
    for (const FaceFrameRecord& f : dataset.frames) {
        if (f.split != split) {
            continue;
        }
        const FaceSubject& subject = dataset.subjects.at(static_cast<std::size_t>(f.subject));
        const Identity identity{subject.x_id, subject.x_alb};
        const Image frame = read_image(dataset.root / f.image);
        AvatarState s;
        s.frame = f.frame;
        s.x_id = identity.x_id;
        s.x_alb = identity.x_alb;
        s.pose = f.pose;
        const auto start = Clock::now();
        const Image input = face_input(frame, f.pose, basis, identity);
        s.timings.face_crop = ms_since(start);
        const auto net_start = Clock::now();
        s.x_exp = face_net(input);
        s.timings.face_net = ms_since(net_start);
        s.timings.total = ms_since(start);
        ev.states.push_back(std::move(s));
    }
    if (ev.states.empty()) {
        throw DataError("evaluate_face: no frames in split \"" + split + "\"");
    }
    ev.mean_landmark_error = mean_landmark_error(ev.states, dataset, basis);
    return ev;
}

EyeEvaluation evaluate_eye(const EyeRegressor& eye_net, const EyeDataset& dataset, const std::string& split)
{
    EyeEvaluation ev;
    const Eigen::Vector2d image_centre((kEyeFrameCols - 1) / 2.0, (kEyeFrameRows - 1) / 2.0);
    double net_total = 0.0;
    double baseline_total = 0.0;
    for (const EyeFrameRecord& f : dataset.frames) {
        if (f.split != split) {
            continue;
        }
        const Image frame = read_image(dataset.root / f.image);
        const auto start = Clock::now();
        const EyeState predicted = eye_net(eye_input(frame));
        net_total += ms_since(start);

        const auto baseline_start = Clock::now();
        EyeState baseline = f.truth;
        try {
            const PupilDetection detection = detect_pupil(frame);
            const GazeAngles gaze = gaze_baseline(detection.fit, image_centre);
            const PupilLabels labels = pupil_labels(detection.fit);
            baseline.pitch = gaze.pitch;
            baseline.yaw = gaze.yaw;
            baseline.pupil_size = labels.size;
            baseline.pupil_centre = labels.centre;
        } catch (const std::exception&) {
            baseline.pitch = 0.0;
            baseline.yaw = 0.0;
            ++ev.baseline_failures;
        }
        baseline_total += ms_since(baseline_start);

        ev.predicted.push_back(predicted);
        ev.baseline.push_back(baseline);
        ev.truth.push_back(f.truth);
    }
    ev.frames = static_cast<int>(ev.truth.size());
    if (ev.frames == 0) {
        throw DataError("evaluate_eye: no full frames in split \"" + split + "\"");
    }
    ev.net_gaze_error = mean_gaze_error(ev.predicted, ev.truth);
    ev.baseline_gaze_error = mean_gaze_error(ev.baseline, ev.truth);
    ev.net_ms = net_total / ev.frames;
    ev.baseline_ms = baseline_total / ev.frames;
    return ev;
}

TimingStats timing_stats(std::vector<double> samples)
{
    if (samples.empty()) {
        return {};
    }
    std::sort(samples.begin(), samples.end());
    TimingStats s;
    double total = 0.0;
    for (double v : samples) {
        total += v;
    }
    s.mean = total / static_cast<double>(samples.size());
    const std::size_t n = samples.size();
    s.median = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    // nearest-rank percentile
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
    s.p95 = samples[std::max<std::size_t>(rank, 1) - 1];
    return s;
}

TimingStats benchmark(const std::function<void(int frame)>& fn, int frames)
{
    if (frames < 10) {
        throw std::invalid_argument("benchmark needs at least 10 frames");
    }
    for (int i = 0; i < 5; ++i) {
        fn(i);
    }
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(frames));
    for (int i = 0; i < frames; ++i) {
        const auto start = Clock::now();
        fn(i);
        samples.push_back(ms_since(start));
    }
    return timing_stats(std::move(samples));
}

std::string format_bench_report(const BenchReport& r)
{
    std::ostringstream out;
    char line[200];
    out << "per-stage wall clock over " << r.frames << " frames (ms)\n";
    std::snprintf(line, sizeof line, "%-22s %10s %10s %10s\n", "stage", "mean", "median", "p95");
    out << line;
    auto row = [&](const char* name, const TimingStats& s) {
        std::snprintf(line, sizeof line, "%-22s %10.3f %10.3f %10.3f\n", name, s.mean, s.median, s.p95);
        out << line;
    };
    row("face crop", r.face_crop);
    row("facial network", r.face_net);
    row("eye network (2 eyes)", r.eye_net);
    row("frame total", r.total);
    row("pupil baseline (1 eye)", r.pupil_baseline);

    const double fps = r.total.mean > 0.0 ? 1000.0 / r.total.mean : 0.0;
    out << "\ncomparison with the published figures (different hardware and network size)\n";
    std::snprintf(line, sizeof line, "%-28s %12s %12s\n", "quantity", "published", "this run");
    out << line;
    auto cmp = [&](const char* name, double paper, double ours, const char* unit) {
        std::snprintf(line, sizeof line, "%-28s %9.2f %-2s %9.2f %-2s\n", name, paper, unit, ours, unit);
        out << line;
    };
    cmp("facial network", 31.5, r.face_net.mean, "ms");
    cmp("eye network (per eye)", 2.18, r.eye_net.mean / 2.0, "ms");
    cmp("pupil baseline (per eye)", 136.9, r.pupil_baseline.mean, "ms");
    cmp("end-to-end rate", 30.0, fps, "fps");
    return out.str();
}

nlohmann::json bench_report_to_json(const BenchReport& r)
{
    auto stats = [](const TimingStats& s) { return nlohmann::json{{"mean", s.mean}, {"median", s.median}, {"p95", s.p95}}; };
    return {{"frames", r.frames},
            {"stages_ms",
             {{"face_crop", stats(r.face_crop)},
              {"face_net", stats(r.face_net)},
              {"eye_net", stats(r.eye_net)},
              {"total", stats(r.total)},
              {"pupil_baseline", stats(r.pupil_baseline)}}},
            {"published",
             {{"face_net_ms", 31.5}, {"eye_net_ms", 2.18}, {"pupil_baseline_ms", 136.9}, {"fps", 30.0}}}};
}

} // namespace hmdcap
