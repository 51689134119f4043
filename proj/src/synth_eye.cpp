#include "hmdcap/synth_eye.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "hmdcap/error.hpp"
#include "hmdcap/json_io.hpp"
#include "hmdcap/pupil_pipeline.hpp"
#include "hmdcap/seeding.hpp"

namespace hmdcap {

EyeRenderSpec EyeRenderSpec::standard()
{
    EyeRenderSpec spec;
    const Eigen::Vector2d centre((spec.width - 1) / 2.0, (spec.height - 1) / 2.0);
    for (int k = 0; k < 6; ++k) {
        const double a = k * std::numbers::pi / 3.0;
        spec.glints[k] = centre + 45.0 * Eigen::Vector2d(std::cos(a), std::sin(a));
    }
    return spec;
}

void EyeRenderSpec::validate() const
{
    if (width < 16 || height < 16) {
        throw std::invalid_argument("EyeRenderSpec: image too small");
    }
    if (iris_color_index < 0 || iris_color_index > 19) {
        throw std::invalid_argument("EyeRenderSpec: iris_color_index must lie in 0..19");
    }
    if (!(pupil < iris() && iris() < sclera && sclera < 255.0)) {
        throw std::invalid_argument("EyeRenderSpec: intensities must satisfy pupil < iris < sclera < 255");
    }
    if (noise < 0.0 || glint_radius <= 0.0 || iris_radius <= 0.0) {
        throw std::invalid_argument("EyeRenderSpec: negative noise or non-positive radius");
    }
}

Eigen::Vector3d gaze_to_vector(double pitch, double yaw)
{
    return {std::cos(pitch) * std::sin(yaw), std::sin(pitch), std::cos(pitch) * std::cos(yaw)};
}

double gaze_inclination(double pitch, double yaw)
{
    return std::acos(std::clamp(std::cos(pitch) * std::cos(yaw), -1.0, 1.0));
}

EllipseFit pupil_ellipse(const EyeState& state)
{
    const Eigen::Vector3d g = gaze_to_vector(state.pitch, state.yaw);
    EllipseFit e;
    e.centre = state.pupil_centre;
    e.a = state.pupil_size / 2.0;
    e.b = e.a * std::cos(gaze_inclination(state.pitch, state.yaw));
    const Eigen::Vector2d tilt(g.x(), -g.y());
    if (tilt.norm() > 0.0) {
        // The major axis is perpendicular to the tilt.
        double angle = std::atan2(tilt.y(), tilt.x()) + std::numbers::pi / 2.0;
        angle = std::fmod(angle, std::numbers::pi);
        if (angle < 0.0) {
            angle += std::numbers::pi;
        }
        e.orientation = angle;
    }
    return e;
}

EyeRender render_eye(const EyeState& state, const EyeRenderSpec& spec)
{
    spec.validate();
    if (!(std::abs(state.pitch) <= kMaxGazeAngle && std::abs(state.yaw) <= kMaxGazeAngle)) {
        throw std::invalid_argument("render_eye: pitch and yaw must lie within 45 degrees");
    }
    if (!(state.pupil_size >= 8.0 && state.pupil_size <= 60.0)) {
        throw std::invalid_argument("render_eye: pupil_size must lie in [8, 60] px");
    }
    if (!(state.pupil_centre.x() >= 0.0 && state.pupil_centre.x() <= spec.width - 1 &&
          state.pupil_centre.y() >= 0.0 && state.pupil_centre.y() <= spec.height - 1)) {
        throw std::invalid_argument("render_eye: pupil centre outside the image");
    }

    EyeRender out;
    out.pupil = pupil_ellipse(state);
    EllipseFit iris = out.pupil;
    iris.a = spec.iris_radius;
    iris.b = spec.iris_radius * (out.pupil.b / out.pupil.a);

    constexpr int ss = 4;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise > 0.0 ? spec.noise : 1.0);
    out.image = Image(spec.height, spec.width);
    const double reach = spec.iris_radius + 2.0;
    for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) {
            double value = spec.sclera;
            if ((Eigen::Vector2d(c, r) - state.pupil_centre).norm() <= reach) {
                double sum = 0.0;
                for (int i = 0; i < ss; ++i) {
                    for (int j = 0; j < ss; ++j) {
                        const Eigen::Vector2d p(c + (j + 0.5) / ss - 0.5, r + (i + 0.5) / ss - 0.5);
                        sum += out.pupil.contains(p) ? spec.pupil : iris.contains(p) ? spec.iris() : spec.sclera;
                    }
                }
                value = sum / (ss * ss);
            }
            if (spec.noise > 0.0) {
                value += noise(rng);
            }
            out.image.at(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 254L));
        }
    }
    for (const Eigen::Vector2d& g : spec.glints) {
        const int r0 = std::max(0, static_cast<int>(std::floor(g.y() - spec.glint_radius)));
        const int r1 = std::min(spec.height - 1, static_cast<int>(std::ceil(g.y() + spec.glint_radius)));
        const int c0 = std::max(0, static_cast<int>(std::floor(g.x() - spec.glint_radius)));
        const int c1 = std::min(spec.width - 1, static_cast<int>(std::ceil(g.x() + spec.glint_radius)));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                if ((Eigen::Vector2d(c, r) - g).norm() <= spec.glint_radius) {
                    out.image.at(r, c) = 255;
                }
            }
        }
    }
    return out;
}

EyeState mirror_state(const EyeState& state, int width)
{
    EyeState m = state;
    m.yaw = -state.yaw;
    m.pupil_centre.x() = (width - 1) - state.pupil_centre.x();
    return m;
}

namespace {

EllipseFit mirror_ellipse(const EllipseFit& e, int width)
{
    EllipseFit m = e;
    m.centre.x() = (width - 1) - e.centre.x();
    m.orientation = e.orientation == 0.0 ? 0.0 : std::numbers::pi - e.orientation;
    return m;
}

constexpr double kRowScale = static_cast<double>(kEyeFrameRows) / kEyeScaledRows;
constexpr double kColScale = static_cast<double>(kEyeFrameCols) / kEyeScaledCols;

} // namespace

Image downscale_eye(const Image& frame)
{
    if (frame.rows() != kEyeFrameRows || frame.cols() != kEyeFrameCols) {
        throw DimensionError("downscale_eye: expected a 240x320 frame");
    }
    return resize_area(frame, kEyeScaledRows, kEyeScaledCols);
}

EyeCropOffset eye_centre_offset()
{
    return {(kEyeScaledRows - kEyeInputRows) / 2, (kEyeScaledCols - kEyeInputCols) / 2};
}

Image eye_input(const Image& frame)
{
    const EyeCropOffset o = eye_centre_offset();
    return crop(downscale_eye(frame), o.row, o.col, kEyeInputRows, kEyeInputCols);
}

Eigen::Vector2d crop_adjusted_centre(const Eigen::Vector2d& centre, const EyeCropOffset& offset)
{
    const EyeCropOffset c = eye_centre_offset();
    return centre - Eigen::Vector2d((offset.col - c.col) * kColScale, (offset.row - c.row) * kRowScale);
}

namespace {

std::vector<int> split_frames(int total, int subjects)
{
    std::vector<int> out(subjects, total / subjects);
    for (int i = 0; i < total % subjects; ++i) {
        ++out[i];
    }
    return out;
}

} // namespace

EyeDataConfig EyeDataConfig::paper()
{
    EyeDataConfig c;
    c.subjects = 7;
    c.frames_per_subject = split_frames(18806, 7);
    c.test_subject = 6;
    c.crops_per_image = 10;
    c.mirror = true;
    return c;
}

EyeDataConfig EyeDataConfig::desk()
{
    return EyeDataConfig{};
}

int EyeDataConfig::total_frames() const
{
    int total = 0;
    for (int f : frames_per_subject) {
        total += f;
    }
    return total;
}

void EyeDataConfig::validate() const
{
    if (subjects < 1 || static_cast<int>(frames_per_subject.size()) != subjects) {
        throw std::invalid_argument("EyeDataConfig: frames_per_subject must list one count per subject");
    }
    if (crops_per_image < 1 || test_subject < -1 || test_subject >= subjects) {
        throw std::invalid_argument("EyeDataConfig: invalid crop count or test subject");
    }
    if (!(max_angle_deg > 0.0 && max_angle_deg <= 45.0)) {
        throw std::invalid_argument("EyeDataConfig: max_angle_deg must lie in (0, 45]");
    }
    if (!(min_pupil_size >= 8.0 && min_pupil_size <= max_pupil_size && max_pupil_size <= 60.0)) {
        throw std::invalid_argument("EyeDataConfig: pupil size range must lie within [8, 60]");
    }
}

void to_json(nlohmann::json& j, const EyeDataConfig& c)
{
    j = {{"subjects", c.subjects},
         {"frames_per_subject", c.frames_per_subject},
         {"test_subject", c.test_subject},
         {"crops_per_image", c.crops_per_image},
         {"mirror", c.mirror},
         {"eye_radius", c.eye_radius},
         {"max_angle_deg", c.max_angle_deg},
         {"min_pupil_size", c.min_pupil_size},
         {"max_pupil_size", c.max_pupil_size},
         {"subject_offset", c.subject_offset},
         {"noise", c.noise}};
}

void from_json(const nlohmann::json& j, EyeDataConfig& c)
{
    auto get = [&](const char* key, auto& value) {
        if (j.contains(key)) {
            j.at(key).get_to(value);
        }
    };
    get("subjects", c.subjects);
    get("frames_per_subject", c.frames_per_subject);
    get("test_subject", c.test_subject);
    get("crops_per_image", c.crops_per_image);
    get("mirror", c.mirror);
    get("eye_radius", c.eye_radius);
    get("max_angle_deg", c.max_angle_deg);
    get("min_pupil_size", c.min_pupil_size);
    get("max_pupil_size", c.max_pupil_size);
    get("subject_offset", c.subject_offset);
    get("noise", c.noise);
}

EyeRenderSpec eye_subject_spec(const EyeDataConfig& config, std::uint64_t seed, int subject)
{
    std::mt19937_64 rng(derive_seed(seed, {11, static_cast<std::uint64_t>(subject)}));
    std::uniform_int_distribution<int> iris(0, 19);
    std::uniform_real_distribution<double> pupil(12.0, 28.0);
    std::uniform_real_distribution<double> sclera(190.0, 220.0);
    std::uniform_real_distribution<double> iris_radius(56.0, 66.0);
    EyeRenderSpec spec = EyeRenderSpec::standard();
    spec.iris_color_index = iris(rng);
    spec.pupil = pupil(rng);
    spec.sclera = sclera(rng);
    spec.iris_radius = iris_radius(rng);
    spec.noise = config.noise;
    return spec;
}

Eigen::Vector2d eye_subject_offset(const EyeDataConfig& config, std::uint64_t seed, int subject)
{
    std::mt19937_64 rng(derive_seed(seed, {12, static_cast<std::uint64_t>(subject)}));
    std::uniform_real_distribution<double> u(-config.subject_offset, config.subject_offset);
    const double x = u(rng);
    const double y = u(rng);
    return {x, y};
}

EyeState eye_frame_state(const EyeDataConfig& config, std::uint64_t seed, int subject, int local_frame)
{
    std::mt19937_64 traj(derive_seed(seed, {13, static_cast<std::uint64_t>(subject)}));
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const double phi_radius = phase(traj);
    const double phi_circle = phase(traj);
    const double phi_size = phase(traj);
    const int sweep_start = static_cast<int>(phase(traj) / (2.0 * std::numbers::pi) * 8.0);
    std::mt19937_64 jitter(
        derive_seed(seed, {14, static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(local_frame)}));
    std::uniform_real_distribution<double> u11(-1.0, 1.0);

    const double deg = std::numbers::pi / 180.0;
    const double amplitude = config.max_angle_deg * deg;
    const int f = local_frame;
    double pitch = 0.0;
    double yaw = 0.0;
    if (f % 2 == 0) {
        // Dot moving on a circle of slowly varying radius.
        const double radius = amplitude * (0.55 + 0.45 * std::sin(0.037 * f + phi_radius));
        const double a = 0.21 * f + phi_circle;
        pitch = radius * std::sin(a);
        yaw = radius * std::cos(a);
    } else {
        // Forward/backward sweeps along the 8 compass directions.
        constexpr int segment = 15;
        const int k = f / 2;
        const int direction = (k / segment + sweep_start) % 8;
        const double t = static_cast<double>(k % segment) / (segment - 1);
        const double r = amplitude * (1.0 - std::abs(2.0 * t - 1.0));
        const double a = direction * std::numbers::pi / 4.0;
        pitch = r * std::sin(a);
        yaw = r * std::cos(a);
    }
    pitch = std::clamp(pitch + 1.0 * deg * u11(jitter), -amplitude, amplitude);
    yaw = std::clamp(yaw + 1.0 * deg * u11(jitter), -amplitude, amplitude);

    EyeState s;
    s.pitch = pitch;
    s.yaw = yaw;
    const double w = 0.5 + 0.5 * std::sin(0.05 * f + phi_size);
    s.pupil_size = config.min_pupil_size + (config.max_pupil_size - config.min_pupil_size) * w;
    const Eigen::Vector2d centre((kEyeFrameCols - 1) / 2.0, (kEyeFrameRows - 1) / 2.0);
    s.pupil_centre = centre + eye_subject_offset(config, seed, subject) +
                     config.eye_radius * Eigen::Vector2d(std::sin(yaw) * std::cos(pitch), -std::sin(pitch));
    return s;
}

nlohmann::json eye_state_to_json(const EyeState& s)
{
    return {{"pitch", s.pitch},
            {"yaw", s.yaw},
            {"pupil_size", s.pupil_size},
            {"centre", {s.pupil_centre.x(), s.pupil_centre.y()}}};
}

EyeState eye_state_from_json(const nlohmann::json& j)
{
    EyeState s;
    s.pitch = j.at("pitch").get<double>();
    s.yaw = j.at("yaw").get<double>();
    s.pupil_size = j.at("pupil_size").get<double>();
    const auto c = j.at("centre").get<std::vector<double>>();
    if (c.size() != 2) {
        throw DataError("eye state centre must hold 2 reals");
    }
    s.pupil_centre = Eigen::Vector2d(c[0], c[1]);
    return s;
}

nlohmann::json ellipse_to_json(const EllipseFit& e)
{
    return {{"centre", {e.centre.x(), e.centre.y()}}, {"a", e.a}, {"b", e.b}, {"orientation", e.orientation}};
}

EllipseFit ellipse_from_json(const nlohmann::json& j)
{
    EllipseFit e;
    const auto c = j.at("centre").get<std::vector<double>>();
    if (c.size() != 2) {
        throw DataError("ellipse centre must hold 2 reals");
    }
    e.centre = Eigen::Vector2d(c[0], c[1]);
    e.a = j.at("a").get<double>();
    e.b = j.at("b").get<double>();
    e.orientation = j.at("orientation").get<double>();
    return e;
}

namespace {

std::string numbered(const char* dir, int index)
{
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%s/%06d.pgm", dir, index);
    return buffer;
}

// Pupil size and centre labels from the classical pipeline; falls back to the render truth when the
// pipeline fails on a frame.
std::pair<EyeState, std::string> label_frame(const Image& frame, const EyeState& truth)
{
    EyeState label = truth;
    try {
        const PupilDetection d = detect_pupil(frame);
        const PupilLabels p = pupil_labels(d.fit);
        if (std::isfinite(p.size) && (p.centre - truth.pupil_centre).norm() < 10.0) {
            label.pupil_size = p.size;
            label.pupil_centre = p.centre;
            return {label, "pipeline"};
        }
    } catch (const std::exception&) {
    }
    return {label, "ground_truth"};
}

} // namespace

EyeDataset gen_eye_dataset(const EyeDataConfig& config, const std::filesystem::path& out_dir, std::uint64_t seed)
{
    config.validate();
    namespace fs = std::filesystem;
    try {
        fs::create_directories(out_dir / "images");
        fs::create_directories(out_dir / "frames");
    } catch (const fs::filesystem_error& e) {
        throw DataError(std::string("cannot create dataset directories: ") + e.what());
    }
    std::ofstream labels(out_dir / "labels.jsonl");
    if (!labels) {
        throw DataError("cannot open for writing: " + (out_dir / "labels.jsonl").string());
    }

    EyeDataset ds;
    ds.root = out_dir;
    ds.config = config;
    ds.seed = seed;
    int global = 0;
    for (int s = 0; s < config.subjects; ++s) {
        EyeRenderSpec spec = eye_subject_spec(config, seed, s);
        const std::string split = s == config.test_subject ? "test" : "train";
        for (int f = 0; f < config.frames_per_subject[s]; ++f, ++global) {
            const EyeState truth = eye_frame_state(config, seed, s, f);
            spec.seed = derive_seed(seed, {15, static_cast<std::uint64_t>(global)});
            const EyeRender render = render_eye(truth, spec);
            auto [label, source] = label_frame(render.image, truth);

            for (int m = 0; m < (config.mirror ? 2 : 1); ++m) {
                const bool mirrored = m == 1;
                const Image frame = mirrored ? mirror_horizontal(render.image) : render.image;
                EyeFrameRecord fr;
                fr.frame = static_cast<int>(ds.frames.size());
                fr.subject = s;
                fr.mirrored = mirrored;
                fr.truth = mirrored ? mirror_state(truth) : truth;
                fr.ellipse = mirrored ? mirror_ellipse(render.pupil, kEyeFrameCols) : render.pupil;
                fr.split = split;
                // Full frames are kept for the held-out split, where the classical baseline runs on them.
                if (split == "test") {
                    fr.image = numbered("frames", fr.frame);
                    write_pnm(frame, out_dir / fr.image);
                }
                ds.frames.push_back(fr);

                const EyeState frame_label = mirrored ? mirror_state(label) : label;
                const Image scaled = downscale_eye(frame);
                std::mt19937_64 rng(derive_seed(seed, {16, static_cast<std::uint64_t>(fr.frame)}));
                std::uniform_int_distribution<int> rows(0, kEyeScaledRows - kEyeInputRows);
                std::uniform_int_distribution<int> cols(0, kEyeScaledCols - kEyeInputCols);
                for (int k = 0; k < config.crops_per_image; ++k) {
                    EyeSampleRecord rec;
                    rec.sample = static_cast<int>(ds.samples.size());
                    rec.frame = fr.frame;
                    rec.subject = s;
                    rec.mirrored = mirrored;
                    rec.crop_offset.row = rows(rng);
                    rec.crop_offset.col = cols(rng);
                    rec.label = frame_label;
                    rec.label.pupil_centre = crop_adjusted_centre(frame_label.pupil_centre, rec.crop_offset);
                    rec.label_source = source;
                    rec.split = split;
                    rec.image = numbered("images", rec.sample);
                    write_pnm(crop(scaled, rec.crop_offset.row, rec.crop_offset.col, kEyeInputRows, kEyeInputCols),
                              out_dir / rec.image);
                    const nlohmann::json line = {{"sample", rec.sample},
                                                 {"frame", rec.frame},
                                                 {"subject", rec.subject},
                                                 {"mirrored", rec.mirrored},
                                                 {"image", rec.image},
                                                 {"label", eye_state_to_json(rec.label)},
                                                 {"label_source", rec.label_source},
                                                 {"crop_offset", {{"row", rec.crop_offset.row},
                                                                  {"col", rec.crop_offset.col}}},
                                                 {"truth", eye_state_to_json(fr.truth)},
                                                 {"ellipse", ellipse_to_json(fr.ellipse)},
                                                 {"split", rec.split}};
                    labels << line.dump() << '\n';
                    ds.samples.push_back(std::move(rec));
                }
            }
        }
    }
    labels.close();
    if (!labels) {
        throw DataError("write failed: " + (out_dir / "labels.jsonl").string());
    }

    nlohmann::json manifest;
    manifest["format"] = "hmdcap-eye-dataset";
    manifest["version"] = 1;
    manifest["seed"] = seed;
    manifest["config"] = config;
    manifest["image_convention"] = "row-major, origin top-left, sizes given as rows x cols";
    manifest["frame_rows"] = kEyeFrameRows;
    manifest["frame_cols"] = kEyeFrameCols;
    manifest["input_rows"] = kEyeInputRows;
    manifest["input_cols"] = kEyeInputCols;
    manifest["labels"] = "labels.jsonl";
    manifest["sample_count"] = ds.samples.size();
    manifest["frame_count"] = ds.frames.size();
    for (const EyeFrameRecord& f : ds.frames) {
        manifest["frames"].push_back({{"frame", f.frame},
                                      {"subject", f.subject},
                                      {"mirrored", f.mirrored},
                                      {"image", f.image},
                                      {"truth", eye_state_to_json(f.truth)},
                                      {"ellipse", ellipse_to_json(f.ellipse)},
                                      {"split", f.split}});
    }
    for (const EyeSampleRecord& r : ds.samples) {
        manifest["samples"].push_back({{"image", r.image}, {"label", r.sample}, {"split", r.split}});
    }
    json_io::write_json(manifest, out_dir / "manifest.json");
    return ds;
}

EyeDataset load_eye_dataset(const std::filesystem::path& dir)
{
    const nlohmann::json manifest = json_io::read_json(dir / "manifest.json");
    if (manifest.value("format", "") != "hmdcap-eye-dataset") {
        throw DataError("not an eye dataset manifest: " + (dir / "manifest.json").string());
    }
    EyeDataset ds;
    ds.root = dir;
    try {
        ds.config = manifest.at("config").get<EyeDataConfig>();
        ds.seed = manifest.at("seed").get<std::uint64_t>();
        for (const auto& f : manifest.at("frames")) {
            ds.frames.push_back({f.at("frame").get<int>(), f.at("subject").get<int>(), f.at("mirrored").get<bool>(),
                                 f.at("image").get<std::string>(), eye_state_from_json(f.at("truth")),
                                 ellipse_from_json(f.at("ellipse")), f.at("split").get<std::string>()});
        }
        for (const auto& line : json_io::read_jsonl(dir / manifest.at("labels").get<std::string>())) {
            EyeSampleRecord r;
            r.sample = line.at("sample").get<int>();
            r.frame = line.at("frame").get<int>();
            r.subject = line.at("subject").get<int>();
            r.mirrored = line.at("mirrored").get<bool>();
            r.image = line.at("image").get<std::string>();
            r.label = eye_state_from_json(line.at("label"));
            r.label_source = line.at("label_source").get<std::string>();
            r.crop_offset = {line.at("crop_offset").at("row").get<int>(), line.at("crop_offset").at("col").get<int>()};
            r.split = line.at("split").get<std::string>();
            ds.samples.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed eye dataset " + dir.string() + ": " + e.what());
    }
    if (ds.samples.size() != manifest.at("sample_count").get<std::size_t>()) {
        throw DataError("sample count mismatch between manifest and labels in " + dir.string());
    }
    return ds;
}

} // namespace hmdcap
