#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "hmdcap/ellipse.hpp"
#include "hmdcap/image.hpp"

namespace hmdcap {

/// The five regressed eye parameters. Angles in radians, sizes and positions in pixels of the
/// 320x240 camera frame.
struct EyeState {
    double pitch = 0.0;
    double yaw = 0.0;
    double pupil_size = 30.0; ///< major-axis length
    Eigen::Vector2d pupil_centre = Eigen::Vector2d(159.5, 119.5);

    bool operator==(const EyeState&) const = default;
};

inline constexpr int kEyeFrameRows = 240;
inline constexpr int kEyeFrameCols = 320;
inline constexpr int kEyeScaledRows = 95;
inline constexpr int kEyeScaledCols = 147;
inline constexpr int kEyeInputRows = 87;
inline constexpr int kEyeInputCols = 135;
inline constexpr double kMaxGazeAngle = 0.7853981633974483; // 45 degrees

struct EyeRenderSpec {
    int width = kEyeFrameCols;
    int height = kEyeFrameRows;
    int iris_color_index = 0; ///< 0..19, selects the iris gray level
    std::array<Eigen::Vector2d, 6> glints;
    double glint_radius = 2.5;
    double sclera = 205.0;
    double pupil = 20.0;
    double iris_radius = 62.0;
    double noise = 3.0; ///< standard deviation of additive Gaussian noise
    std::uint64_t seed = 0;

    /// Six glints on a hexagonal ring of radius 45 around the image centre.
    static EyeRenderSpec standard();

    double iris() const { return 60.0 + 5.0 * iris_color_index; }
    void validate() const;
};

struct EyeRender {
    Image image;
    EllipseFit pupil; ///< the ellipse that was drawn
};

/// Unit gaze vector (cos p sin y, sin p, cos p cos y).
Eigen::Vector3d gaze_to_vector(double pitch, double yaw);

/// Angle between the gaze and the camera axis.
double gaze_inclination(double pitch, double yaw);

/// The projected pupil ellipse for a state: major axis = pupil_size, minor/major = cos(inclination),
/// minor axis along the image-plane tilt direction.
EllipseFit pupil_ellipse(const EyeState& state);

/// Stylized IR eye image: sclera background, concentric iris and pupil ellipses (4x4 supersampled),
/// additive seeded noise, and six saturated glints. Throws std::invalid_argument for states outside
/// the generation range.
EyeRender render_eye(const EyeState& state, const EyeRenderSpec& spec);

/// Mirrors a state across the vertical image axis of a frame `width` pixels wide.
EyeState mirror_state(const EyeState& state, int width = kEyeFrameCols);

struct EyeCropOffset {
    int row = 0;
    int col = 0;
    bool operator==(const EyeCropOffset&) const = default;
};

/// Area-downscales a 240x320 frame to 95x147.
Image downscale_eye(const Image& frame);

/// The centred 87x135 window of a downscaled frame.
EyeCropOffset eye_centre_offset();

/// Network input for a full frame: downscale, then centre crop.
Image eye_input(const Image& frame);

/// Pupil centre label in frame coordinates as seen through a crop at `offset`: the shift relative to
/// the centred crop, mapped back to frame pixels, is subtracted so the label is relative to the content.
Eigen::Vector2d crop_adjusted_centre(const Eigen::Vector2d& centre, const EyeCropOffset& offset);

struct EyeDataConfig {
    int subjects = 7;
    std::vector<int> frames_per_subject = {100, 100, 100, 100, 100, 100, 500};
    int test_subject = 6;
    int crops_per_image = 3;
    bool mirror = true;
    double eye_radius = 70.0; ///< pupil-centre displacement per unit gaze sine, pixels
    double max_angle_deg = 40.0;
    double min_pupil_size = 16.0;
    double max_pupil_size = 50.0;
    double subject_offset = 8.0; ///< max per-subject shift of the eye in the frame, pixels
    double noise = 3.0;

    static EyeDataConfig paper();
    static EyeDataConfig desk();

    int total_frames() const;
    int total_samples() const { return total_frames() * (mirror ? 2 : 1) * crops_per_image; }
    void validate() const;
};

void to_json(nlohmann::json& j, const EyeDataConfig& c);
void from_json(const nlohmann::json& j, EyeDataConfig& c);

/// Per-subject appearance and the gaze trajectory (circle, then sweeps along 8 directions).
EyeRenderSpec eye_subject_spec(const EyeDataConfig& config, std::uint64_t seed, int subject);
Eigen::Vector2d eye_subject_offset(const EyeDataConfig& config, std::uint64_t seed, int subject);
EyeState eye_frame_state(const EyeDataConfig& config, std::uint64_t seed, int subject, int local_frame);

struct EyeFrameRecord {
    int frame = 0;
    int subject = 0;
    bool mirrored = false;
    std::string image; ///< full 240x320 frame
    EyeState truth;
    EllipseFit ellipse;
    std::string split;
};

struct EyeSampleRecord {
    int sample = 0;
    int frame = 0; ///< index into EyeDataset::frames
    int subject = 0;
    bool mirrored = false;
    std::string image; ///< 87x135 crop
    EyeState label;    ///< pitch/yaw from the generator; size/centre from the pupil pipeline
    std::string label_source;
    EyeCropOffset crop_offset;
    std::string split;
};

struct EyeDataset {
    std::filesystem::path root;
    EyeDataConfig config;
    std::uint64_t seed = 0;
    std::vector<EyeFrameRecord> frames;
    std::vector<EyeSampleRecord> samples;
};

EyeDataset gen_eye_dataset(const EyeDataConfig& config, const std::filesystem::path& out_dir, std::uint64_t seed);
EyeDataset load_eye_dataset(const std::filesystem::path& dir);

nlohmann::json eye_state_to_json(const EyeState& s);
EyeState eye_state_from_json(const nlohmann::json& j);
nlohmann::json ellipse_to_json(const EllipseFit& e);
EllipseFit ellipse_from_json(const nlohmann::json& j);

} // namespace hmdcap
