#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "hmdcap/face_model.hpp"
#include "hmdcap/image.hpp"

namespace hmdcap {

struct SyntheticBasisSpec {
    std::uint64_t seed = 1;
    int vertex_count = 2500;
    int dim_id = 10;
    int dim_exp = 10;
    int dim_alb = 10;
    double decay = 0.85;

    /// 100 / 79 / 100 dimensions.
    static SyntheticBasisSpec paper();
    static SyntheticBasisSpec desk();
};

/// Seeded stand-in for a licensed morphable model: a half-ellipsoid face with a mouth region,
/// smooth random identity/albedo axes and mouth-centred expression axes, all orthonormal.
FaceBasis gen_basis(const SyntheticBasisSpec& spec);

/// Headset occluder in face object space: vertex = scale * mesh vertex + mount_offset.
struct HmdProxy {
    Mesh mesh;
    Eigen::Vector3d mount_offset = Eigen::Vector3d::Zero();
    double scale = 1.0;

    /// Rounded box covering the face above the nose.
    static HmdProxy standard();

    /// The occluder mesh in face object space.
    Mesh placed_mesh() const;
};

struct RenderOptions {
    Eigen::Vector3d light_dir = Eigen::Vector3d(0.0, 0.0, -1.0); ///< direction towards the light
    bool rgb = false;
};

/// Z-buffered flat-shaded Lambertian rendering; background pixels are 255.
Image render_face(const FaceBasis& basis, const FaceParams& params, const Pose& pose, int width, int height,
                  const RenderOptions& options = {});

/// Sets to 0 every pixel whose centre lies inside the projection of an HMD triangle.
Image mask_hmd(const Image& image, const HmdProxy& hmd, const Pose& pose);

struct CropOffset {
    int row = 0;
    int col = 0;
    bool operator==(const CropOffset&) const = default;
};

inline constexpr int kFaceRegionRows = 120;
inline constexpr int kFaceRegionCols = 230;
inline constexpr int kFaceInputRows = 112;
inline constexpr int kFaceInputCols = 224;

struct FaceRegion {
    Image image;       ///< kFaceRegionRows x kFaceRegionCols
    CropOffset offset; ///< top-left corner in the source image
};

/// Window centred on the projected lower-landmark centroid, clamped to the image.
/// Throws DataError when a landmark projects outside the image.
FaceRegion crop_face_region(const Image& image, const Pose& pose, const FaceBasis& basis, const FaceParams& params);

struct Crop {
    Image image;
    CropOffset offset;
};

/// `count` random kFaceInputRows x kFaceInputCols windows of a face region.
std::vector<Crop> random_crops(const Image& region, int count, std::uint64_t seed);

/// The centred window used at inference time.
CropOffset centre_crop_offset();

struct FaceDataConfig {
    int subjects = 6;
    std::vector<int> frames_per_subject = std::vector<int>(6, 40);
    int crops_per_frame = 10;
    int test_subject = 5;
    int image_rows = 256;
    int image_cols = 320;
    double base_scale = 90.0;
    double exp_amplitude = 2.5;
    double id_amplitude = 2.0;
    double alb_amplitude = 2.0;
    double yaw_amplitude_deg = 15.0;
    double pitch_amplitude_deg = 10.0;
    double roll_amplitude_deg = 3.0;
    double translation_jitter = 4.0;
    Eigen::Vector3d light_dir = Eigen::Vector3d(-0.25, -0.3, -1.0);
    bool rgb = false;

    static FaceDataConfig paper();
    static FaceDataConfig desk();

    int total_frames() const;
    int total_samples() const { return total_frames() * crops_per_frame; }
    void validate() const;
};

void to_json(nlohmann::json& j, const FaceDataConfig& c);
void from_json(const nlohmann::json& j, FaceDataConfig& c);

struct FaceSubject {
    int id = 0;
    Eigen::VectorXd x_id;
    Eigen::VectorXd x_alb;
    std::string split;
};

/// One rendered frame: the masked full image plus the exact parameters used.
struct FaceFrameRecord {
    int frame = 0;
    int subject = 0;
    std::string image;
    Eigen::VectorXd x_exp;
    Pose pose;
    CropOffset region_offset;
    std::string split;
};

/// One training sample (a random crop of a frame's face region).
struct FaceSampleRecord {
    int sample = 0;
    int frame = 0;
    int subject = 0;
    std::string image;
    Eigen::VectorXd x_exp;
    Pose pose;
    CropOffset region_offset;
    CropOffset crop_offset;
    std::string split;
};

struct FaceDataset {
    std::filesystem::path root;
    std::string basis_file;
    FaceDataConfig config;
    std::uint64_t seed = 0;
    std::vector<FaceSubject> subjects;
    std::vector<FaceFrameRecord> frames;
    std::vector<FaceSampleRecord> samples;
};

/// Subject identity/albedo and the per-frame expression and pose trajectories.
FaceSubject face_subject(const FaceBasis& basis, const FaceDataConfig& config, std::uint64_t seed, int subject);
FaceParams face_frame_params(const FaceBasis& basis, const FaceDataConfig& config, const FaceSubject& subject,
                             std::uint64_t seed, int local_frame);
Pose face_frame_pose(const FaceDataConfig& config, std::uint64_t seed, int subject, int local_frame);

/// Neutral-expression parameters used to place the crop window ("according to the face pose").
FaceParams neutral_params(const FaceBasis& basis, const FaceSubject& subject);

/// Writes manifest.json, labels.jsonl, basis.feb, frames/ and images/ under `out_dir`.
FaceDataset gen_face_dataset(const FaceBasis& basis, const FaceDataConfig& config, const HmdProxy& hmd,
                             const std::filesystem::path& out_dir, std::uint64_t seed);

FaceDataset load_face_dataset(const std::filesystem::path& dir);

} // namespace hmdcap
