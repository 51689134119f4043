#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "hmdcap/face_model.hpp"
#include "hmdcap/image.hpp"
#include "hmdcap/nets/network.hpp"
#include "hmdcap/synth_eye.hpp"
#include "hmdcap/synth_face.hpp"

namespace hmdcap {

/// Wall-clock milliseconds per stage of one frame.
struct StageTimings {
    double face_crop = 0.0;
    double face_net = 0.0;
    double eye_net = 0.0; ///< both eyes, including downscale and crop
    double total = 0.0;
};

struct AvatarState {
    int frame = 0;
    Eigen::VectorXd x_id;
    Eigen::VectorXd x_alb;
    Eigen::VectorXd x_exp;
    Pose pose;
    EyeState left_eye;
    EyeState right_eye;
    StageTimings timings;
};

nlohmann::json avatar_to_json(const AvatarState& s);
AvatarState avatar_from_json(const nlohmann::json& j);

/// Subject identity held fixed over a session (from fit-identity or a dataset).
struct Identity {
    Eigen::VectorXd x_id;
    Eigen::VectorXd x_alb;
};

/// Maps a 112x224 face crop to expression coefficients.
using ExpressionRegressor = std::function<Eigen::VectorXd(const Image& face_crop)>;
/// Maps an 87x135 eye crop to an eye state in full-frame pixel units.
using EyeRegressor = std::function<EyeState(const Image& eye_crop)>;

/// Regressors backed by trained networks; the network must outlive the returned function.
ExpressionRegressor network_expression_regressor(nets::Network& net);
EyeRegressor network_eye_regressor(nets::Network& net);

/// Stand-in for marker-based head tracking: one pose per frame id.
class PoseProvider {
public:
    PoseProvider() = default;
    explicit PoseProvider(std::map<int, Pose> poses) : poses_(std::move(poses)) {}

    /// Ground-truth poses of a face dataset's frames.
    static PoseProvider from_dataset(const FaceDataset& dataset);
    /// {"poses": [{"frame": id, "pose": {...}}, ...]}; a repeated frame id is a DataError.
    static PoseProvider from_json(const std::filesystem::path& path);

    std::optional<Pose> pose(int frame) const;
    std::size_t size() const { return poses_.size(); }

private:
    std::map<int, Pose> poses_;
};

/// The centred 112x224 face crop the facial network sees for a masked frame at `pose`.
Image face_input(const Image& frame, const Pose& pose, const FaceBasis& basis, const Identity& identity);

/// One frame of the online path: crop the face per pose, run both regressors, assemble the state.
/// Eye images are full 240x320 frames.
AvatarState process_frame(int frame, const Image& face_image, const Image& left_eye_image,
                          const Image& right_eye_image, const Pose& pose, const FaceBasis& basis,
                          const Identity& identity, const ExpressionRegressor& face_net, const EyeRegressor& eye_net);

struct FrameInput {
    int frame = 0;
    Image face;
    Image left_eye;
    Image right_eye;
};

/// Processes frames in order; frames without a pose are skipped and reported through `warn`.
std::vector<AvatarState> process_sequence(std::span<const FrameInput> frames, const PoseProvider& poses,
                                          const FaceBasis& basis, const Identity& identity,
                                          const ExpressionRegressor& face_net, const EyeRegressor& eye_net,
                                          const std::function<void(const std::string&)>& warn = {});

/// Replaces identity and albedo; expression, pose, eyes and timings are kept.
AvatarState retarget(const AvatarState& state, const Eigen::VectorXd& x_id, const Eigen::VectorXd& x_alb,
                     const FaceBasis& basis);

/// Writes an OBJ ("v x y z r g b" per vertex, colours clamped to [0, 1], 9 significant digits) and
/// a gaze JSON next to it (same stem, ".gaze.json"). Returns the gaze JSON path.
std::filesystem::path export_avatar(const AvatarState& state, const FaceBasis& basis,
                                    const std::filesystem::path& obj_path);

/// Vertex positions of an OBJ written by export_avatar.
std::vector<Eigen::Vector3d> read_obj_vertices(const std::filesystem::path& path);

/// Mean over states and the 29 lower landmarks of the projected L2 distance to the dataset frame
/// with the same id (ground-truth identity, expression and pose).
double mean_landmark_error(std::span<const AvatarState> states, const FaceDataset& truth, const FaceBasis& basis);

/// Mean angle in degrees between predicted and labelled gaze directions.
double mean_gaze_error(std::span<const EyeState> predicted, std::span<const EyeState> labels);

struct FaceEvaluation {
    std::vector<AvatarState> states; ///< eye states left at their defaults
    double mean_landmark_error = 0.0;
};

/// Runs the facial regressor on the centred crop of every frame of `split`, with the frame's
/// ground-truth pose and subject identity.
FaceEvaluation evaluate_face(const ExpressionRegressor& face_net, const FaceDataset& dataset,
                             const FaceBasis& basis, const std::string& split = "test");

struct EyeEvaluation {
    int frames = 0;
    double net_gaze_error = 0.0;      ///< degrees
    double baseline_gaze_error = 0.0; ///< degrees; failed detections count as straight-ahead gaze
    int baseline_failures = 0;
    double net_ms = 0.0;      ///< mean per frame: downscale, crop and forward pass
    double baseline_ms = 0.0; ///< mean per frame: pupil detection and axis-ratio gaze
    std::vector<EyeState> predicted;
    std::vector<EyeState> baseline;
    std::vector<EyeState> truth;
};

/// Net versus ellipse-ratio baseline on the full frames of `split`.
EyeEvaluation evaluate_eye(const EyeRegressor& eye_net, const EyeDataset& dataset, const std::string& split = "test");

struct TimingStats {
    double mean = 0.0;
    double median = 0.0;
    double p95 = 0.0;
};

TimingStats timing_stats(std::vector<double> samples_ms);

/// Calls fn on the first five frames as warm-up, then times each of `frames` calls (>= 10).
TimingStats benchmark(const std::function<void(int frame)>& fn, int frames);

struct BenchReport {
    int frames = 0;
    TimingStats face_crop;
    TimingStats face_net;
    TimingStats eye_net;
    TimingStats total;
    TimingStats pupil_baseline; ///< per eye frame
};

/// Per-stage table plus the comparison against the published figures.
std::string format_bench_report(const BenchReport& report);
nlohmann::json bench_report_to_json(const BenchReport& report);

} // namespace hmdcap
