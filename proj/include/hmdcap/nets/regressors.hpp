#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hmdcap/face_model.hpp"
#include "hmdcap/image.hpp"
#include "hmdcap/nets/network.hpp"
#include "hmdcap/nets/train.hpp"
#include "hmdcap/synth_eye.hpp"
#include "hmdcap/synth_face.hpp"

namespace hmdcap::nets {

/// pixel / 255 in (C, H, W) order; no mean subtraction, so masked pixels stay exactly 0.
Tensor image_to_tensor(const Image& image);

/// Eye targets are regressed in normalised units: angles / 0.5 rad, (size - 30) / 20,
/// (centre - frame centre) / 50.
Eigen::VectorXd eye_target(const EyeState& state);
EyeState eye_state_from_target(const Eigen::VectorXd& target);

/// Pure forward passes on a 112x224 face crop / 87x135 eye crop.
Eigen::VectorXd predict_expression(Network& net, const Image& face);
EyeState predict_eye(Network& net, const Image& eye);

enum class FacialLossKind { l2, combined };

FacialLossKind facial_loss_kind(const std::string& name);

/// Vertices of the label mesh not hidden by the mesh itself or by the posed HMD.
std::vector<int> facial_visible_set(const FaceBasis& basis, const FaceParams& label, const Pose& pose,
                                    const HmdProxy& hmd);

struct FaceTrainingData {
    std::vector<Image> images;
    std::vector<Eigen::VectorXd> labels;
    std::vector<int> metric_index;        ///< per sample, into metrics (crops of a frame share one)
    std::vector<Eigen::MatrixXd> metrics; ///< quadratic form of the loss per frame
};

/// Loads the samples of one split with their per-frame loss metrics.
FaceTrainingData load_face_training(const FaceDataset& dataset, const FaceBasis& basis, const HmdProxy& hmd,
                                    const std::string& split, FacialLossKind kind, const TrainConfig& config);

std::vector<EpochRecord> train_face(Network& net, const FaceTrainingData& data, const TrainConfig& config,
                                    const std::function<void(const EpochRecord&)>& on_epoch = {});

struct EyeTrainingData {
    std::vector<Image> images;
    std::vector<Eigen::VectorXd> targets;
};

EyeTrainingData load_eye_training(const EyeDataset& dataset, const std::string& split);

std::vector<EpochRecord> train_eye(Network& net, const EyeTrainingData& data, const TrainConfig& config,
                                   const std::function<void(const EpochRecord&)>& on_epoch = {});

} // namespace hmdcap::nets
