#include "hmdcap/nets/regressors.hpp"

#include <map>

#include "hmdcap/error.hpp"
#include "hmdcap/nets/losses.hpp"

namespace hmdcap::nets {

namespace {

constexpr double kAngleUnit = 0.5;
constexpr double kSizeOffset = 30.0;
constexpr double kSizeUnit = 20.0;
constexpr double kCentreUnit = 50.0;
const Eigen::Vector2d kFrameCentre((kEyeFrameCols - 1) / 2.0, (kEyeFrameRows - 1) / 2.0);

} // namespace

Tensor image_to_tensor(const Image& image)
{
    Tensor t(image.channels(), image.rows(), image.cols());
    for (int ch = 0; ch < image.channels(); ++ch) {
        for (int r = 0; r < image.rows(); ++r) {
            for (int c = 0; c < image.cols(); ++c) {
                t.at(ch, r, c) = image.at(r, c, ch) / 255.0;
            }
        }
    }
    return t;
}

Eigen::VectorXd eye_target(const EyeState& s)
{
    Eigen::VectorXd t(5);
    t << s.pitch / kAngleUnit, s.yaw / kAngleUnit, (s.pupil_size - kSizeOffset) / kSizeUnit,
        (s.pupil_centre.x() - kFrameCentre.x()) / kCentreUnit, (s.pupil_centre.y() - kFrameCentre.y()) / kCentreUnit;
    return t;
}

EyeState eye_state_from_target(const Eigen::VectorXd& t)
{
    if (t.size() != 5) {
        throw DimensionError("eye target must have 5 entries");
    }
    EyeState s;
    s.pitch = t[0] * kAngleUnit;
    s.yaw = t[1] * kAngleUnit;
    s.pupil_size = t[2] * kSizeUnit + kSizeOffset;
    s.pupil_centre = kFrameCentre + kCentreUnit * Eigen::Vector2d(t[3], t[4]);
    return s;
}

Eigen::VectorXd predict_expression(Network& net, const Image& face)
{
    if (face.rows() != kFaceInputRows || face.cols() != kFaceInputCols) {
        throw DimensionError("predict_expression: expected a 112x224 face crop");
    }
    return net.forward(image_to_tensor(face)).data;
}

EyeState predict_eye(Network& net, const Image& eye)
{
    if (eye.rows() != kEyeInputRows || eye.cols() != kEyeInputCols) {
        throw DimensionError("predict_eye: expected an 87x135 eye crop");
    }
    return eye_state_from_target(net.forward(image_to_tensor(eye)).data);
}

FacialLossKind facial_loss_kind(const std::string& name)
{
    if (name == "l2") {
        return FacialLossKind::l2;
    }
    if (name == "combined") {
        return FacialLossKind::combined;
    }
    throw std::invalid_argument("loss must be \"l2\" or \"combined\"");
}

std::vector<int> facial_visible_set(const FaceBasis& basis, const FaceParams& label, const Pose& pose,
                                    const HmdProxy& hmd)
{
    const Mesh mesh = evaluate_shape(basis, label);
    const Mesh occluder = hmd.placed_mesh();
    const PosedMesh posed[] = {{&occluder, pose}};
    return visible_vertices(mesh, pose, posed);
}

FaceTrainingData load_face_training(const FaceDataset& dataset, const FaceBasis& basis, const HmdProxy& hmd,
                                    const std::string& split, FacialLossKind kind, const TrainConfig& config)
{
    FaceTrainingData data;
    const FacialLossWeights weights = kind == FacialLossKind::l2 ? FacialLossWeights{0.0, 0.0}
                                                                 : FacialLossWeights{config.omega_d, config.omega_l};
    std::map<int, int> frame_metric;
    for (const FaceSampleRecord& s : dataset.samples) {
        if (s.split != split) {
            continue;
        }
        if (s.x_exp.size() != basis.dim_exp()) {
            throw DimensionError("face sample label length does not match the basis");
        }
        auto it = frame_metric.find(s.frame);
        if (it == frame_metric.end()) {
            std::vector<int> visible;
            if (kind == FacialLossKind::combined && weights.omega_d != 0.0) {
                const FaceSubject& subject = dataset.subjects.at(static_cast<std::size_t>(s.subject));
                FaceParams label = neutral_params(basis, subject);
                label.x_exp = s.x_exp;
                visible = facial_visible_set(basis, label, s.pose, hmd);
            }
            data.metrics.push_back(facial_loss_metric(basis, s.pose, weights, visible));
            it = frame_metric.emplace(s.frame, static_cast<int>(data.metrics.size()) - 1).first;
        }
        data.images.push_back(read_image(dataset.root / s.image));
        data.labels.push_back(s.x_exp);
        data.metric_index.push_back(it->second);
    }
    return data;
}

std::vector<EpochRecord> train_face(Network& net, const FaceTrainingData& data, const TrainConfig& config,
                                    const std::function<void(const EpochRecord&)>& on_epoch)
{
    return train(
        net, data.images.size(), [&](std::size_t i) { return image_to_tensor(data.images[i]); },
        [&](std::size_t i, const Tensor& out, Tensor& grad) {
            const LossValue l = quadratic_loss(data.metrics[static_cast<std::size_t>(data.metric_index[i])],
                                               out.data, data.labels[i]);
            grad.data = l.grad;
            return l.value;
        },
        config, on_epoch);
}

EyeTrainingData load_eye_training(const EyeDataset& dataset, const std::string& split)
{
    EyeTrainingData data;
    for (const EyeSampleRecord& s : dataset.samples) {
        if (s.split != split) {
            continue;
        }
        data.images.push_back(read_image(dataset.root / s.image));
        data.targets.push_back(eye_target(s.label));
    }
    return data;
}

std::vector<EpochRecord> train_eye(Network& net, const EyeTrainingData& data, const TrainConfig& config,
                                   const std::function<void(const EpochRecord&)>& on_epoch)
{
    return train(
        net, data.images.size(), [&](std::size_t i) { return image_to_tensor(data.images[i]); },
        [&](std::size_t i, const Tensor& out, Tensor& grad) {
            const LossValue l = eye_loss(out.data, data.targets[i]);
            grad.data = l.grad;
            return l.value;
        },
        config, on_epoch);
}

} // namespace hmdcap::nets
