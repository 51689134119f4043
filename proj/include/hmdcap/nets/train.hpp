#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hmdcap/nets/network.hpp"

namespace hmdcap::nets {

enum class DecayInterval { epoch, half_epoch };

enum class Optimizer { sgd, adam };

struct TrainConfig {
    double learning_rate = 1e-3;
    double decay = 0.9;
    DecayInterval interval = DecayInterval::epoch;
    int epochs = 70;
    int batch_size = 64;
    double omega_d = 1e-6;
    double omega_l = 1.0;
    double momentum = 0.9; ///< SGD momentum, or Adam's beta1
    Optimizer optimizer = Optimizer::sgd;
    std::uint64_t seed = 1;

    static TrainConfig facial_paper();
    static TrainConfig eye_paper();
    static TrainConfig facial_desk();
    static TrainConfig eye_desk();

    /// learning_rate * decay^k, k counting whole epochs or half epochs.
    double learning_rate_at(int epoch, bool second_half = false) const;
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
    int epoch = 0;
    double learning_rate = 0.0; ///< at the start of the epoch
    double loss = 0.0;          ///< mean per-sample training loss over the epoch
};

nlohmann::json epoch_to_json(const EpochRecord& r);

/// Per-sample network input.
using SampleInput = std::function<Tensor(std::size_t sample)>;
/// Per-sample loss: returns the value and writes dL/d(output) into `grad`.
using SampleLoss = std::function<double(std::size_t sample, const Tensor& output, Tensor& grad)>;

/// Mini-batch SGD with momentum (v = mu v + g; w -= lr v), or Adam, on the mean per-sample loss. Samples are
/// visited in a per-epoch permutation derived from the seed and accumulated serially, so runs are
/// bit-reproducible. Throws NumericalError when the loss becomes non-finite.
std::vector<EpochRecord> train(Network& net, std::size_t sample_count, const SampleInput& input,
                               const SampleLoss& loss, const TrainConfig& config,
                               const std::function<void(const EpochRecord&)>& on_epoch = {});

/// One SGD-with-momentum update using the gradients currently stored in the parameters.
void sgd_step(Network& net, double learning_rate, double momentum);

/// One Adam update (beta2 = 0.999, eps = 1e-8); `step` counts from 1.
void adam_step(Network& net, double learning_rate, double beta1, long step);

} // namespace hmdcap::nets
