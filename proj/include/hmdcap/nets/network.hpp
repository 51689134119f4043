#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmdcap/nets/layers.hpp"

namespace hmdcap::nets {

/// Layer descriptors as JSON objects:
///   {"type": "conv", "kernel": [h, w], "channels": n, "stride": s, "padding": p}
///   {"type": "relu"} | {"type": "maxpool", "size": [h, w]} | {"type": "residual", "channels": n}
///   {"type": "gap"} | {"type": "fc", "out": n}
struct NetworkSpec {
    Shape input;
    std::vector<nlohmann::json> layers;
    std::uint64_t seed = 1;

    nlohmann::json to_json() const;
    static NetworkSpec from_json(const nlohmann::json& j);

    /// Desk-scale facial regressor.
    static NetworkSpec face_desk(int dim_exp, int channels = 1);
    /// ResNet-18 layout with the final layer replaced by an FC to dim_exp.
    static NetworkSpec face_resnet18(int dim_exp, int channels = 1);
    /// 11x11 and 5x5 convolutions with ReLU, pooling, and a 5-way FC.
    static NetworkSpec eye();
};

class Network {
public:
    /// Builds the layers, checks shape compatibility and initialises weights from spec.seed.
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    Shape output_shape() const { return output_; }

    Tensor forward(const Tensor& input);
    /// Backpropagates dL/d(output) of the latest forward call; parameter gradients accumulate.
    Tensor backward(const Tensor& grad_output);

    std::vector<Param*> params();
    std::size_t parameter_count();
    void zero_grad();

    std::vector<std::unique_ptr<Layer>>& layers() { return layers_; }

private:
    NetworkSpec spec_;
    Shape output_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Tensor> activations_;
};

/// Binary "FEN1" weights (layer-ordered 64-bit payloads) plus a JSON sidecar (path + ".json") with the spec.
void save_network(Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

} // namespace hmdcap::nets
