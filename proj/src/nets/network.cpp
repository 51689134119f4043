#include "hmdcap/nets/network.hpp"

#include <fstream>
#include <random>

#include "hmdcap/binary_io.hpp"
#include "hmdcap/error.hpp"
#include "hmdcap/json_io.hpp"

namespace hmdcap::nets {

nlohmann::json NetworkSpec::to_json() const
{
    return {{"input", {input.c, input.h, input.w}}, {"layers", layers}, {"seed", seed}};
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j)
{
    NetworkSpec s;
    try {
        const auto in = j.at("input").get<std::vector<int>>();
        if (in.size() != 3) {
            throw DataError("network spec input must be [channels, rows, cols]");
        }
        s.input = {in[0], in[1], in[2]};
        s.layers = j.at("layers").get<std::vector<nlohmann::json>>();
        s.seed = j.value("seed", std::uint64_t{1});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed network spec: ") + e.what());
    }
    return s;
}

namespace {

nlohmann::json conv(int k, int channels, int stride, int padding)
{
    return {{"type", "conv"}, {"kernel", {k, k}}, {"channels", channels}, {"stride", stride}, {"padding", padding}};
}

} // namespace

NetworkSpec NetworkSpec::face_desk(int dim_exp, int channels)
{
    NetworkSpec s;
    s.input = {channels, 112, 224};
    s.layers = {conv(7, 8, 2, 3),
                {{"type", "relu"}},
                {{"type", "maxpool"}, {"size", {2, 2}}},
                conv(3, 16, 2, 1),
                {{"type", "relu"}},
                {{"type", "residual"}, {"channels", 16}},
                {{"type", "residual"}, {"channels", 16}},
                {{"type", "maxpool"}, {"size", {2, 2}}},
                {{"type", "fc"}, {"out", dim_exp}}};
    return s;
}

NetworkSpec NetworkSpec::face_resnet18(int dim_exp, int channels)
{
    NetworkSpec s;
    s.input = {channels, 112, 224};
    s.layers = {conv(7, 64, 2, 3), {{"type", "relu"}}, {{"type", "maxpool"}, {"size", {2, 2}}}};
    int width = 64;
    for (int stage = 0; stage < 4; ++stage) {
        if (stage > 0) {
            width *= 2;
            s.layers.push_back(conv(3, width, 2, 1));
            s.layers.push_back({{"type", "relu"}});
        }
        s.layers.push_back({{"type", "residual"}, {"channels", width}});
        s.layers.push_back({{"type", "residual"}, {"channels", width}});
    }
    s.layers.push_back({{"type", "gap"}});
    s.layers.push_back({{"type", "fc"}, {"out", dim_exp}});
    return s;
}

NetworkSpec NetworkSpec::eye()
{
    NetworkSpec s;
    s.input = {1, 87, 135};
    s.layers = {conv(11, 16, 2, 0),
                {{"type", "relu"}},
                conv(5, 32, 2, 0),
                {{"type", "relu"}},
                {{"type", "maxpool"}, {"size", {2, 2}}},
                conv(5, 32, 1, 2),
                {{"type", "relu"}},
                {{"type", "maxpool"}, {"size", {2, 2}}},
                {{"type", "fc"}, {"out", 5}}};
    return s;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec))
{
    if (spec_.input.c < 1 || spec_.input.h < 1 || spec_.input.w < 1) {
        throw DimensionError("network input shape must be positive");
    }
    Shape shape = spec_.input;
    for (const nlohmann::json& d : spec_.layers) {
        const std::string type = d.value("type", "");
        std::unique_ptr<Layer> layer;
        try {
            if (type == "conv") {
                const auto k = d.at("kernel").get<std::vector<int>>();
                layer = std::make_unique<Conv2D>(shape.c, d.at("channels").get<int>(), k.at(0), k.at(1),
                                                 d.value("stride", 1), d.value("padding", 0));
            } else if (type == "relu") {
                layer = std::make_unique<ReLU>();
            } else if (type == "maxpool") {
                const auto k = d.at("size").get<std::vector<int>>();
                layer = std::make_unique<MaxPool>(k.at(0), k.at(1));
            } else if (type == "residual") {
                const int channels = d.at("channels").get<int>();
                if (channels != shape.c) {
                    throw DimensionError("residual block channels " + std::to_string(channels) +
                                         " do not match input " + shape.str());
                }
                layer = std::make_unique<ResidualBlock>(channels);
            } else if (type == "gap") {
                layer = std::make_unique<GlobalAvgPool>();
            } else if (type == "fc") {
                layer = std::make_unique<FullyConnected>(shape.c * shape.h * shape.w, d.at("out").get<int>());
            } else {
                throw DataError("unknown layer type \"" + type + "\"");
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed layer descriptor: ") + e.what());
        }
        shape = layer->output_shape(shape);
        layers_.push_back(std::move(layer));
    }
    output_ = shape;
    std::mt19937_64 rng(spec_.seed);
    for (auto& layer : layers_) {
        layer->init(rng);
    }
}

Tensor Network::forward(const Tensor& input)
{
    if (!(shape_of(input) == spec_.input)) {
        throw DimensionError("network input: expected " + spec_.input.str() + ", got " + shape_of(input).str());
    }
    Tensor current = input;
    Tensor next;
    for (auto& layer : layers_) {
        layer->forward(current, next);
        std::swap(current, next);
    }
    return current;
}

Tensor Network::backward(const Tensor& grad_output)
{
    if (!(shape_of(grad_output) == output_)) {
        throw DimensionError("network backward: gradient shape " + shape_of(grad_output).str() + " != output " +
                             output_.str());
    }
    Tensor current = grad_output;
    Tensor next;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        (*it)->backward(current, next);
        std::swap(current, next);
    }
    return current;
}

std::vector<Param*> Network::params()
{
    std::vector<Param*> out;
    for (auto& layer : layers_) {
        for (Param* p : layer->params()) {
            out.push_back(p);
        }
    }
    return out;
}

std::size_t Network::parameter_count()
{
    std::size_t n = 0;
    for (Param* p : params()) {
        n += static_cast<std::size_t>(p->value.size());
    }
    return n;
}

void Network::zero_grad()
{
    for (Param* p : params()) {
        p->grad.setZero();
    }
}

void save_network(Network& net, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path.string());
    }
    binary::write_magic(out, "FEN1");
    const auto params = net.params();
    binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (Param* p : params) {
        binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.size()));
        binary::write_reals(out, std::span<const double>(p->value.data(), static_cast<std::size_t>(p->value.size())));
    }
    out.close();
    if (!out) {
        throw DataError("write failed: " + path.string());
    }
    json_io::write_json(net.spec().to_json(), path.string() + ".json");
}

Network load_network(const std::filesystem::path& path)
{
    Network net(NetworkSpec::from_json(json_io::read_json(path.string() + ".json")));
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open: " + path.string());
    }
    binary::expect_magic(in, "FEN1");
    const auto params = net.params();
    if (binary::read<std::uint32_t>(in) != params.size()) {
        throw DataError(path.string() + ": parameter tensor count does not match the spec");
    }
    for (Param* p : params) {
        if (binary::read<std::uint64_t>(in) != static_cast<std::uint64_t>(p->value.size())) {
            throw DataError(path.string() + ": parameter size does not match the spec");
        }
        binary::read_reals(in, std::span<double>(p->value.data(), static_cast<std::size_t>(p->value.size())));
    }
    return net;
}

} // namespace hmdcap::nets
