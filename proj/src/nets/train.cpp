#include "hmdcap/nets/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "hmdcap/error.hpp"
#include "hmdcap/seeding.hpp"

namespace hmdcap::nets {

TrainConfig TrainConfig::facial_paper()
{
    return TrainConfig{};
}

TrainConfig TrainConfig::eye_paper()
{
    TrainConfig c;
    c.learning_rate = 1e-4;
    c.decay = 0.96;
    c.interval = DecayInterval::half_epoch;
    c.epochs = 70;
    c.batch_size = 256;
    return c;
}

// Desk presets keep the paper schedules' shape but use Adam: plain SGD at the paper rates does not
// move far enough in a desk-sized epoch budget.
TrainConfig TrainConfig::facial_desk()
{
    TrainConfig c;
    c.epochs = 20;
    c.batch_size = 16;
    c.optimizer = Optimizer::adam;
    return c;
}

TrainConfig TrainConfig::eye_desk()
{
    TrainConfig c = eye_paper();
    c.learning_rate = 1e-3;
    c.epochs = 10;
    c.batch_size = 16;
    c.optimizer = Optimizer::adam;
    return c;
}

double TrainConfig::learning_rate_at(int epoch, bool second_half) const
{
    const int k = interval == DecayInterval::epoch ? epoch : 2 * epoch + (second_half ? 1 : 0);
    return learning_rate * std::pow(decay, k);
}

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0) || !(decay > 0.0) || epochs < 1 || batch_size < 1 || omega_d < 0.0 ||
        omega_l < 0.0 || momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("TrainConfig: invalid hyperparameters");
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c)
{
    j = {{"learning_rate", c.learning_rate},
         {"decay", c.decay},
         {"interval", c.interval == DecayInterval::epoch ? "epoch" : "half_epoch"},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"omega_d", c.omega_d},
         {"omega_l", c.omega_l},
         {"momentum", c.momentum},
         {"optimizer", c.optimizer == Optimizer::sgd ? "sgd" : "adam"},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c)
{
    auto get = [&](const char* key, auto& value) {
        if (j.contains(key)) {
            j.at(key).get_to(value);
        }
    };
    get("learning_rate", c.learning_rate);
    get("decay", c.decay);
    if (j.contains("interval")) {
        const auto s = j.at("interval").get<std::string>();
        if (s != "epoch" && s != "half_epoch") {
            throw DataError("interval must be \"epoch\" or \"half_epoch\"");
        }
        c.interval = s == "epoch" ? DecayInterval::epoch : DecayInterval::half_epoch;
    }
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("omega_d", c.omega_d);
    get("omega_l", c.omega_l);
    get("momentum", c.momentum);
    if (j.contains("optimizer")) {
        const auto s = j.at("optimizer").get<std::string>();
        if (s != "sgd" && s != "adam") {
            throw DataError("optimizer must be \"sgd\" or \"adam\"");
        }
        c.optimizer = s == "sgd" ? Optimizer::sgd : Optimizer::adam;
    }
    get("seed", c.seed);
}

nlohmann::json epoch_to_json(const EpochRecord& r)
{
    return {{"epoch", r.epoch}, {"learning_rate", r.learning_rate}, {"loss", r.loss}};
}

void sgd_step(Network& net, double learning_rate, double momentum)
{
    for (Param* p : net.params()) {
        p->velocity = momentum * p->velocity + p->grad;
        p->value -= learning_rate * p->velocity;
    }
}

void adam_step(Network& net, double learning_rate, double beta1, long step)
{
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (Param* p : net.params()) {
        if (p->second.size() != p->value.size()) {
            p->second = Eigen::VectorXd::Zero(p->value.size());
        }
        p->velocity = beta1 * p->velocity + (1.0 - beta1) * p->grad;
        p->second = beta2 * p->second + (1.0 - beta2) * p->grad.cwiseAbs2();
        p->value.array() -= learning_rate * (p->velocity.array() / c1) / ((p->second.array() / c2).sqrt() + eps);
    }
}

std::vector<EpochRecord> train(Network& net, std::size_t sample_count, const SampleInput& input,
                               const SampleLoss& loss, const TrainConfig& config,
                               const std::function<void(const EpochRecord&)>& on_epoch)
{
    config.validate();
    if (sample_count == 0) {
        throw DataError("train: empty training set");
    }
    std::vector<std::size_t> order(sample_count);
    std::vector<EpochRecord> history;
    const Shape out_shape = net.output_shape();
    long step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(config.seed, {0x5eed, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = sample_count - 1; i > 0; --i) {
            std::uniform_int_distribution<std::size_t> pick(0, i);
            std::swap(order[i], order[pick(rng)]);
        }
        double total = 0.0;
        for (std::size_t start = 0; start < sample_count; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(sample_count, start + static_cast<std::size_t>(config.batch_size));
            const double scale = 1.0 / static_cast<double>(end - start);
            net.zero_grad();
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t s = order[k];
                const Tensor out = net.forward(input(s));
                Tensor grad(out_shape.c, out_shape.h, out_shape.w);
                const double value = loss(s, out, grad);
                if (!std::isfinite(value) || !grad.data.allFinite()) {
                    throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", sample " + std::to_string(s));
                }
                total += value;
                grad.data *= scale;
                net.backward(grad);
            }
            const bool second_half = 2 * start >= sample_count;
            const double lr = config.learning_rate_at(epoch, second_half);
            if (config.optimizer == Optimizer::adam) {
                adam_step(net, lr, config.momentum, ++step);
            } else {
                sgd_step(net, lr, config.momentum);
            }
        }
        EpochRecord record{epoch, config.learning_rate_at(epoch), total / static_cast<double>(sample_count)};
        if (!std::isfinite(record.loss)) {
            throw NumericalError("training diverged at epoch " + std::to_string(epoch));
        }
        history.push_back(record);
        if (on_epoch) {
            on_epoch(record);
        }
    }
    return history;
}

} // namespace hmdcap::nets
