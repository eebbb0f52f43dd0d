#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oxysense/dataset.hpp"

namespace oxysense {

/// Feed-forward architecture: hidden_layers sigmoid layers of
/// neurons_per_layer neurons each, and a scaled-sigmoid output head
/// output_scale * sigmoid(z) so predictions stay inside (0, output_scale).
struct NetworkSpec {
    Eigen::Index input_dim = 16;
    Eigen::Index hidden_layers = 1;
    Eigen::Index neurons_per_layer = 10;
    double output_scale = 110.0;

    void validate() const;
};

/// Weights and biases, hidden layers first, output layer last.
/// weights[l] is (n x fan_in) for hidden layers and (1 x n) for the output.
struct NetworkModel {
    NetworkSpec spec;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

struct AdamState {
    std::vector<Eigen::MatrixXd> m_weights, v_weights;
    std::vector<Eigen::VectorXd> m_biases, v_biases;
    long step = 0;

    static AdamState zeros_like(const NetworkModel& model);
};

struct TrainConfig {
    double learning_rate = 0.001;
    long epochs = 100000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    long log_every = 1000;

    void validate() const;
};

struct TrainReport {
    double final_cost = 0.0;
    std::vector<std::pair<long, double>> cost_trace;  // (epoch, J)
    double duration_seconds = 0.0;
    TrainConfig config;
};

/// Thrown when the cost turns non-finite during training.
class TrainingDivergedError : public std::runtime_error {
public:
    TrainingDivergedError(long epoch, double cost);
    long epoch;
    double cost;
};

/// Weights uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)] from the stream
/// (seed, "init"), biases zero. Deterministic in (spec, seed).
NetworkModel init_model(const NetworkSpec& spec, std::uint64_t seed);

double forward(const NetworkModel& model, const Eigen::VectorXd& ratios);

/// Batched forward pass; features holds one observation per column.
Eigen::VectorXd forward_batch(const NetworkModel& model, const Eigen::MatrixXd& features);

/// Mean squared error J = (1/m) * sum (pred_j - o2_j)^2.
double cost_mse(const NetworkModel& model, const Dataset& data);

/// Analytic gradient of the MSE cost for every weight and bias.
Gradients backward(const NetworkModel& model, const Dataset& data);

/// One Adam update at step index t (1-based); state.step becomes t.
void adam_step(NetworkModel& model, const Gradients& grads, AdamState& state, long t,
               const TrainConfig& cfg);

/// Full-batch training: cfg.epochs Adam steps on the whole dataset, resuming
/// the step count in state. Cost is traced at log_every intervals; a
/// non-finite cost aborts with TrainingDivergedError.
TrainReport continue_training(NetworkModel& model, AdamState& state, const Dataset& data,
                              const TrainConfig& cfg);

/// init_model + continue_training from a fresh Adam state.
std::pair<NetworkModel, TrainReport> train(const NetworkSpec& spec, const Dataset& data,
                                           const TrainConfig& cfg);

struct LoadedModel {
    NetworkModel model;
    std::optional<AdamState> adam_state;
    std::optional<TrainConfig> train_config;
};

/// Model file: JSON with version, spec, row-major weights, biases, optional
/// adam_state, and a train_config echo. Round-trips parameters exactly.
void save_model(const NetworkModel& model, const std::filesystem::path& path,
                const AdamState* adam_state = nullptr, const TrainConfig* train_config = nullptr);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace oxysense
