#include "oxysense/network.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include <json.hpp>

#include "oxysense/io.hpp"
#include "oxysense/rng.hpp"

namespace oxysense {

namespace {

constexpr int kModelVersion = 1;

void sigmoid_inplace(Eigen::MatrixXd& z) { z.array() = ((-z.array()).exp() + 1.0).inverse(); }

/// Preallocated buffers for repeated full-batch passes over one dataset.
/// Observations sit in columns; layer l activations are activations[l] (n x m).
struct Workspace {
    Eigen::MatrixXd x;       // input_dim x m
    Eigen::RowVectorXd y;    // 1 x m
    std::vector<Eigen::MatrixXd> activations;
    Eigen::RowVectorXd z_out, s_out, preds, errors;
    std::vector<Eigen::MatrixXd> delta;
    Eigen::RowVectorXd delta_out;
    Gradients grads;

    Workspace(const NetworkModel& model, const Dataset& data) {
        const Eigen::Index m = static_cast<Eigen::Index>(data.size());
        const auto& spec = model.spec;
        x = data.features_cols();
        y = data.labels().transpose();
        for (Eigen::Index l = 0; l < spec.hidden_layers; ++l) {
            activations.emplace_back(spec.neurons_per_layer, m);
            delta.emplace_back(spec.neurons_per_layer, m);
        }
        z_out.resize(m);
        s_out.resize(m);
        preds.resize(m);
        errors.resize(m);
        delta_out.resize(m);
        for (const auto& w : model.weights)
            grads.weights.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        for (const auto& b : model.biases)
            grads.biases.emplace_back(Eigen::VectorXd::Zero(b.size()));
    }

    /// Full-batch forward pass; returns the MSE cost. Squared errors are
    /// accumulated sequentially in stored order.
    double forward_pass(const NetworkModel& model) {
        const Eigen::Index hidden = model.spec.hidden_layers;
        for (Eigen::Index l = 0; l < hidden; ++l) {
            const Eigen::MatrixXd& input = l == 0 ? x : activations[static_cast<std::size_t>(l - 1)];
            auto& a = activations[static_cast<std::size_t>(l)];
            a.noalias() = model.weights[static_cast<std::size_t>(l)] * input;
            a.colwise() += model.biases[static_cast<std::size_t>(l)];
            sigmoid_inplace(a);
        }
        const auto& w_out = model.weights[static_cast<std::size_t>(hidden)];
        z_out.noalias() = w_out * activations[static_cast<std::size_t>(hidden - 1)];
        z_out.array() += model.biases[static_cast<std::size_t>(hidden)](0);
        s_out.array() = ((-z_out.array()).exp() + 1.0).inverse();
        // predictions are rounded to memory before the subtraction so that a
        // label equal to the prediction yields an error of exactly zero
        preds.array() = model.spec.output_scale * s_out.array();
        errors.array() = preds.array() - y.array();
        double acc = 0.0;
        for (Eigen::Index j = 0; j < errors.size(); ++j) acc += errors(j) * errors(j);
        return acc / static_cast<double>(errors.size());
    }

    /// Backpropagation through the state left by forward_pass.
    void backward_pass(const NetworkModel& model) {
        const Eigen::Index hidden = model.spec.hidden_layers;
        const double m = static_cast<double>(errors.size());
        const double scale = model.spec.output_scale;

        delta_out.array() =
            (2.0 / m) * errors.array() * scale * s_out.array() * (1.0 - s_out.array());
        const auto last = static_cast<std::size_t>(hidden);
        grads.weights[last].noalias() =
            delta_out * activations[last - 1].transpose();
        grads.biases[last](0) = delta_out.sum();

        for (Eigen::Index l = hidden - 1; l >= 0; --l) {
            const auto li = static_cast<std::size_t>(l);
            auto& d = delta[li];
            if (l == hidden - 1) {
                d.noalias() = model.weights[li + 1].transpose() * delta_out;
            } else {
                d.noalias() = model.weights[li + 1].transpose() * delta[li + 1];
            }
            d.array() *= activations[li].array() * (1.0 - activations[li].array());
            const Eigen::MatrixXd& input = l == 0 ? x : activations[li - 1];
            grads.weights[li].noalias() = d * input.transpose();
            grads.biases[li].noalias() = d.rowwise().sum();
        }
    }
};

void check_dataset(const NetworkModel& model, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("network: dataset is empty");
    if (data.frequencies_hz().size() != model.spec.input_dim)
        throw std::invalid_argument("network: dataset grid does not match the input dimension");
}

nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& m) {
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = nlohmann::ordered_json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw IoError("model file: " + what + " has the wrong row count");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw IoError("model file: " + what + " has the wrong column count");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j, Eigen::Index size,
                                 const std::string& what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size)
        throw IoError("model file: " + what + " has the wrong length");
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

}  // namespace

void NetworkSpec::validate() const {
    if (input_dim < 1 || hidden_layers < 1 || neurons_per_layer < 1)
        throw std::invalid_argument("NetworkSpec: all counts must be >= 1");
    if (!(output_scale > 0.0))
        throw std::invalid_argument("NetworkSpec: output_scale must be > 0");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("TrainConfig: epsilon must be > 0");
    if (log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be >= 1");
}

TrainingDivergedError::TrainingDivergedError(long epoch_, double cost_)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch_) +
                         " (cost = " + std::to_string(cost_) + ")"),
      epoch(epoch_),
      cost(cost_) {}

AdamState AdamState::zeros_like(const NetworkModel& model) {
    AdamState state;
    for (const auto& w : model.weights) {
        state.m_weights.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        state.v_weights.emplace_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : model.biases) {
        state.m_biases.emplace_back(Eigen::VectorXd::Zero(b.size()));
        state.v_biases.emplace_back(Eigen::VectorXd::Zero(b.size()));
    }
    return state;
}

NetworkModel init_model(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    auto stream = rng::make_stream(seed, "init");
    NetworkModel model{spec, {}, {}};
    Eigen::Index fan_in = spec.input_dim;
    for (Eigen::Index l = 0; l <= spec.hidden_layers; ++l) {
        const Eigen::Index n_out = l == spec.hidden_layers ? 1 : spec.neurons_per_layer;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Eigen::MatrixXd w(n_out, fan_in);
        for (Eigen::Index r = 0; r < n_out; ++r) {
            for (Eigen::Index c = 0; c < fan_in; ++c) w(r, c) = stream.uniform(-bound, bound);
        }
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(Eigen::VectorXd::Zero(n_out));
        fan_in = n_out;
    }
    return model;
}

double forward(const NetworkModel& model, const Eigen::VectorXd& ratios) {
    if (ratios.size() != model.spec.input_dim)
        throw std::invalid_argument("forward: input length does not match the model");
    return forward_batch(model, ratios)(0);
}

Eigen::VectorXd forward_batch(const NetworkModel& model, const Eigen::MatrixXd& features) {
    if (features.rows() != model.spec.input_dim)
        throw std::invalid_argument("forward_batch: feature rows do not match the model");
    Eigen::MatrixXd a = features;
    for (Eigen::Index l = 0; l < model.spec.hidden_layers; ++l) {
        const auto li = static_cast<std::size_t>(l);
        Eigen::MatrixXd z = model.weights[li] * a;
        z.colwise() += model.biases[li];
        sigmoid_inplace(z);
        a = std::move(z);
    }
    const auto last = static_cast<std::size_t>(model.spec.hidden_layers);
    Eigen::RowVectorXd z = model.weights[last] * a;
    z.array() += model.biases[last](0);
    z.array() = model.spec.output_scale * ((-z.array()).exp() + 1.0).inverse();
    return z.transpose();
}

double cost_mse(const NetworkModel& model, const Dataset& data) {
    check_dataset(model, data);
    Workspace ws(model, data);
    return ws.forward_pass(model);
}

Gradients backward(const NetworkModel& model, const Dataset& data) {
    check_dataset(model, data);
    Workspace ws(model, data);
    ws.forward_pass(model);
    ws.backward_pass(model);
    return std::move(ws.grads);
}

void adam_step(NetworkModel& model, const Gradients& grads, AdamState& state, long t,
               const TrainConfig& cfg) {
    if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));

    const auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m.array() = cfg.beta1 * m.array() + (1.0 - cfg.beta1) * grad.array();
        v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * grad.array().square();
        param.array() -=
            cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
    };
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        update(model.weights[l], grads.weights[l], state.m_weights[l], state.v_weights[l]);
        update(model.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l]);
    }
    state.step = t;
}

TrainReport continue_training(NetworkModel& model, AdamState& state, const Dataset& data,
                              const TrainConfig& cfg) {
    cfg.validate();
    check_dataset(model, data);
    const auto start = std::chrono::steady_clock::now();

    Workspace ws(model, data);
    TrainReport report;
    report.config = cfg;
    for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double cost = ws.forward_pass(model);
        if (!std::isfinite(cost)) throw TrainingDivergedError(epoch, cost);
        if (epoch == 1 || epoch % cfg.log_every == 0 || epoch == cfg.epochs)
            report.cost_trace.emplace_back(epoch, cost);
        ws.backward_pass(model);
        adam_step(model, ws.grads, state, state.step + 1, cfg);
    }
    report.final_cost = ws.forward_pass(model);
    report.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::pair<NetworkModel, TrainReport> train(const NetworkSpec& spec, const Dataset& data,
                                           const TrainConfig& cfg) {
    NetworkModel model = init_model(spec, cfg.seed);
    AdamState state = AdamState::zeros_like(model);
    TrainReport report = continue_training(model, state, data, cfg);
    return {std::move(model), std::move(report)};
}

void save_model(const NetworkModel& model, const std::filesystem::path& path,
                const AdamState* adam_state, const TrainConfig* train_config) {
    nlohmann::ordered_json doc;
    doc["version"] = kModelVersion;
    doc["spec"] = {{"input_dim", model.spec.input_dim},
                   {"hidden_layers", model.spec.hidden_layers},
                   {"neurons_per_layer", model.spec.neurons_per_layer},
                   {"output_scale", model.spec.output_scale}};
    auto weights = nlohmann::ordered_json::array();
    auto biases = nlohmann::ordered_json::array();
    for (const auto& w : model.weights) weights.push_back(matrix_to_json(w));
    for (const auto& b : model.biases) {
        auto arr = nlohmann::ordered_json::array();
        for (Eigen::Index i = 0; i < b.size(); ++i) arr.push_back(b(i));
        biases.push_back(std::move(arr));
    }
    doc["weights"] = std::move(weights);
    doc["biases"] = std::move(biases);
    if (adam_state != nullptr) {
        nlohmann::ordered_json st;
        st["step"] = adam_state->step;
        auto dump_mats = [](const std::vector<Eigen::MatrixXd>& ms) {
            auto arr = nlohmann::ordered_json::array();
            for (const auto& m : ms) arr.push_back(matrix_to_json(m));
            return arr;
        };
        auto dump_vecs = [](const std::vector<Eigen::VectorXd>& vs) {
            auto arr = nlohmann::ordered_json::array();
            for (const auto& v : vs) {
                auto a = nlohmann::ordered_json::array();
                for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
                arr.push_back(std::move(a));
            }
            return arr;
        };
        st["m_weights"] = dump_mats(adam_state->m_weights);
        st["v_weights"] = dump_mats(adam_state->v_weights);
        st["m_biases"] = dump_vecs(adam_state->m_biases);
        st["v_biases"] = dump_vecs(adam_state->v_biases);
        doc["adam_state"] = std::move(st);
    }
    if (train_config != nullptr) {
        doc["train_config"] = {{"learning_rate", train_config->learning_rate},
                               {"epochs", train_config->epochs},
                               {"beta1", train_config->beta1},
                               {"beta2", train_config->beta2},
                               {"epsilon", train_config->epsilon},
                               {"seed", train_config->seed},
                               {"log_every", train_config->log_every}};
    }
    io::write_text_file(path, doc.dump() + "\n");
}

LoadedModel load_model(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(io::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    try {
        if (!doc.contains("version") || doc["version"].get<int>() != kModelVersion)
            throw IoError(path.string() + ": unsupported model file version");
        const auto& js = doc.at("spec");
        NetworkSpec spec{js.at("input_dim").get<Eigen::Index>(),
                         js.at("hidden_layers").get<Eigen::Index>(),
                         js.at("neurons_per_layer").get<Eigen::Index>(),
                         js.at("output_scale").get<double>()};
        spec.validate();

        LoadedModel loaded;
        loaded.model.spec = spec;
        const auto& weights = doc.at("weights");
        const auto& biases = doc.at("biases");
        const std::size_t n_layers = static_cast<std::size_t>(spec.hidden_layers) + 1;
        if (weights.size() != n_layers || biases.size() != n_layers)
            throw IoError(path.string() + ": wrong layer count");
        Eigen::Index fan_in = spec.input_dim;
        for (std::size_t l = 0; l < n_layers; ++l) {
            const Eigen::Index n_out =
                l + 1 == n_layers ? 1 : spec.neurons_per_layer;
            loaded.model.weights.push_back(
                matrix_from_json(weights[l], n_out, fan_in, "weights[" + std::to_string(l) + "]"));
            loaded.model.biases.push_back(
                vector_from_json(biases[l], n_out, "biases[" + std::to_string(l) + "]"));
            fan_in = n_out;
        }
        for (const auto& w : loaded.model.weights) {
            if (!w.allFinite()) throw IoError(path.string() + ": non-finite weights");
        }

        if (doc.contains("adam_state") && !doc["adam_state"].is_null()) {
            const auto& st = doc["adam_state"];
            AdamState state;
            state.step = st.at("step").get<long>();
            const auto& mw = st.at("m_weights");
            const auto& vw = st.at("v_weights");
            const auto& mb = st.at("m_biases");
            const auto& vb = st.at("v_biases");
            if (mw.size() != n_layers || vw.size() != n_layers || mb.size() != n_layers ||
                vb.size() != n_layers)
                throw IoError(path.string() + ": adam state layer count mismatch");
            for (std::size_t l = 0; l < n_layers; ++l) {
                const auto rows = loaded.model.weights[l].rows();
                const auto cols = loaded.model.weights[l].cols();
                state.m_weights.push_back(matrix_from_json(mw[l], rows, cols, "m_weights"));
                state.v_weights.push_back(matrix_from_json(vw[l], rows, cols, "v_weights"));
                state.m_biases.push_back(vector_from_json(mb[l], rows, "m_biases"));
                state.v_biases.push_back(vector_from_json(vb[l], rows, "v_biases"));
            }
            loaded.adam_state = std::move(state);
        }
        if (doc.contains("train_config") && !doc["train_config"].is_null()) {
            const auto& tc = doc["train_config"];
            TrainConfig cfg;
            cfg.learning_rate = tc.at("learning_rate").get<double>();
            cfg.epochs = tc.at("epochs").get<long>();
            cfg.beta1 = tc.at("beta1").get<double>();
            cfg.beta2 = tc.at("beta2").get<double>();
            cfg.epsilon = tc.at("epsilon").get<double>();
            cfg.seed = tc.at("seed").get<std::uint64_t>();
            cfg.log_every = tc.at("log_every").get<long>();
            loaded.train_config = cfg;
        }
        return loaded;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace oxysense
