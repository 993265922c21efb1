#pragma once

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace ksc {

enum class OutputActivation { identity, tanh };

/// Fully connected network with ReLU hidden layers. Batches are column-major:
/// one sample per column.
struct Mlp {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    OutputActivation output = OutputActivation::identity;

    /// Hidden layers drawn from U(+-1/sqrt(fan_in)), the output layer from
    /// U(+-output_init).
    static Mlp create(const std::vector<int>& sizes, OutputActivation output, std::mt19937_64& rng,
                      double output_init = 3e-3);

    int input_size() const { return static_cast<int>(weights.front().cols()); }
    int output_size() const { return static_cast<int>(weights.back().rows()); }
    std::size_t layers() const { return weights.size(); }
    std::size_t parameter_count() const;
    bool all_finite() const;
};

struct MlpCache {
    std::vector<Eigen::MatrixXd> activations;  // input, then every layer's output
};

struct MlpGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static MlpGradients zeros_like(const Mlp& net);
    double squared_norm() const;
    void scale(double factor);
};

Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& input, MlpCache* cache = nullptr);

/// Reverse pass for dL/d(output). Parameter gradients are summed over the batch.
MlpGradients mlp_backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& output_gradient,
                          Eigen::MatrixXd* input_gradient = nullptr);

/// Parameters in a flat vector (layer by layer, weights column-major then bias).
Eigen::VectorXd flatten(const Mlp& net);
void unflatten(Mlp& net, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten(const MlpGradients& grads);

struct AdamSettings {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    MlpGradients first;
    MlpGradients second;
    long step = 0;

    static AdamState for_network(const Mlp& net);
};

void adam_step(Mlp& net, const MlpGradients& grads, AdamState& state, const AdamSettings& settings);

/// target <- tau * source + (1 - tau) * target
void soft_update(Mlp& target, const Mlp& source, double tau);

}  // namespace ksc
