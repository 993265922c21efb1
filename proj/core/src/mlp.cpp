#include "ksc/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace ksc {

Mlp Mlp::create(const std::vector<int>& sizes, OutputActivation output, std::mt19937_64& rng, double output_init) {
    if (sizes.size() < 2) throw std::invalid_argument("a network needs input and output sizes");
    for (int s : sizes) {
        if (s < 1) throw std::invalid_argument("layer sizes must be positive");
    }
    Mlp net;
    net.output = output;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const bool last = l + 2 == sizes.size();
        const double bound = last ? output_init : 1.0 / std::sqrt(static_cast<double>(sizes[l]));
        std::uniform_real_distribution<double> u(-bound, bound);
        Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
        Eigen::VectorXd b(sizes[l + 1]);
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
        }
        for (auto& v : b) v = u(rng);
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

bool Mlp::all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
}

MlpGradients MlpGradients::zeros_like(const Mlp& net) {
    MlpGradients g;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
}

double MlpGradients::squared_norm() const {
    double s = 0.0;
    for (std::size_t l = 0; l < weights.size(); ++l) s += weights[l].squaredNorm() + biases[l].squaredNorm();
    return s;
}

void MlpGradients::scale(double factor) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] *= factor;
        biases[l] *= factor;
    }
}

Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& input, MlpCache* cache) {
    if (input.rows() != net.input_size()) throw std::invalid_argument("network input dimension mismatch");
    if (cache) {
        cache->activations.clear();
        cache->activations.push_back(input);
    }
    Eigen::MatrixXd x = input;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        Eigen::MatrixXd z = net.weights[l] * x;
        z.colwise() += net.biases[l];
        if (l + 1 < net.layers()) {
            x = z.cwiseMax(0.0);
        } else if (net.output == OutputActivation::tanh) {
            x = z.array().tanh().matrix();
        } else {
            x = std::move(z);
        }
        if (cache) cache->activations.push_back(x);
    }
    return x;
}

MlpGradients mlp_backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& output_gradient,
                          Eigen::MatrixXd* input_gradient) {
    if (cache.activations.size() != net.layers() + 1) throw std::invalid_argument("cache does not match network");
    MlpGradients g;
    g.weights.resize(net.layers());
    g.biases.resize(net.layers());
    // delta = dL/dz of the current layer
    Eigen::MatrixXd delta;
    const Eigen::MatrixXd& out = cache.activations.back();
    if (net.output == OutputActivation::tanh) {
        delta = output_gradient.array() * (1.0 - out.array().square());
    } else {
        delta = output_gradient;
    }
    for (std::size_t l = net.layers(); l-- > 0;) {
        const Eigen::MatrixXd& x = cache.activations[l];
        g.weights[l].noalias() = delta * x.transpose();
        g.biases[l] = delta.rowwise().sum();
        if (l == 0 && !input_gradient) break;
        Eigen::MatrixXd dx = net.weights[l].transpose() * delta;
        if (l == 0) {
            *input_gradient = std::move(dx);
        } else {
            // ReLU derivative, taken as 0 at the kink
            delta = (x.array() > 0.0).select(dx, 0.0);
        }
    }
    return g;
}

Eigen::VectorXd flatten(const Mlp& net) {
    Eigen::VectorXd flat(static_cast<Eigen::Index>(net.parameter_count()));
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        flat.segment(at, net.weights[l].size()) = net.weights[l].reshaped();
        at += net.weights[l].size();
        flat.segment(at, net.biases[l].size()) = net.biases[l];
        at += net.biases[l].size();
    }
    return flat;
}

void unflatten(Mlp& net, const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(net.parameter_count())) {
        throw std::invalid_argument("flat parameter vector has the wrong size");
    }
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        net.weights[l].reshaped() = flat.segment(at, net.weights[l].size());
        at += net.weights[l].size();
        net.biases[l] = flat.segment(at, net.biases[l].size());
        at += net.biases[l].size();
    }
}

Eigen::VectorXd flatten(const MlpGradients& grads) {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < grads.weights.size(); ++l) n += grads.weights[l].size() + grads.biases[l].size();
    Eigen::VectorXd flat(n);
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        flat.segment(at, grads.weights[l].size()) = grads.weights[l].reshaped();
        at += grads.weights[l].size();
        flat.segment(at, grads.biases[l].size()) = grads.biases[l];
        at += grads.biases[l].size();
    }
    return flat;
}

AdamState AdamState::for_network(const Mlp& net) {
    return AdamState{MlpGradients::zeros_like(net), MlpGradients::zeros_like(net), 0};
}

void adam_step(Mlp& net, const MlpGradients& grads, AdamState& state, const AdamSettings& s) {
    ++state.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = s.beta1 * m + (1.0 - s.beta1) * grad;
        v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseAbs2();
        param.array() -= s.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
    };
    for (std::size_t l = 0; l < net.layers(); ++l) {
        update(net.weights[l], grads.weights[l], state.first.weights[l], state.second.weights[l]);
        update(net.biases[l], grads.biases[l], state.first.biases[l], state.second.biases[l]);
    }
}

void soft_update(Mlp& target, const Mlp& source, double tau) {
    if (target.layers() != source.layers()) throw std::invalid_argument("soft update between different networks");
    if (tau == 1.0) {
        target.weights = source.weights;
        target.biases = source.biases;
        return;
    }
    if (tau == 0.0) return;
    for (std::size_t l = 0; l < target.layers(); ++l) {
        target.weights[l] = tau * source.weights[l] + (1.0 - tau) * target.weights[l];
        target.biases[l] = tau * source.biases[l] + (1.0 - tau) * target.biases[l];
    }
}

}  // namespace ksc
