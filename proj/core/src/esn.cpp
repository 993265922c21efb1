#include "ksc/esn.hpp"

#include "ksc/spectral.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <stdexcept>
#include <tuple>

namespace ksc {

void validate(const EsnParams& params) {
    if (params.reservoir_size < 1) throw std::invalid_argument("reservoir size must be positive");
    if (!(params.connectivity > 0.0) || params.connectivity > params.reservoir_size) {
        throw std::invalid_argument("connectivity must lie in (0, n_h]");
    }
    if (!(params.leak_rate > 0.0 && params.leak_rate <= 1.0)) {
        throw std::invalid_argument("leak rate must lie in (0, 1]");
    }
    if (!(params.spectral_radius >= 0.0) || !std::isfinite(params.spectral_radius)) {
        throw std::invalid_argument("spectral radius must be finite and non-negative");
    }
    if (!(params.input_scaling >= 0.0) || !(params.action_scaling >= 0.0)) {
        throw std::invalid_argument("input scalings must be non-negative");
    }
    if (!(params.tikhonov >= 0.0)) throw std::invalid_argument("Tikhonov parameter must be non-negative");
}

double spectral_radius(const SparseMatrixRM& matrix) {
    if (matrix.rows() != matrix.cols()) throw std::invalid_argument("spectral radius of a non-square matrix");
    if (matrix.rows() == 0) return 0.0;
    const Eigen::MatrixXd dense(matrix);
    Eigen::EigenSolver<Eigen::MatrixXd> solver(dense, false);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigenvalue iteration did not converge");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

std::mt19937_64 sub_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    return std::mt19937_64(seq);
}

// The eigen-solve dominates generation for large reservoirs, so the unit-radius
// matrix is shared across every machine built from the same (seed, n_h, n_conn).
SparseMatrixRM unit_radius_reservoir(std::uint64_t seed, int n_h, double connectivity) {
    using Key = std::tuple<std::uint64_t, int, double>;
    static std::mutex mutex;
    static std::map<Key, SparseMatrixRM> cache;
    const Key key{seed, n_h, connectivity};
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }

    auto rng = sub_rng(seed, 1);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    std::bernoulli_distribution link(connectivity / n_h);
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(connectivity * n_h * 1.2) + 16);
    for (int i = 0; i < n_h; ++i) {
        for (int j = 0; j < n_h; ++j) {
            if (link(rng)) entries.emplace_back(i, j, uniform(rng));
        }
    }
    SparseMatrixRM w(n_h, n_h);
    w.setFromTriplets(entries.begin(), entries.end());
    const double radius = spectral_radius(w);
    if (radius > 0.0) w /= radius;

    std::lock_guard lock(mutex);
    cache.emplace(key, w);
    return w;
}

}  // namespace

EsnMachine EsnMachine::generate(const EsnParams& params, int n_u, int n_a) {
    validate(params);
    if (n_u < 1 || n_a < 0) throw std::invalid_argument("invalid ESN input dimensions");
    EsnMachine m;
    m.params_ = params;
    m.n_u_ = n_u;
    m.n_a_ = n_a;
    const int n_h = params.reservoir_size;

    m.reservoir_weights_ = unit_radius_reservoir(params.seed, n_h, params.connectivity) * params.spectral_radius;

    auto rng_in = sub_rng(params.seed, 2);
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);
    std::uniform_int_distribution<int> column(0, n_u + n_a - 1);
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(n_h);
    for (int i = 0; i < n_h; ++i) {
        const int c = column(rng_in);
        const double scale = c < n_u ? params.input_scaling : params.action_scaling;
        entries.emplace_back(i, c, scale * uniform(rng_in));
    }
    m.input_weights_.resize(n_h, n_u + n_a);
    m.input_weights_.setFromTriplets(entries.begin(), entries.end());

    auto rng_b = sub_rng(params.seed, 3);
    m.bias_.resize(n_h);
    for (int i = 0; i < n_h; ++i) m.bias_[i] = uniform(rng_b);

    m.input_mean_ = Eigen::VectorXd::Zero(n_u);
    m.input_std_ = Eigen::VectorXd::Ones(n_u);
    return m;
}

void EsnMachine::set_normalization(Eigen::VectorXd mean, Eigen::VectorXd std_dev) {
    if (mean.size() != n_u_ || std_dev.size() != n_u_) throw std::invalid_argument("normalization size mismatch");
    int replaced = 0;
    for (Eigen::Index i = 0; i < std_dev.size(); ++i) {
        if (!(std_dev[i] >= 1e-8)) {
            std_dev[i] = 1.0;
            ++replaced;
        }
    }
    if (replaced > 0) std::clog << "[esn] " << replaced << " near-constant input component(s), std set to 1\n";
    input_mean_ = std::move(mean);
    input_std_ = std::move(std_dev);
}

void EsnMachine::set_readout(Eigen::MatrixXd weights) {
    if (weights.rows() != n_u_ || weights.cols() != params_.reservoir_size + 1) {
        throw std::invalid_argument("readout must be n_u x (n_h + 1)");
    }
    readout_ = std::move(weights);
}

Eigen::VectorXd augment_input(const Eigen::VectorXd& u, const Eigen::VectorXd& action, const EsnMachine& machine) {
    if (u.size() != machine.n_u() || action.size() != machine.n_a()) {
        throw std::invalid_argument("augmented input dimension mismatch");
    }
    Eigen::VectorXd y(u.size() + action.size());
    y.head(u.size()) = (u - machine.input_mean()).cwiseQuotient(machine.input_std());
    y.tail(action.size()) = action;
    return y;
}

Eigen::VectorXd augment_input(const Eigen::VectorXd& u, const Action& action, const EsnMachine& machine) {
    return augment_input(u, action.values(), machine);
}

Eigen::VectorXd esn_step(const Eigen::VectorXd& h, const Eigen::VectorXd& augmented, const EsnMachine& machine,
                         double leak_rate) {
    if (h.size() != machine.reservoir_size()) throw std::invalid_argument("reservoir state size mismatch");
    const Eigen::VectorXd pre = machine.input_weights() * augmented + machine.reservoir_weights() * h + machine.bias();
    return (1.0 - leak_rate) * h + leak_rate * pre.array().tanh().matrix();
}

Eigen::VectorXd readout(const Eigen::VectorXd& h, const EsnMachine& machine) {
    if (!machine.trained()) throw std::logic_error("ESN readout used before training");
    const Eigen::Index n_h = h.size();
    return machine.readout_weights().leftCols(n_h) * h + machine.readout_weights().col(n_h);
}

std::vector<Eigen::VectorXd> run_open_loop(const EsnMachine& machine, const Eigen::VectorXd& h0,
                                           const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& actions) {
    if (inputs.cols() != actions.cols()) throw std::invalid_argument("inputs and actions differ in length");
    std::vector<Eigen::VectorXd> states;
    states.reserve(inputs.cols() + 1);
    states.push_back(h0);
    for (Eigen::Index k = 0; k < inputs.cols(); ++k) {
        states.push_back(esn_step(states.back(), augment_input(inputs.col(k), actions.col(k).eval(), machine), machine));
    }
    return states;
}

Eigen::MatrixXd run_closed_loop(const EsnMachine& machine, const Eigen::VectorXd& h0, const Eigen::MatrixXd& actions,
                                int n_steps) {
    if (actions.cols() < n_steps) throw std::invalid_argument("not enough actions for the closed-loop horizon");
    Eigen::MatrixXd out(machine.n_u(), n_steps);
    Eigen::VectorXd h = h0;
    for (int k = 0; k < n_steps; ++k) {
        h = esn_step(h, augment_input(readout(h, machine), actions.col(k).eval(), machine), machine);
        out.col(k) = readout(h, machine);
    }
    return out;
}

RidgeAccumulator::RidgeAccumulator(int reservoir_size, int n_u)
    : gram_(Eigen::MatrixXd::Zero(reservoir_size + 1, reservoir_size + 1)),
      cross_(Eigen::MatrixXd::Zero(reservoir_size + 1, n_u)) {}

void RidgeAccumulator::add(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets) {
    if (states.rows() + 1 != gram_.rows() || targets.rows() != cross_.cols() || states.cols() != targets.cols()) {
        throw std::invalid_argument("ridge block dimension mismatch");
    }
    Eigen::MatrixXd aug(states.rows() + 1, states.cols());
    aug.topRows(states.rows()) = states;
    aug.bottomRows(1).setOnes();
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(aug);
    cross_.noalias() += aug * targets.transpose();
    samples_ += states.cols();
}

Eigen::MatrixXd RidgeAccumulator::solve(double tikhonov) const {
    if (samples_ == 0) throw std::logic_error("ridge regression without samples");
    Eigen::MatrixXd system = gram_.selfadjointView<Eigen::Lower>();
    system.diagonal().array() += tikhonov;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (tikhonov == 0.0 && ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-14 * ldlt.vectorD().cwiseAbs().maxCoeff())) {
        throw std::runtime_error("ridge system is singular; use a positive Tikhonov parameter");
    }
    Eigen::MatrixXd w = ldlt.solve(cross_).transpose();
    if (!w.allFinite()) throw std::runtime_error("ridge solution is not finite");
    return w;
}

Eigen::MatrixXd train_readout(const Eigen::MatrixXd& states, const Eigen::MatrixXd& targets, double tikhonov) {
    RidgeAccumulator acc(static_cast<int>(states.rows()), static_cast<int>(targets.rows()));
    acc.add(states, targets);
    return acc.solve(tikhonov);
}

Eigen::MatrixXd washout_init_ensemble(const EsnMachine& machine, const Eigen::MatrixXd& samples, const Action& action,
                                      int washout) {
    if (samples.rows() != machine.n_u()) throw std::invalid_argument("washout samples must have n_u rows");
    const int n_h = machine.reservoir_size();
    Eigen::MatrixXd states = Eigen::MatrixXd::Zero(n_h, samples.cols());
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
        const Eigen::VectorXd y = augment_input(samples.col(j), action, machine);
        const Eigen::VectorXd drive = machine.input_weights() * y + machine.bias();
        Eigen::VectorXd h = Eigen::VectorXd::Zero(n_h);
        const double alpha = machine.params().leak_rate;
        for (int k = 0; k < washout; ++k) {
            const Eigen::VectorXd pre = drive + machine.reservoir_weights() * h;
            h = (1.0 - alpha) * h + alpha * pre.array().tanh().matrix();
        }
        states.col(j) = h;
    }
    return states;
}

namespace {

// Linear map from values on the uniform n-point grid to trigonometric
// interpolation at the sensors.
Eigen::MatrixXd sensor_interpolation(int n, const SensorLayout& sensors, double length) {
    Eigen::MatrixXd p(sensors.size(), n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        e[i] = 1.0;
        p.col(i) = to_physical(to_spectral_grid(e, length), sensors.locations).values;
    }
    return p;
}

}  // namespace

Eigen::VectorXd esn_observe(const Eigen::VectorXd& h, const EsnMachine& machine, const SensorLayout& sensors,
                            double length) {
    return to_physical(to_spectral_grid(readout(h, machine), length), sensors.locations).values;
}

Eigen::MatrixXd ensemble_readout(const EsnEnsemble& ensemble, const EsnMachine& machine) {
    if (!machine.trained()) throw std::logic_error("ESN readout used before training");
    const Eigen::Index n_h = ensemble.states.rows();
    Eigen::MatrixXd out = machine.readout_weights().leftCols(n_h) * ensemble.states;
    out.colwise() += machine.readout_weights().col(n_h);
    return out;
}

void esn_forecast(EsnEnsemble& ensemble, const EsnMachine& machine, const Action& action) {
    if (ensemble.states.rows() != machine.reservoir_size()) throw std::invalid_argument("ensemble size mismatch");
    const Eigen::MatrixXd u = ensemble_readout(ensemble, machine);
    Eigen::MatrixXd y(machine.n_u() + machine.n_a(), ensemble.size());
    y.topRows(machine.n_u()) =
        (u.colwise() - machine.input_mean()).array().colwise() / machine.input_std().array();
    y.bottomRows(machine.n_a()).colwise() = action.values();
    Eigen::MatrixXd pre = machine.input_weights() * y + machine.reservoir_weights() * ensemble.states;
    pre.colwise() += machine.bias();
    const double alpha = machine.params().leak_rate;
    ensemble.states = (1.0 - alpha) * ensemble.states + alpha * pre.array().tanh().matrix();
}

Eigen::MatrixXd esn_ensemble_observe(const EsnEnsemble& ensemble, const EsnMachine& machine,
                                     const SensorLayout& sensors, double length) {
    return sensor_interpolation(machine.n_u(), sensors, length) * ensemble_readout(ensemble, machine);
}

Eigen::VectorXd esn_rl_state(const EsnEnsemble& ensemble, const EsnMachine& machine) {
    return ensemble_readout(ensemble, machine).rowwise().mean();
}

}  // namespace ksc
