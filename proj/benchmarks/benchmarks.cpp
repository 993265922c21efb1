#include "ksc/ddpg.hpp"
#include "ksc/enkf.hpp"
#include "ksc/environment.hpp"
#include "ksc/esn.hpp"
#include "ksc/fourier_model.hpp"
#include "ksc/ks_dynamics.hpp"
#include "ksc/mlp.hpp"
#include "ksc/spectral.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace ksc;

SpectralState random_state(int n_f, double length, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    SpectralState s = SpectralState::zeros(n_f, length);
    for (Eigen::Index l = 0; l < s.coeffs.size(); ++l) s.coeffs[l] = {n(rng), n(rng)};
    enforce_hermitian(s);
    return s;
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

EnvironmentSettings settings() {
    const double length = domain_length(0.08);
    return {.nu = 0.08, .n_f = 64, .dt = 0.05, .n_fine = 256, .actuators = ActuatorLayout::equispaced(8, length, 0.4)};
}

void BM_NonlinearTerm(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const SpectralState s = random_state(static_cast<int>(state.range(0)), 22.0, rng);
    for (auto _ : state) benchmark::DoNotOptimize(nonlinear_term(s));
}
BENCHMARK(BM_NonlinearTerm)->Arg(16)->Arg(64)->Arg(256);

void BM_RoundTrip(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const int n_f = static_cast<int>(state.range(0));
    const SpectralState s = random_state(n_f, 22.0, rng);
    for (auto _ : state) benchmark::DoNotOptimize(to_spectral_grid(to_physical_grid(s, n_f), 22.0));
}
BENCHMARK(BM_RoundTrip)->Arg(16)->Arg(64);

void BM_StepperUnforced(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const int n_f = static_cast<int>(state.range(0));
    const KsStepper stepper(n_f, domain_length(0.08), 0.05);
    SpectralState s = random_state(n_f, stepper.length(), rng);
    s.coeffs *= 0.1;
    for (auto _ : state) benchmark::DoNotOptimize(stepper.step(s));
}
BENCHMARK(BM_StepperUnforced)->Arg(16)->Arg(64);

void BM_EnvironmentStep(benchmark::State& state) {
    const KsEnvironment env(settings());
    const SpectralState s = env.init(1, 200);
    const Action a(Eigen::VectorXd::Constant(8, 0.3));
    for (auto _ : state) benchmark::DoNotOptimize(env.step(s, a));
}
BENCHMARK(BM_EnvironmentStep);

void BM_FourierForecast(benchmark::State& state) {
    const KsEnvironment env(settings());
    const FourierModel model(16, env.length(), 0.05, env.settings().actuators, 256);
    const SpectralState truth = truncate(env.init(1, 200), 16);
    std::mt19937_64 rng(4);
    const FourierEnsemble start = init_ensemble(truth, 0.25, static_cast<int>(state.range(0)), rng);
    const Eigen::VectorXcd f = model.forcing(Action(Eigen::VectorXd::Constant(8, 0.3)));
    for (auto _ : state) {
        FourierEnsemble e = start;
        model.forecast(e, f);
        benchmark::DoNotOptimize(e.members.front().coeffs.data());
    }
}
BENCHMARK(BM_FourierForecast)->Arg(50)->Unit(benchmark::kMicrosecond);

void BM_EnkfAnalysis(benchmark::State& state) {
    std::mt19937_64 rng(5);
    const int n_s = static_cast<int>(state.range(0));
    const int members = 50, n_o = 4;
    AugmentedEnsemble f{gaussian(n_s, members, rng), Eigen::MatrixXd()};
    f.predicted_obs = f.states.topRows(n_o) + 0.1 * gaussian(n_o, members, rng);
    const Eigen::VectorXd obs = gaussian(n_o, 1, rng);
    for (auto _ : state) benchmark::DoNotOptimize(analysis(f, obs, 0.1, rng));
}
BENCHMARK(BM_EnkfAnalysis)->Arg(18)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_EsnStep(benchmark::State& state) {
    EsnParams p;
    p.reservoir_size = static_cast<int>(state.range(0));
    const EsnMachine machine = EsnMachine::generate(p, 64, 8);
    std::mt19937_64 rng(6);
    const Eigen::VectorXd h = 0.1 * gaussian(p.reservoir_size, 1, rng);
    const Eigen::VectorXd y = gaussian(72, 1, rng);
    for (auto _ : state) benchmark::DoNotOptimize(esn_step(h, y, machine));
}
BENCHMARK(BM_EsnStep)->Arg(200)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_MlpForwardBackward(benchmark::State& state) {
    std::mt19937_64 rng(7);
    const int width = static_cast<int>(state.range(0));
    const Mlp net = Mlp::create({72, width, width, 1}, OutputActivation::identity, rng);
    const Eigen::MatrixXd x = gaussian(72, 256, rng);
    const Eigen::MatrixXd g = gaussian(1, 256, rng);
    for (auto _ : state) {
        MlpCache cache;
        mlp_forward(net, x, &cache);
        benchmark::DoNotOptimize(mlp_backward(net, cache, g));
    }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_DdpgUpdate(benchmark::State& state) {
    DdpgSettings s;
    s.batch_size = 256;
    s.buffer_capacity = 10000;
    DdpgAgent agent(64, 8, s, 8);
    std::mt19937_64 rng(9);
    for (int i = 0; i < 1000; ++i) {
        agent.remember({gaussian(64, 1, rng), gaussian(8, 1, rng).array().tanh().matrix(), -1.0, gaussian(64, 1, rng)});
    }
    for (auto _ : state) benchmark::DoNotOptimize(agent.update());
}
BENCHMARK(BM_DdpgUpdate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
