#include "ksc/enkf.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace ksc {

namespace {

Eigen::MatrixXd anomalies(const Eigen::MatrixXd& x) {
    return x.colwise() - x.rowwise().mean();
}

}  // namespace

void validate(const AugmentedEnsemble& ensemble) {
    if (ensemble.states.cols() < 2) throw std::invalid_argument("EnKF needs at least 2 members");
    if (ensemble.predicted_obs.cols() != ensemble.states.cols()) {
        throw std::invalid_argument("state and predicted-observation member counts differ");
    }
}

CovarianceBlocks ensemble_covariance(const AugmentedEnsemble& ensemble) {
    validate(ensemble);
    const double norm = 1.0 / static_cast<double>(ensemble.members() - 1);
    const Eigen::MatrixXd ds = anomalies(ensemble.states);
    const Eigen::MatrixXd dm = anomalies(ensemble.predicted_obs);
    return {norm * ds * dm.transpose(), norm * dm * dm.transpose()};
}

Eigen::MatrixXd observation_covariance(const Eigen::VectorXd& obs, double sigma_o) {
    if (!(sigma_o >= 0.0)) throw std::invalid_argument("observation noise level must be >= 0");
    const double peak = obs.size() > 0 ? obs.cwiseAbs().maxCoeff() : 0.0;
    const double std_dev = sigma_o * peak;
    return Eigen::MatrixXd::Identity(obs.size(), obs.size()) * (std_dev * std_dev);
}

Eigen::MatrixXd perturb_observations(const Eigen::VectorXd& obs, const Eigen::MatrixXd& cov_oo, int members,
                                     std::mt19937_64& rng) {
    if (cov_oo.rows() != obs.size() || cov_oo.cols() != obs.size()) {
        throw std::invalid_argument("observation covariance shape does not match the observation");
    }
    const Eigen::VectorXd std_dev = cov_oo.diagonal().cwiseMax(0.0).cwiseSqrt();
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd out = obs.replicate(1, members);
    for (int j = 0; j < members; ++j) {
        for (Eigen::Index i = 0; i < obs.size(); ++i) {
            if (std_dev[i] > 0.0) out(i, j) += std_dev[i] * normal(rng);
        }
    }
    return out;
}

double ensemble_spread(const Eigen::MatrixXd& states) {
    if (states.cols() < 2 || states.rows() == 0) return 0.0;
    const double var_sum = anomalies(states).squaredNorm() / static_cast<double>(states.cols() - 1);
    return std::sqrt(var_sum / static_cast<double>(states.rows()));
}

std::pair<AugmentedEnsemble, AnalysisReport> analysis(const AugmentedEnsemble& forecast, const Eigen::VectorXd& obs,
                                                      double sigma_o, std::mt19937_64& rng) {
    validate(forecast);
    const Eigen::MatrixXd cov_oo = observation_covariance(obs, sigma_o);
    const Eigen::MatrixXd perturbed = perturb_observations(obs, cov_oo, static_cast<int>(forecast.members()), rng);
    return analysis_with(forecast, perturbed, cov_oo);
}

std::pair<AugmentedEnsemble, AnalysisReport> analysis_with(const AugmentedEnsemble& forecast,
                                                           const Eigen::MatrixXd& perturbed_obs,
                                                           const Eigen::MatrixXd& cov_oo) {
    validate(forecast);
    const Eigen::Index n_o = forecast.predicted_obs.rows();
    if (perturbed_obs.rows() != n_o || perturbed_obs.cols() != forecast.members()) {
        throw std::invalid_argument("perturbed observations must be n_o x m");
    }

    AnalysisReport report;
    report.spread_before = ensemble_spread(forecast.states);
    const Eigen::MatrixXd innovations = perturbed_obs - forecast.predicted_obs;
    report.innovation_norms = innovations.colwise().norm().transpose();

    const CovarianceBlocks cov = ensemble_covariance(forecast);
    Eigen::MatrixXd system = cov.obs_obs;
    system.diagonal() += cov_oo.diagonal().cwiseMax(kObservationVarianceFloor);
    system += cov_oo - Eigen::MatrixXd(cov_oo.diagonal().asDiagonal());

    Eigen::LLT<Eigen::MatrixXd> factor(system);
    if (factor.info() != Eigen::Success) {
        const double jitter = 1e-10 * system.trace() / static_cast<double>(n_o);
        std::clog << "[enkf] innovation covariance not positive definite, adding jitter " << jitter << "\n";
        system.diagonal().array() += jitter;
        factor.compute(system);
        report.jittered = true;
    }
    // K = C_sM S^-1 and, for the observable block, C_MM S^-1.
    const Eigen::MatrixXd weights = factor.solve(innovations);
    report.kalman_gain = factor.solve(cov.state_obs.transpose()).transpose();

    if (factor.info() != Eigen::Success || !report.kalman_gain.allFinite() || !weights.allFinite()) {
        report.ok = false;
        report.message = "non-finite Kalman gain; analysis skipped";
        report.spread_after = report.spread_before;
        return {forecast, report};
    }

    AugmentedEnsemble out{forecast.states + cov.state_obs * weights,
                          forecast.predicted_obs + cov.obs_obs * weights};
    report.spread_after = ensemble_spread(out.states);
    return {std::move(out), std::move(report)};
}

Eigen::MatrixXd inflate(const Eigen::MatrixXd& states, double rho) {
    const Eigen::VectorXd mean = states.rowwise().mean();
    Eigen::MatrixXd out = states;
    out.colwise() -= mean;
    out *= rho;
    out.colwise() += mean;
    return out;
}

double map_cost(const Eigen::VectorXd& psi, const Eigen::VectorXd& psi_forecast, const Eigen::MatrixXd& cov_psi,
                const Eigen::VectorXd& obs, const Eigen::MatrixXd& cov_oo) {
    const Eigen::Index n_o = obs.size();
    if (psi.size() != psi_forecast.size() || cov_psi.rows() != psi.size() || psi.size() < n_o) {
        throw std::invalid_argument("map_cost: inconsistent shapes");
    }
    const Eigen::VectorXd prior = psi_forecast - psi;
    const Eigen::VectorXd misfit = obs - psi.tail(n_o);
    return prior.dot(cov_psi.ldlt().solve(prior)) + misfit.dot(cov_oo.ldlt().solve(misfit));
}

}  // namespace ksc
