#pragma once

#include <Eigen/Dense>

#include <random>
#include <string>
#include <utility>

namespace ksc {

/// Ensemble in augmented form psi_j = [s_j; M(s_j)], one member per column.
struct AugmentedEnsemble {
    Eigen::MatrixXd states;         // n_s x m
    Eigen::MatrixXd predicted_obs;  // n_o x m

    Eigen::Index members() const { return states.cols(); }
};

void validate(const AugmentedEnsemble& ensemble);

struct CovarianceBlocks {
    Eigen::MatrixXd state_obs;  // C_sM, n_s x n_o
    Eigen::MatrixXd obs_obs;    // C_MM, n_o x n_o
};

struct AnalysisReport {
    Eigen::MatrixXd kalman_gain;       // n_s x n_o
    Eigen::VectorXd innovation_norms;  // ||o_j - M(s_j)|| per member
    double spread_before = 0.0;
    double spread_after = 0.0;
    bool ok = true;
    bool jittered = false;
    std::string message;
};

/// Lower bound on the observation error variance used in the gain solve. Keeps the
/// system well posed when the observed field (and with it C_oo) vanishes.
inline constexpr double kObservationVarianceFloor = 1e-12;

/// Unbiased (1/(m-1)) sample covariances of states with predicted observations.
CovarianceBlocks ensemble_covariance(const AugmentedEnsemble& ensemble);

/// C_oo = (sigma_o * max|obs|)^2 I
Eigen::MatrixXd observation_covariance(const Eigen::VectorXd& obs, double sigma_o);

/// m i.i.d. draws o_j ~ N(o, C_oo), one per column. C_oo must be diagonal.
Eigen::MatrixXd perturb_observations(const Eigen::VectorXd& obs, const Eigen::MatrixXd& cov_oo, int members,
                                     std::mt19937_64& rng);

/// Perturbed-observation EnKF update with the observation error covariance built
/// from `obs` and `sigma_o`. On a non-finite gain the forecast is returned
/// unchanged and report.ok is false.
std::pair<AugmentedEnsemble, AnalysisReport> analysis(const AugmentedEnsemble& forecast, const Eigen::VectorXd& obs,
                                                      double sigma_o, std::mt19937_64& rng);

/// The deterministic core of analysis(): each column of `perturbed_obs` is the
/// observation assigned to the matching member.
std::pair<AugmentedEnsemble, AnalysisReport> analysis_with(const AugmentedEnsemble& forecast,
                                                           const Eigen::MatrixXd& perturbed_obs,
                                                           const Eigen::MatrixXd& cov_oo);

/// s_j <- mean + rho (s_j - mean), column-wise.
Eigen::MatrixXd inflate(const Eigen::MatrixXd& states, double rho);

/// sqrt of the mean per-component sample variance.
double ensemble_spread(const Eigen::MatrixXd& states);

/// Gaussian MAP cost of an augmented state,
///   J(psi) = (psi_f - psi)^T C^-1 (psi_f - psi) + (o - M psi)^T C_oo^-1 (o - M psi),
/// with M = [0 | I] selecting the trailing n_o entries of psi.
double map_cost(const Eigen::VectorXd& psi, const Eigen::VectorXd& psi_forecast, const Eigen::MatrixXd& cov_psi,
                const Eigen::VectorXd& obs, const Eigen::MatrixXd& cov_oo);

}  // namespace ksc
