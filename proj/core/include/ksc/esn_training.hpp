#pragma once

#include "ksc/environment.hpp"
#include "ksc/esn.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace ksc {

/// Random-action KS trajectories on the uniform n_u-point grid. Row k of an
/// episode is (u_k, a_k), and u_{k+1} is the truth advanced from u_k under a_k.
struct Dataset {
    int n_u = 0;
    int n_a = 0;
    double dt = 0.0;
    double nu = 0.0;
    int episode_length = 0;
    std::vector<Eigen::MatrixXd> states;   // n_u x episode_length each
    std::vector<Eigen::MatrixXd> actions;  // n_a x episode_length each

    int episodes() const { return static_cast<int>(states.size()); }
};

inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct DatasetSettings {
    EnvironmentSettings environment;
    int episodes = 50;
    int steps = 1500;
    int spinup_steps = 1000;
    std::uint64_t seed = 0;
};

Dataset generate_dataset(const DatasetSettings& settings, int workers = 1);

/// Episode indices for training, validation and testing (80/10/10 in order).
struct DatasetSplit {
    std::vector<int> train;
    std::vector<int> validation;
    std::vector<int> test;
};

DatasetSplit split_dataset(int episodes, double train_fraction = 0.8, double validation_fraction = 0.1);

/// sqrt( sum (y - y^)^2 / sum y^2 ) over all entries.
double relative_l2_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& prediction);

struct TrainingReport {
    long samples = 0;
};

/// Fits the input normalization and the ridge readout on the given episodes,
/// dropping the first `washout` reservoir states of every episode.
EsnMachine train_esn(const EsnParams& params, const Dataset& dataset, const std::vector<int>& episodes,
                     int washout = 100, TrainingReport* report = nullptr);

/// Washout open loop on u_{start-washout .. start-1}, one open-loop step from
/// u_start, then closed loop. Error of the predictions of u_{start+1 .. start+horizon}.
double closed_loop_error(const EsnMachine& machine, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                         int start, int horizon, int washout = 100);

struct ValidationSettings {
    int folds = 3;
    int realizations = 3;
    int fold_length = 500;
    int washout = 100;
    std::uint64_t seed = 0;  // fold start positions
};

/// Mean closed_loop_error of one machine over `folds` windows per episode, with
/// window starts drawn from settings.seed.
double evaluate_machine(const EsnMachine& machine, const Dataset& dataset, const std::vector<int>& episodes,
                        const ValidationSettings& settings);

/// Mean closed-loop error over realizations x episodes x folds. Realization r
/// uses reservoir seed params.seed + r.
double validate_esn(const EsnParams& params, const Dataset& dataset, const DatasetSplit& split,
                    const ValidationSettings& settings);

/// Interval for one searched hyperparameter; equal bounds pin the value.
struct SearchRange {
    double low = 0.0;
    double high = 0.0;
    bool log_scale = false;
};

struct SearchRanges {
    SearchRange leak_rate{0.05, 0.6, false};
    SearchRange spectral_radius{0.01, 1.0, true};
    SearchRange input_scaling{0.05, 1.0, true};
    SearchRange action_scaling{0.05, 1.0, true};
    SearchRange tikhonov{1e-9, 1e-3, true};
};

struct SearchResult {
    EsnParams best;
    double best_error = 0.0;
    std::vector<std::pair<EsnParams, double>> history;
};

/// Seeded random search; the second half of the budget perturbs the incumbent
/// (local refinement). Candidates are evaluated concurrently on `workers` threads.
SearchResult search_hyperparams(const EsnParams& base, const SearchRanges& ranges, int budget, const Dataset& dataset,
                                const DatasetSplit& split, const ValidationSettings& validation, std::uint64_t seed,
                                int workers = 1);

inline constexpr int kEsnCheckpointVersion = 1;

/// JSON checkpoint holding params, dimensions, normalization and W_out; the
/// random matrices are regenerated from the stored seed on load.
void save_esn(const EsnMachine& machine, const std::filesystem::path& path);
EsnMachine load_esn(const std::filesystem::path& path);

}  // namespace ksc
