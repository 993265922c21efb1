#pragma once

#include "ksc/config.hpp"
#include "ksc/ddpg.hpp"
#include "ksc/esn.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ksc {

enum class Stage { random, learn, eval };
std::string to_string(Stage stage);

/// Per-step log. Fields that do not apply at a step hold NaN.
struct StepRecord {
    int k = 0;
    Eigen::VectorXd action;
    double r_true = 0.0;
    double r_model = 0.0;
    double loss_q = 0.0;
    double loss_pi = 0.0;
    double spread = 0.0;
    double innovation = 0.0;
    double true_norm = 0.0;        // ||u||_2 / sqrt(n) of the truth after the step
    double error_prior = 0.0;      // mean-observation error at the sensors before an analysis
    double error_posterior = 0.0;  // and after it
};

struct EpisodeRecord {
    Stage stage = Stage::random;
    long episode = 0;
    int control_start = 0;  // k_start; the return sums r_true from here on
    std::vector<StepRecord> steps;
    double total_return = 0.0;
    bool aborted = false;
    std::string abort_reason;
    double wall_seconds = 0.0;
    long updates = 0;
    // Filled only when requested: truth and agent-state snapshots on the rl grid,
    // one column per step (after the step).
    Eigen::MatrixXd true_fields;
    Eigen::MatrixXd estimated_fields;
};

/// Sum of r_true over k in [k_start, k_end).
double episode_return(const EpisodeRecord& record, int k_start, int k_end);

/// Stateful pieces shared by every episode of a run.
class Experiment {
public:
    /// Loads the ESN checkpoint named in the config when mode = damirl_esn.
    explicit Experiment(ExperimentConfig config);
    Experiment(ExperimentConfig config, std::shared_ptr<const EsnMachine> esn);

    const ExperimentConfig& config() const noexcept { return config_; }
    /// Input dimension of the agent networks for this mode.
    int agent_state_dim() const;
    DdpgAgent make_agent() const;

    struct EpisodeOptions {
        bool record_fields = false;
    };

    /// One episode of the DA-MIRL loop (or the model-free baseline).
    EpisodeRecord run_episode(DdpgAgent& agent, Stage stage, long episode, EpisodeOptions options);
    EpisodeRecord run_episode(DdpgAgent& agent, Stage stage, long episode) {
        return run_episode(agent, stage, episode, EpisodeOptions{});
    }

private:
    ExperimentConfig config_;
    std::shared_ptr<const EsnMachine> esn_;
};

struct TrainingLog {
    std::vector<EpisodeRecord> episodes;  // random, learning and evaluation episodes in run order
    std::vector<double> learning_returns;
    std::vector<double> eval_returns;
    std::optional<long> best_eval_episode;
    double best_eval_return = 0.0;
    std::optional<EpisodeRecord> best_eval_record;
};

struct TrainOptions {
    std::optional<std::filesystem::path> best_checkpoint;    // written on every new best evaluation
    std::optional<std::filesystem::path> latest_checkpoint;  // written after each evaluation and at the end
    /// Called after each episode, for streaming logs.
    std::function<void(const EpisodeRecord&)> on_episode;
    bool keep_step_records = true;
};

/// Random stage, then learning episodes with an evaluation every
/// eval_frequency of them. Resumes from agent.progress.episodes. Returns the
/// log; `best` receives a copy of the agent at its best evaluation.
TrainingLog train(Experiment& experiment, DdpgAgent& agent, const TrainOptions& options,
                  std::optional<DdpgAgent>* best = nullptr);

struct ReturnStatistics {
    double mean = 0.0;
    double std_dev = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::vector<double> returns;
};

ReturnStatistics return_statistics(const std::vector<double>& returns);

/// Evaluation-stage episodes with seeds distinct from training.
ReturnStatistics evaluate(Experiment& experiment, DdpgAgent& agent, int n_episodes,
                          std::vector<EpisodeRecord>* records = nullptr, bool record_fields = false);

}  // namespace ksc
