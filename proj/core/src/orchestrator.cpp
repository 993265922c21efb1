#include "ksc/orchestrator.hpp"

#include "ksc/enkf.hpp"
#include "ksc/errors.hpp"
#include "ksc/esn_training.hpp"
#include "ksc/fourier_model.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ksc {

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::random: return "random";
        case Stage::learn: return "learn";
        case Stage::eval: return "eval";
    }
    return "unknown";
}

double episode_return(const EpisodeRecord& record, int k_start, int k_end) {
    double total = 0.0;
    for (const StepRecord& s : record.steps) {
        if (s.k >= k_start && s.k < k_end) total += s.r_true;
    }
    return total;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::mt19937_64 episode_rng(std::uint64_t seed, Stage stage, long episode, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stage) + 1u, static_cast<std::uint32_t>(episode),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(episode) >> 32), stream};
    return std::mt19937_64(seq);
}

// Common face of the two forecast models inside the DA loop.
class DaModel {
public:
    virtual ~DaModel() = default;
    virtual void set_action(const Action& action) = 0;
    virtual void forecast() = 0;
    virtual AugmentedEnsemble augmented(const SensorLayout& sensors) const = 0;
    virtual void set_states(const Eigen::MatrixXd& states) = 0;
    virtual Eigen::VectorXd rl_state() const = 0;
    virtual double spread() const = 0;
};

class FourierDa final : public DaModel {
public:
    FourierDa(const ExperimentConfig& c, const SpectralState& truth, std::mt19937_64& rng)
        : model_(c.model.n_f, c.length(), c.physics.dt, c.actuators(), c.physics.n_fine),
          ensemble_(init_ensemble(truncate(truth, c.model.n_f), c.model.sigma0, c.model.members, rng)),
          grid_(c.control.rl_grid),
          workers_(c.workers),
          forcing_(Eigen::VectorXcd::Zero(c.model.n_f / 2 + 1)) {}

    void set_action(const Action& action) override { forcing_ = model_.forcing(action); }
    void forecast() override { model_.forecast(ensemble_, forcing_, workers_); }

    AugmentedEnsemble augmented(const SensorLayout& sensors) const override {
        const auto m = static_cast<Eigen::Index>(ensemble_.size());
        AugmentedEnsemble a{Eigen::MatrixXd(ensemble_.n_f() + 2, m), Eigen::MatrixXd(sensors.size(), m)};
        for (Eigen::Index j = 0; j < m; ++j) {
            a.states.col(j) = to_real_vector(ensemble_.members[j]);
            a.predicted_obs.col(j) = model_observe(ensemble_.members[j], sensors);
        }
        return a;
    }

    void set_states(const Eigen::MatrixXd& states) override {
        for (Eigen::Index j = 0; j < states.cols(); ++j) {
            ensemble_.members[j] = from_real_vector(states.col(j), ensemble_.n_f(), ensemble_.members[j].length);
        }
    }

    Eigen::VectorXd rl_state() const override { return ksc::rl_state(ensemble_, grid_); }

    double spread() const override {
        Eigen::MatrixXd s(ensemble_.n_f() + 2, static_cast<Eigen::Index>(ensemble_.size()));
        for (std::size_t j = 0; j < ensemble_.size(); ++j) s.col(static_cast<Eigen::Index>(j)) = to_real_vector(ensemble_.members[j]);
        return ensemble_spread(s);
    }

private:
    FourierModel model_;
    FourierEnsemble ensemble_;
    int grid_;
    int workers_;
    Eigen::VectorXcd forcing_;
};

class EsnDa final : public DaModel {
public:
    EsnDa(const ExperimentConfig& c, const EsnMachine& machine, const SpectralState& truth, std::mt19937_64& rng)
        : machine_(machine), length_(c.length()), action_(Action::zero(c.control.n_a)) {
        const FourierEnsemble fields = init_ensemble(truth, c.model.sigma0, c.model.members, rng);
        Eigen::MatrixXd samples(machine.n_u(), c.model.members);
        for (int j = 0; j < c.model.members; ++j) samples.col(j) = to_physical_grid(fields.members[j], machine.n_u());
        ensemble_.states = washout_init_ensemble(machine, samples, action_, c.model.esn_washout);
    }

    void set_action(const Action& action) override { action_ = action; }
    void forecast() override { esn_forecast(ensemble_, machine_, action_); }

    AugmentedEnsemble augmented(const SensorLayout& sensors) const override {
        return {ensemble_.states, esn_ensemble_observe(ensemble_, machine_, sensors, length_)};
    }

    void set_states(const Eigen::MatrixXd& states) override { ensemble_.states = states; }
    Eigen::VectorXd rl_state() const override { return esn_rl_state(ensemble_, machine_); }
    double spread() const override { return ensemble_spread(ensemble_.states); }

private:
    const EsnMachine& machine_;
    double length_;
    Action action_;
    EsnEnsemble ensemble_;
};

double rms_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).norm() / std::sqrt(static_cast<double>(a.size()));
}

}  // namespace

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
    validate(config_);
    if (config_.mode == Mode::damirl_esn) {
        esn_ = std::make_shared<const EsnMachine>(load_esn(config_.model.esn_checkpoint));
        if (esn_->n_u() != config_.control.rl_grid || esn_->n_a() != config_.control.n_a) {
            throw std::invalid_argument("ESN checkpoint dimensions do not match the experiment (n_u must equal rl_grid)");
        }
    }
}

Experiment::Experiment(ExperimentConfig config, std::shared_ptr<const EsnMachine> esn)
    : config_(std::move(config)), esn_(std::move(esn)) {
    validate(config_);
    if (config_.mode == Mode::damirl_esn) {
        if (!esn_ || !esn_->trained()) throw std::invalid_argument("damirl_esn needs a trained ESN");
        if (esn_->n_u() != config_.control.rl_grid || esn_->n_a() != config_.control.n_a) {
            throw std::invalid_argument("ESN dimensions do not match the experiment (n_u must equal rl_grid)");
        }
    }
}

int Experiment::agent_state_dim() const {
    return config_.mode == Mode::model_free ? config_.control.n_o : config_.control.rl_grid;
}

DdpgAgent Experiment::make_agent() const {
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32), 99u};
    std::uint64_t agent_seed = 0;
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    agent_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return DdpgAgent(agent_state_dim(), config_.control.n_a, config_.agent, agent_seed);
}

EpisodeRecord Experiment::run_episode(DdpgAgent& agent, Stage stage, long episode, EpisodeOptions options) {
    const ExperimentConfig& c = config_;
    const auto started = std::chrono::steady_clock::now();
    const long updates_before = agent.updates();

    EpisodeRecord record;
    record.stage = stage;
    record.episode = episode;
    record.control_start = c.episodes.control_free_steps;
    record.steps.reserve(c.episodes.length);
    if (options.record_fields) {
        record.true_fields = Eigen::MatrixXd::Constant(c.control.rl_grid, c.episodes.length, kNaN);
        record.estimated_fields = Eigen::MatrixXd::Constant(c.control.rl_grid, c.episodes.length, kNaN);
    }

    auto init_rng = episode_rng(c.seed, stage, episode, 1);
    auto obs_rng = episode_rng(c.seed, stage, episode, 2);
    auto filter_rng = episode_rng(c.seed, stage, episode, 3);
    auto action_rng = episode_rng(c.seed, stage, episode, 4);

    const KsEnvironment env(c.environment());
    const SensorLayout sensors = c.sensors();
    const int k_start = c.episodes.control_free_steps;
    Action action = Action::zero(c.control.n_a);
    Eigen::VectorXcd truth_forcing = Eigen::VectorXcd::Zero(c.physics.n_f_true / 2 + 1);

    try {
        SpectralState truth = env.init(init_rng(), c.physics.spinup_steps);
        std::unique_ptr<DaModel> model;
        if (c.mode == Mode::damirl_fourier) {
            model = std::make_unique<FourierDa>(c, truth, init_rng);
        } else if (c.mode == Mode::damirl_esn) {
            model = std::make_unique<EsnDa>(c, *esn_, truth, init_rng);
        }

        Eigen::VectorXd observed;  // model-free agent state
        for (int k = 0; k < c.episodes.length; ++k) {
            StepRecord step;
            step.k = k;
            step.loss_q = step.loss_pi = kNaN;
            step.innovation = step.error_prior = step.error_posterior = kNaN;
            step.spread = kNaN;
            const bool controlled = k >= k_start;
            const int since = k - k_start;

            Eigen::VectorXd state;
            if (controlled && model && since % c.control.obs_interval == 0) {
                const Observation obs = observe(truth, sensors, obs_rng, k);
                const Eigen::VectorXd clean = to_physical(truth, sensors.locations).values;
                const AugmentedEnsemble forecast = model->augmented(sensors);
                step.error_prior = rms_error(forecast.predicted_obs.rowwise().mean(), clean);
                auto [analysed, report] = analysis(forecast, obs.values, sensors.noise_level, filter_rng);
                model->set_states(inflate(analysed.states, c.model.inflation));
                step.innovation = report.innovation_norms.mean();
                step.error_posterior = rms_error(model->augmented(sensors).predicted_obs.rowwise().mean(), clean);
            }
            if (controlled) {
                if (model) {
                    state = model->rl_state();
                } else {
                    if (observed.size() == 0) observed = observe(truth, sensors, obs_rng, k).values;
                    state = observed;
                }
                if (since % c.control.action_interval == 0) {
                    switch (stage) {
                        case Stage::random: {
                            std::uniform_real_distribution<double> u(-1.0, 1.0);
                            Eigen::VectorXd a(c.control.n_a);
                            for (auto& v : a) v = u(action_rng);
                            action = Action(a);
                            break;
                        }
                        case Stage::learn: action = agent.select_action(state, c.agent.exploration_std); break;
                        case Stage::eval: action = agent.select_action(state, 0.0, true); break;
                    }
                    truth_forcing = env.forcing(action);
                    if (model) model->set_action(action);
                }
            }

            truth = env.step_forced(truth, truth_forcing);
            if (model) model->forecast();

            Eigen::VectorXd next_state;
            if (model) {
                next_state = model->rl_state();
                step.spread = model->spread();
            } else if (controlled) {
                observed = observe(truth, sensors, obs_rng, k + 1).values;
                next_state = observed;
            }
            step.action = action.values();
            step.r_true = true_reward(truth, action, c.control.action_penalty);
            step.true_norm = rms(truth);
            step.r_model = model ? reward(next_state, action, c.control.action_penalty) : step.r_true;
            if (options.record_fields) {
                record.true_fields.col(k) = to_physical_grid(truth, c.control.rl_grid);
                if (model) {
                    record.estimated_fields.col(k) = next_state;
                }
            }

            if (controlled && stage != Stage::eval) {
                agent.remember({state, action.values(), step.r_model, next_state});
                if (stage == Stage::learn && agent.ready()) {
                    const UpdateLosses losses = agent.update();
                    step.loss_q = losses.critic;
                    step.loss_pi = losses.actor;
                }
            }
            record.steps.push_back(std::move(step));
        }
    } catch (const EnsembleCollapseError& e) {
        record.aborted = true;
        record.abort_reason = e.what();
    } catch (const DivergenceError& e) {
        record.aborted = true;
        record.abort_reason = e.what();
    }
    if (record.aborted) {
        std::clog << "[orchestrator] " << to_string(stage) << " episode " << episode << " aborted: " << record.abort_reason
                  << "\n";
    }

    record.total_return = episode_return(record, k_start, c.episodes.length);
    record.updates = agent.updates() - updates_before;
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return record;
}

TrainingLog train(Experiment& experiment, DdpgAgent& agent, const TrainOptions& options,
                  std::optional<DdpgAgent>* best) {
    const ExperimentConfig& c = experiment.config();
    TrainingLog log;
    const long total = c.episodes.random + c.episodes.training;
    auto keep = [&](EpisodeRecord rec) {
        if (options.on_episode) options.on_episode(rec);
        if (!options.keep_step_records) rec.steps.clear();
        log.episodes.push_back(std::move(rec));
    };

    for (long e = agent.progress.episodes; e < total; ++e) {
        const Stage stage = e < c.episodes.random ? Stage::random : Stage::learn;
        EpisodeRecord rec = experiment.run_episode(agent, stage, e);
        agent.progress.episodes = e + 1;
        std::clog << "[train] " << to_string(stage) << " episode " << e << " return " << rec.total_return << " ("
                  << rec.wall_seconds << " s)\n";
        const bool evaluate_now = stage == Stage::learn && (e + 1 - c.episodes.random) % c.episodes.eval_frequency == 0;
        if (stage == Stage::learn) log.learning_returns.push_back(rec.total_return);
        keep(std::move(rec));

        if (evaluate_now) {
            EpisodeRecord eval = experiment.run_episode(agent, Stage::eval, e);
            std::clog << "[train] evaluation after episode " << e << " return " << eval.total_return << "\n";
            log.eval_returns.push_back(eval.total_return);
            if (!eval.aborted && eval.total_return > agent.progress.best_eval_return) {
                agent.progress.best_eval_return = eval.total_return;
                log.best_eval_episode = e;
                log.best_eval_return = eval.total_return;
                log.best_eval_record = eval;
                if (options.best_checkpoint) agent.save(*options.best_checkpoint);
                if (best) best->emplace(agent);
            }
            keep(std::move(eval));
            if (options.latest_checkpoint) agent.save(*options.latest_checkpoint);
        }
    }
    if (options.latest_checkpoint) agent.save(*options.latest_checkpoint);
    return log;
}

ReturnStatistics return_statistics(const std::vector<double>& returns) {
    if (returns.empty()) throw std::invalid_argument("no returns to summarize");
    ReturnStatistics s;
    s.returns = returns;
    const double n = static_cast<double>(returns.size());
    s.mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
    double sq = 0.0;
    for (double r : returns) sq += (r - s.mean) * (r - s.mean);
    s.std_dev = returns.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    s.min = *std::min_element(returns.begin(), returns.end());
    s.max = *std::max_element(returns.begin(), returns.end());
    return s;
}

ReturnStatistics evaluate(Experiment& experiment, DdpgAgent& agent, int n_episodes,
                          std::vector<EpisodeRecord>* records, bool record_fields) {
    if (n_episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
    constexpr long kEvaluationOffset = 1'000'000;  // keeps seeds apart from training evaluations
    std::vector<double> returns;
    for (int i = 0; i < n_episodes; ++i) {
        EpisodeRecord rec =
            experiment.run_episode(agent, Stage::eval, kEvaluationOffset + i, Experiment::EpisodeOptions{record_fields});
        returns.push_back(rec.total_return);
        if (records) records->push_back(std::move(rec));
    }
    return return_statistics(returns);
}

}  // namespace ksc
