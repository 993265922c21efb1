#pragma once

#include "ksc/ks_dynamics.hpp"
#include "ksc/mlp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <vector>

namespace ksc {

struct Transition {
    Eigen::VectorXd state;
    Eigen::VectorXd action;
    double reward = 0.0;
    Eigen::VectorXd next_state;
};

struct Batch {
    Eigen::MatrixXd states;       // n_s x n_b
    Eigen::MatrixXd actions;      // n_a x n_b
    Eigen::VectorXd rewards;      // n_b
    Eigen::MatrixXd next_states;  // n_s x n_b
};

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, int state_dim, int action_dim);

    void push(const Transition& t);
    /// Uniform sampling with replacement. Requires size() >= count.
    Batch sample(int count, std::mt19937_64& rng) const;

    std::size_t size() const noexcept { return size_; }
    std::size_t capacity() const noexcept { return capacity_; }
    int state_dim() const noexcept { return static_cast<int>(states_.rows()); }
    int action_dim() const noexcept { return static_cast<int>(actions_.rows()); }
    /// The i-th oldest stored transition.
    Transition at(std::size_t i) const;

    void write(std::ostream& out) const;
    static ReplayBuffer read(std::istream& in);

private:
    std::size_t capacity_;
    std::size_t size_ = 0;
    std::size_t head_ = 0;  // next slot to write
    Eigen::MatrixXd states_;
    Eigen::MatrixXd actions_;
    Eigen::VectorXd rewards_;
    Eigen::MatrixXd next_states_;
};

struct DdpgSettings {
    std::vector<int> hidden{256, 256};
    double actor_learning_rate = 3e-4;
    double critic_learning_rate = 3e-4;
    double gamma = 0.99;
    double tau = 0.005;
    int batch_size = 256;
    std::size_t buffer_capacity = 100000;
    double exploration_std = 0.2;
    double output_init = 3e-3;
    double gradient_clip = 0.0;  // global-norm clip; 0 disables
};

/// Bookkeeping carried in the checkpoint so interrupted training can resume.
struct TrainingProgress {
    long episodes = 0;  // completed random + learning episodes
    double best_eval_return = -std::numeric_limits<double>::infinity();
};

struct UpdateLosses {
    double critic = 0.0;  // mean TD error squared
    double actor = 0.0;   // -mean Q(s, pi(s))
};

struct PolicyGradients {
    MlpGradients critic;
    MlpGradients actor;
    UpdateLosses losses;
};

/// Deterministic actor-critic with target networks. Targets start equal to the
/// learning networks.
class DdpgAgent {
public:
    DdpgAgent(int state_dim, int action_dim, DdpgSettings settings, std::uint64_t seed);

    int state_dim() const noexcept { return actor_.input_size(); }
    int action_dim() const noexcept { return actor_.output_size(); }
    const DdpgSettings& settings() const noexcept { return settings_; }

    /// pi(s) + N(0, std^2 I) clamped to [-1, 1]; `use_target` evaluates pi'.
    Action select_action(const Eigen::VectorXd& state, double exploration_std, bool use_target = false);
    Eigen::VectorXd policy(const Eigen::VectorXd& state, bool use_target = false) const;
    Action random_action();

    void remember(const Transition& t) { buffer_.push(t); }
    bool ready() const noexcept { return buffer_.size() >= static_cast<std::size_t>(settings_.batch_size); }

    /// Samples a batch and performs one critic step, one actor step and the soft
    /// target updates. Throws on a non-finite loss without touching parameters.
    UpdateLosses update();
    UpdateLosses update_on(const Batch& batch);

    Mlp& actor() noexcept { return actor_; }
    Mlp& critic() noexcept { return critic_; }
    Mlp& target_actor() noexcept { return target_actor_; }
    Mlp& target_critic() noexcept { return target_critic_; }
    const Mlp& actor() const noexcept { return actor_; }
    const Mlp& critic() const noexcept { return critic_; }
    const Mlp& target_actor() const noexcept { return target_actor_; }
    const Mlp& target_critic() const noexcept { return target_critic_; }
    const ReplayBuffer& buffer() const noexcept { return buffer_; }
    std::mt19937_64& rng() noexcept { return rng_; }
    long updates() const noexcept { return critic_adam_.step; }

    void save(const std::filesystem::path& path) const;
    static DdpgAgent load(const std::filesystem::path& path);

    TrainingProgress progress;

private:
    DdpgSettings settings_;
    Mlp actor_, critic_, target_actor_, target_critic_;
    AdamState actor_adam_, critic_adam_;
    ReplayBuffer buffer_;
    std::mt19937_64 rng_;
};

/// Critic gradient of mean (r + gamma Q'(s', pi'(s')) - Q(s, a))^2 and actor
/// gradient of -mean Q(s, pi(s)), both at the current parameters.
PolicyGradients policy_gradients(const Mlp& actor, const Mlp& critic, const Mlp& target_actor,
                                 const Mlp& target_critic, const Batch& batch, double gamma);

/// Q(s, a) for batches, critic input [s; a].
Eigen::VectorXd critic_value(const Mlp& critic, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions);

inline constexpr std::uint32_t kAgentCheckpointVersion = 1;

}  // namespace ksc
