#include "ksc/ddpg.hpp"

#include "ksc/errors.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ksc {

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("truncated agent checkpoint");
    return v;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    put(out, static_cast<std::uint64_t>(m.rows()));
    put(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Eigen::MatrixXd get_matrix(std::istream& in) {
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (rows > (1u << 24) || cols > (1u << 24)) throw FormatError("implausible matrix size in checkpoint");
    Eigen::MatrixXd m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw FormatError("truncated agent checkpoint");
    return m;
}

void put_grads(std::ostream& out, const MlpGradients& g) {
    put(out, static_cast<std::uint32_t>(g.weights.size()));
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        put_matrix(out, g.weights[l]);
        put_matrix(out, g.biases[l]);
    }
}

MlpGradients get_grads(std::istream& in) {
    MlpGradients g;
    const auto n = get<std::uint32_t>(in);
    for (std::uint32_t l = 0; l < n; ++l) {
        g.weights.push_back(get_matrix(in));
        g.biases.push_back(get_matrix(in).col(0));
    }
    return g;
}

void put_mlp(std::ostream& out, const Mlp& net) {
    put(out, static_cast<std::uint32_t>(net.output));
    put_grads(out, MlpGradients{net.weights, net.biases});
}

Mlp get_mlp(std::istream& in) {
    Mlp net;
    net.output = static_cast<OutputActivation>(get<std::uint32_t>(in));
    MlpGradients g = get_grads(in);
    net.weights = std::move(g.weights);
    net.biases = std::move(g.biases);
    return net;
}

void put_adam(std::ostream& out, const AdamState& s) {
    put(out, static_cast<std::int64_t>(s.step));
    put_grads(out, s.first);
    put_grads(out, s.second);
}

AdamState get_adam(std::istream& in) {
    AdamState s;
    s.step = get<std::int64_t>(in);
    s.first = get_grads(in);
    s.second = get_grads(in);
    return s;
}

void clip(MlpGradients& g, double max_norm) {
    if (max_norm <= 0.0) return;
    const double norm = std::sqrt(g.squared_norm());
    if (norm > max_norm) g.scale(max_norm / norm);
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
    Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
}

std::pair<MlpGradients, double> critic_gradient(const Mlp& critic, const Mlp& target_actor, const Mlp& target_critic,
                                                const Batch& batch, double gamma) {
    const double n = static_cast<double>(batch.rewards.size());
    const Eigen::MatrixXd next_actions = mlp_forward(target_actor, batch.next_states);
    const Eigen::VectorXd target =
        batch.rewards + gamma * critic_value(target_critic, batch.next_states, next_actions);
    MlpCache cache;
    const Eigen::RowVectorXd q = mlp_forward(critic, stack(batch.states, batch.actions), &cache);
    const Eigen::RowVectorXd delta = target.transpose() - q;
    const double loss = delta.squaredNorm() / n;
    return {mlp_backward(critic, cache, -2.0 / n * delta), loss};
}

std::pair<MlpGradients, double> actor_gradient(const Mlp& actor, const Mlp& critic, const Batch& batch) {
    const double n = static_cast<double>(batch.rewards.size());
    const Eigen::Index n_s = batch.states.rows();
    MlpCache actor_cache;
    const Eigen::MatrixXd actions = mlp_forward(actor, batch.states, &actor_cache);
    MlpCache critic_cache;
    const Eigen::RowVectorXd q = mlp_forward(critic, stack(batch.states, actions), &critic_cache);
    Eigen::MatrixXd input_grad;
    mlp_backward(critic, critic_cache, Eigen::RowVectorXd::Constant(q.size(), -1.0 / n), &input_grad);
    return {mlp_backward(actor, actor_cache, input_grad.bottomRows(input_grad.rows() - n_s)), -q.mean()};
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity, int state_dim, int action_dim)
    : capacity_(capacity),
      states_(state_dim, static_cast<Eigen::Index>(capacity)),
      actions_(action_dim, static_cast<Eigen::Index>(capacity)),
      rewards_(static_cast<Eigen::Index>(capacity)),
      next_states_(state_dim, static_cast<Eigen::Index>(capacity)) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
    if (t.state.size() != states_.rows() || t.next_state.size() != states_.rows() ||
        t.action.size() != actions_.rows()) {
        throw std::invalid_argument("transition dimension mismatch");
    }
    const auto slot = static_cast<Eigen::Index>(head_);
    states_.col(slot) = t.state;
    actions_.col(slot) = t.action;
    rewards_[slot] = t.reward;
    next_states_.col(slot) = t.next_state;
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw std::out_of_range("replay buffer index");
    const auto slot = static_cast<Eigen::Index>((head_ + capacity_ - size_ + i) % capacity_);
    return {states_.col(slot), actions_.col(slot), rewards_[slot], next_states_.col(slot)};
}

Batch ReplayBuffer::sample(int count, std::mt19937_64& rng) const {
    if (count < 1 || static_cast<std::size_t>(count) > size_) {
        throw std::invalid_argument("replay buffer holds fewer transitions than the batch size");
    }
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    Batch b{Eigen::MatrixXd(states_.rows(), count), Eigen::MatrixXd(actions_.rows(), count), Eigen::VectorXd(count),
            Eigen::MatrixXd(states_.rows(), count)};
    for (int i = 0; i < count; ++i) {
        // Slots [0, size) are all occupied, whatever the ring position.
        const auto slot = static_cast<Eigen::Index>(pick(rng));
        b.states.col(i) = states_.col(slot);
        b.actions.col(i) = actions_.col(slot);
        b.rewards[i] = rewards_[slot];
        b.next_states.col(i) = next_states_.col(slot);
    }
    return b;
}

void ReplayBuffer::write(std::ostream& out) const {
    put(out, static_cast<std::uint64_t>(capacity_));
    put(out, static_cast<std::uint64_t>(size_));
    put(out, static_cast<std::uint64_t>(head_));
    put(out, static_cast<std::uint32_t>(states_.rows()));
    put(out, static_cast<std::uint32_t>(actions_.rows()));
    const auto n = static_cast<Eigen::Index>(size_);
    for (const Eigen::MatrixXd* m : {&states_, &actions_, &next_states_}) {
        out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->rows() * n * sizeof(double)));
    }
    out.write(reinterpret_cast<const char*>(rewards_.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

ReplayBuffer ReplayBuffer::read(std::istream& in) {
    const auto capacity = get<std::uint64_t>(in);
    const auto size = get<std::uint64_t>(in);
    const auto head = get<std::uint64_t>(in);
    const auto n_s = get<std::uint32_t>(in);
    const auto n_a = get<std::uint32_t>(in);
    if (capacity == 0 || size > capacity || head >= capacity || capacity > (1ull << 28)) {
        throw FormatError("inconsistent replay buffer header");
    }
    ReplayBuffer b(capacity, static_cast<int>(n_s), static_cast<int>(n_a));
    b.size_ = size;
    b.head_ = head;
    const auto n = static_cast<Eigen::Index>(size);
    for (Eigen::MatrixXd* m : {&b.states_, &b.actions_, &b.next_states_}) {
        in.read(reinterpret_cast<char*>(m->data()), static_cast<std::streamsize>(m->rows() * n * sizeof(double)));
    }
    in.read(reinterpret_cast<char*>(b.rewards_.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw FormatError("truncated replay buffer");
    return b;
}

Eigen::VectorXd critic_value(const Mlp& critic, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
    return mlp_forward(critic, stack(states, actions)).row(0).transpose();
}

PolicyGradients policy_gradients(const Mlp& actor, const Mlp& critic, const Mlp& target_actor,
                                 const Mlp& target_critic, const Batch& batch, double gamma) {
    auto [cg, lq] = critic_gradient(critic, target_actor, target_critic, batch, gamma);
    auto [ag, lp] = actor_gradient(actor, critic, batch);
    return {std::move(cg), std::move(ag), {lq, lp}};
}

DdpgAgent::DdpgAgent(int state_dim, int action_dim, DdpgSettings settings, std::uint64_t seed)
    : settings_(std::move(settings)),
      buffer_(settings_.buffer_capacity, state_dim, action_dim),
      rng_(seed) {
    if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("agent dimensions must be positive");
    std::vector<int> actor_sizes{state_dim};
    actor_sizes.insert(actor_sizes.end(), settings_.hidden.begin(), settings_.hidden.end());
    actor_sizes.push_back(action_dim);
    std::vector<int> critic_sizes{state_dim + action_dim};
    critic_sizes.insert(critic_sizes.end(), settings_.hidden.begin(), settings_.hidden.end());
    critic_sizes.push_back(1);
    actor_ = Mlp::create(actor_sizes, OutputActivation::tanh, rng_, settings_.output_init);
    critic_ = Mlp::create(critic_sizes, OutputActivation::identity, rng_, settings_.output_init);
    target_actor_ = actor_;
    target_critic_ = critic_;
    actor_adam_ = AdamState::for_network(actor_);
    critic_adam_ = AdamState::for_network(critic_);
}

Eigen::VectorXd DdpgAgent::policy(const Eigen::VectorXd& state, bool use_target) const {
    return mlp_forward(use_target ? target_actor_ : actor_, state).col(0);
}

Action DdpgAgent::select_action(const Eigen::VectorXd& state, double exploration_std, bool use_target) {
    Eigen::VectorXd a = policy(state, use_target);
    if (exploration_std > 0.0) {
        std::normal_distribution<double> noise(0.0, exploration_std);
        for (auto& v : a) v += noise(rng_);
    }
    return Action(a);  // clamps to [-1, 1]
}

Action DdpgAgent::random_action() {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd a(action_dim());
    for (auto& v : a) v = u(rng_);
    return Action(a);
}

UpdateLosses DdpgAgent::update() { return update_on(buffer_.sample(settings_.batch_size, rng_)); }

UpdateLosses DdpgAgent::update_on(const Batch& batch) {
    UpdateLosses losses;
    auto [cg, lq] = critic_gradient(critic_, target_actor_, target_critic_, batch, settings_.gamma);
    if (!std::isfinite(lq) || !std::isfinite(cg.squared_norm())) {
        throw std::runtime_error("non-finite critic loss " + std::to_string(lq) + " after " +
                                 std::to_string(critic_adam_.step) + " updates; rewards in batch range [" +
                                 std::to_string(batch.rewards.minCoeff()) + ", " +
                                 std::to_string(batch.rewards.maxCoeff()) + "]");
    }
    clip(cg, settings_.gradient_clip);
    adam_step(critic_, cg, critic_adam_, AdamSettings{settings_.critic_learning_rate});
    losses.critic = lq;

    auto [ag, lp] = actor_gradient(actor_, critic_, batch);
    if (!std::isfinite(lp) || !std::isfinite(ag.squared_norm())) {
        throw std::runtime_error("non-finite actor loss " + std::to_string(lp) + " after " +
                                 std::to_string(actor_adam_.step) + " updates");
    }
    clip(ag, settings_.gradient_clip);
    adam_step(actor_, ag, actor_adam_, AdamSettings{settings_.actor_learning_rate});
    losses.actor = lp;

    soft_update(target_critic_, critic_, settings_.tau);
    soft_update(target_actor_, actor_, settings_.tau);
    return losses;
}

namespace {
constexpr std::array<char, 8> kAgentMagic{'K', 'S', 'C', 'A', 'G', 'E', 'N', 'T'};
}

void DdpgAgent::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(kAgentMagic.data(), kAgentMagic.size());
    put(out, kAgentCheckpointVersion);
    put(out, static_cast<std::uint32_t>(settings_.hidden.size()));
    for (int h : settings_.hidden) put(out, static_cast<std::int32_t>(h));
    put(out, settings_.actor_learning_rate);
    put(out, settings_.critic_learning_rate);
    put(out, settings_.gamma);
    put(out, settings_.tau);
    put(out, static_cast<std::int32_t>(settings_.batch_size));
    put(out, static_cast<std::uint64_t>(settings_.buffer_capacity));
    put(out, settings_.exploration_std);
    put(out, settings_.output_init);
    put(out, settings_.gradient_clip);
    for (const Mlp* net : {&actor_, &critic_, &target_actor_, &target_critic_}) put_mlp(out, *net);
    put(out, static_cast<std::int64_t>(progress.episodes));
    put(out, progress.best_eval_return);
    put_adam(out, actor_adam_);
    put_adam(out, critic_adam_);
    std::ostringstream rng_text;
    rng_text << rng_;
    const std::string rng_state = rng_text.str();
    put(out, static_cast<std::uint64_t>(rng_state.size()));
    out.write(rng_state.data(), static_cast<std::streamsize>(rng_state.size()));
    buffer_.write(out);
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

DdpgAgent DdpgAgent::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("agent checkpoint not found: " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kAgentMagic) throw FormatError(path.string() + " is not an agent checkpoint");
    const auto version = get<std::uint32_t>(in);
    if (version != kAgentCheckpointVersion) {
        throw FormatError("agent checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kAgentCheckpointVersion) + ")");
    }
    DdpgSettings s;
    s.hidden.resize(get<std::uint32_t>(in));
    for (int& h : s.hidden) h = get<std::int32_t>(in);
    s.actor_learning_rate = get<double>(in);
    s.critic_learning_rate = get<double>(in);
    s.gamma = get<double>(in);
    s.tau = get<double>(in);
    s.batch_size = get<std::int32_t>(in);
    s.buffer_capacity = get<std::uint64_t>(in);
    s.exploration_std = get<double>(in);
    s.output_init = get<double>(in);
    s.gradient_clip = get<double>(in);
    Mlp actor = get_mlp(in);
    Mlp critic = get_mlp(in);
    Mlp target_actor = get_mlp(in);
    Mlp target_critic = get_mlp(in);
    if (actor.layers() == 0 || critic.layers() == 0) throw FormatError("empty network in agent checkpoint");
    const int n_s = actor.input_size();
    const int n_a = actor.output_size();
    // Small placeholder buffer; replaced below by the stored one.
    s.buffer_capacity = 1;
    DdpgAgent agent(n_s, n_a, s, 0);
    agent.actor_ = std::move(actor);
    agent.critic_ = std::move(critic);
    agent.target_actor_ = std::move(target_actor);
    agent.target_critic_ = std::move(target_critic);
    agent.progress.episodes = get<std::int64_t>(in);
    agent.progress.best_eval_return = get<double>(in);
    agent.actor_adam_ = get_adam(in);
    agent.critic_adam_ = get_adam(in);
    const auto rng_size = get<std::uint64_t>(in);
    if (rng_size > (1u << 20)) throw FormatError("implausible RNG state size");
    std::string rng_state(rng_size, '\0');
    in.read(rng_state.data(), static_cast<std::streamsize>(rng_size));
    std::istringstream rng_text(rng_state);
    rng_text >> agent.rng_;
    if (!in || !rng_text) throw FormatError("corrupt RNG state in agent checkpoint");
    agent.buffer_ = ReplayBuffer::read(in);
    agent.settings_.buffer_capacity = agent.buffer_.capacity();
    if (agent.buffer_.state_dim() != n_s || agent.buffer_.action_dim() != n_a) {
        throw FormatError("replay buffer dimensions do not match the networks");
    }
    return agent;
}

}  // namespace ksc
