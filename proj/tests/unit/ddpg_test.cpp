#include "ksc/ddpg.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ksc/errors.hpp"

namespace ksc {
namespace {

Transition numbered(double id, int n_s = 2, int n_a = 1) {
    return {Eigen::VectorXd::Constant(n_s, id), Eigen::VectorXd::Constant(n_a, id / 10), id,
            Eigen::VectorXd::Constant(n_s, id + 0.5)};
}

DdpgSettings small_settings() {
    DdpgSettings s;
    s.hidden = {16, 16};
    s.batch_size = 4;
    s.buffer_capacity = 100;
    return s;
}

TEST(ReplayBuffer, RingEvictsOldest) {
    ReplayBuffer b(3, 2, 1);
    for (int i = 1; i <= 4; ++i) b.push(numbered(i));
    EXPECT_EQ(b.size(), 3u);
    EXPECT_EQ(b.at(0).reward, 2.0);
    EXPECT_EQ(b.at(2).reward, 4.0);
    EXPECT_EQ(b.at(2).next_state, Eigen::VectorXd::Constant(2, 4.5));
    EXPECT_THROW(b.at(3), std::out_of_range);
    EXPECT_THROW(b.push(numbered(5, 3, 1)), std::invalid_argument);
    EXPECT_THROW(ReplayBuffer(0, 2, 1), std::invalid_argument);
}

TEST(ReplayBuffer, SingleItemSample) {
    ReplayBuffer b(10, 2, 1);
    b.push(numbered(7));
    std::mt19937_64 rng(1);
    const Batch batch = b.sample(1, rng);
    EXPECT_EQ(batch.rewards[0], 7.0);
    EXPECT_EQ(batch.states.col(0), Eigen::VectorXd::Constant(2, 7.0));
    EXPECT_EQ(batch.actions(0, 0), 0.7);
    EXPECT_THROW(b.sample(2, rng), std::invalid_argument);
}

TEST(ReplayBuffer, SamplingIsUniform) {
    ReplayBuffer b(4, 2, 1);
    for (int i = 0; i < 6; ++i) b.push(numbered(i));
    std::mt19937_64 rng(2);
    std::array<int, 6> counts{};
    for (int k = 0; k < 10000; ++k) {
        const Batch batch = b.sample(4, rng);
        for (Eigen::Index i = 0; i < batch.rewards.size(); ++i) ++counts[static_cast<int>(batch.rewards[i])];
    }
    EXPECT_EQ(counts[0] + counts[1], 0);
    for (int i = 2; i < 6; ++i) EXPECT_NEAR(counts[i], 10000, 300) << i;
}

TEST(ReplayBuffer, StreamRoundTrip) {
    ReplayBuffer b(3, 2, 1);
    for (int i = 1; i <= 5; ++i) b.push(numbered(i));
    std::stringstream ss;
    b.write(ss);
    const ReplayBuffer back = ReplayBuffer::read(ss);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back.capacity(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.at(i).reward, b.at(i).reward);
    // Ring position survives: the next push still evicts the oldest.
    ReplayBuffer c = back;
    c.push(numbered(9));
    EXPECT_EQ(c.at(0).reward, 4.0);
}

TEST(Agent, TargetsStartEqual) {
    DdpgAgent agent(5, 2, small_settings(), 1);
    EXPECT_EQ(flatten(agent.actor()), flatten(agent.target_actor()));
    EXPECT_EQ(flatten(agent.critic()), flatten(agent.target_critic()));
    EXPECT_EQ(agent.critic().input_size(), 7);
    EXPECT_EQ(agent.critic().output_size(), 1);
    EXPECT_EQ(agent.actor().output, OutputActivation::tanh);
    EXPECT_EQ(agent.critic().output, OutputActivation::identity);
}

TEST(Agent, ZeroExplorationIsDeterministic) {
    DdpgAgent agent(5, 2, small_settings(), 2);
    const Eigen::VectorXd s = Eigen::VectorXd::Random(5);
    const Action a = agent.select_action(s, 0.0);
    EXPECT_EQ(a.values(), agent.policy(s));
    EXPECT_EQ(agent.select_action(s, 0.0).values(), a.values());
}

TEST(Agent, ExplorationNoiseStatistics) {
    DdpgAgent agent(5, 2, small_settings(), 3);
    const Eigen::VectorXd s = Eigen::VectorXd::Zero(5);
    const Eigen::VectorXd mu = agent.policy(s);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double d = agent.select_action(s, 0.2).values()[0] - mu[0];
        sum += d;
        sq += d * d;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.005);
    EXPECT_NEAR(std::sqrt(sq / n), 0.2, 0.004);
}

TEST(Agent, ActionsClampedAndRandomInRange) {
    DdpgAgent agent(3, 4, small_settings(), 4);
    for (int i = 0; i < 100; ++i) {
        EXPECT_LE(agent.select_action(Eigen::VectorXd::Random(3), 5.0).values().cwiseAbs().maxCoeff(), 1.0);
        EXPECT_LE(agent.random_action().values().cwiseAbs().maxCoeff(), 1.0);
    }
}

TEST(Agent, PolicyGradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const test::GradientCheck c = test::check_gradients(seed);
        EXPECT_LT(c.critic, 1e-5) << seed;
        EXPECT_LT(c.actor, 1e-5) << seed;
    }
}

// Linear critic Q(s, a) = w^T [s; a] + b and linear-tanh target actor.
Mlp linear_critic(const Eigen::VectorXd& w, double b) {
    Mlp net;
    net.weights = {w.transpose()};
    net.biases = {Eigen::VectorXd::Constant(1, b)};
    net.output = OutputActivation::identity;
    return net;
}

TEST(Agent, HandBuiltLinearCriticLoss) {
    const Eigen::Vector3d w(0.5, -1.0, 2.0);  // n_s = 2, n_a = 1
    const Mlp critic = linear_critic(w, 0.1);
    const Mlp target_critic = linear_critic(Eigen::Vector3d(1.0, 0.0, -1.0), 0.0);
    Mlp target_actor;
    target_actor.weights = {Eigen::RowVector2d(0.3, 0.4)};
    target_actor.biases = {Eigen::VectorXd::Zero(1)};
    target_actor.output = OutputActivation::tanh;
    Mlp actor = target_actor;

    Batch batch{Eigen::Vector2d(1.0, 2.0), Eigen::MatrixXd::Constant(1, 1, 0.5), Eigen::VectorXd::Constant(1, -0.7),
                Eigen::Vector2d(-1.0, 0.5)};
    const double gamma = 0.9;
    const double q = 0.5 * 1.0 - 1.0 * 2.0 + 2.0 * 0.5 + 0.1;  // -0.4
    const double a_next = std::tanh(0.3 * -1.0 + 0.4 * 0.5);
    const double q_next = -1.0 - a_next;
    const double delta = -0.7 + gamma * q_next - q;
    const PolicyGradients g = policy_gradients(actor, critic, target_actor, target_critic, batch, gamma);
    EXPECT_NEAR(g.losses.critic, delta * delta, 1e-14);

    auto loss = [&](const Eigen::VectorXd& p) {
        Mlp c = critic;
        unflatten(c, p);
        const double d = -0.7 + gamma * q_next - critic_value(c, batch.states, batch.actions)[0];
        return d * d;
    };
    EXPECT_LT(test::relative_difference(flatten(g.critic), test::numerical_gradient(loss, flatten(critic))), 1e-5);
    // d(delta^2)/dw = -2 delta [s; a]
    EXPECT_NEAR(g.critic.weights[0](0, 2), -2 * delta * 0.5, 1e-12);
    EXPECT_NEAR(g.critic.biases[0][0], -2 * delta, 1e-12);
}

TEST(Agent, TauOneCopiesTauZeroFreezes) {
    std::mt19937_64 rng(5);
    const Batch batch = test::random_batch(4, 2, 4, rng);
    DdpgSettings s = small_settings();
    s.tau = 1.0;
    DdpgAgent copy(4, 2, s, 6);
    copy.update_on(batch);
    EXPECT_EQ(flatten(copy.target_actor()), flatten(copy.actor()));
    EXPECT_EQ(flatten(copy.target_critic()), flatten(copy.critic()));

    s.tau = 0.0;
    DdpgAgent frozen(4, 2, s, 6);
    const Eigen::VectorXd ta = flatten(frozen.target_actor());
    const Eigen::VectorXd tc = flatten(frozen.target_critic());
    frozen.update_on(batch);
    EXPECT_EQ(flatten(frozen.target_actor()), ta);
    EXPECT_EQ(flatten(frozen.target_critic()), tc);
    EXPECT_NE(flatten(frozen.actor()), ta);
    EXPECT_EQ(frozen.updates(), 1);
}

TEST(Agent, ActorStepIncreasesQUnderFixedCritic) {
    std::mt19937_64 rng(7);
    const Batch batch = test::random_batch(4, 2, 16, rng);
    DdpgSettings s = small_settings();
    s.critic_learning_rate = 0.0;
    s.actor_learning_rate = 1e-2;
    s.output_init = 0.3;
    DdpgAgent agent(4, 2, s, 8);
    const Eigen::VectorXd critic_before = flatten(agent.critic());
    const double first = agent.update_on(batch).actor;
    double last = first;
    for (int i = 0; i < 50; ++i) last = agent.update_on(batch).actor;
    EXPECT_LT(last, first);
    EXPECT_EQ(flatten(agent.critic()), critic_before);
}

TEST(Agent, CriticLearnsFixedTargets) {
    // gamma = 0 turns the TD loss into regression on the rewards.
    std::mt19937_64 rng(9);
    const Batch batch = test::random_batch(4, 2, 16, rng);
    DdpgSettings s = small_settings();
    s.gamma = 0.0;
    s.critic_learning_rate = 1e-2;
    DdpgAgent agent(4, 2, s, 10);
    const double first = agent.update_on(batch).critic;
    double last = first;
    for (int i = 0; i < 300; ++i) last = agent.update_on(batch).critic;
    EXPECT_LT(last, 0.05 * first);
}

TEST(Agent, NonFiniteLossThrowsWithoutTouchingParameters) {
    std::mt19937_64 rng(11);
    Batch batch = test::random_batch(4, 2, 4, rng);
    batch.rewards[2] = std::numeric_limits<double>::quiet_NaN();
    DdpgAgent agent(4, 2, small_settings(), 12);
    const Eigen::VectorXd actor = flatten(agent.actor());
    const Eigen::VectorXd critic = flatten(agent.critic());
    EXPECT_THROW(agent.update_on(batch), std::runtime_error);
    EXPECT_EQ(flatten(agent.actor()), actor);
    EXPECT_EQ(flatten(agent.critic()), critic);
    EXPECT_EQ(agent.updates(), 0);
}

TEST(Agent, GradientClipBoundsTheFirstStep) {
    std::mt19937_64 rng(13);
    const Batch batch = test::random_batch(4, 2, 8, rng);
    DdpgSettings s = small_settings();
    // Adam moves each entry by lr |g| / (|g| + eps); a 1e-9 global norm keeps
    // that below lr / 11, where the unclipped first step moves some entry by ~lr.
    DdpgAgent free(4, 2, s, 14);
    const Eigen::VectorXd before = flatten(free.critic());
    free.update_on(batch);
    EXPECT_GT((flatten(free.critic()) - before).cwiseAbs().maxCoeff(), 0.9 * s.critic_learning_rate);
    s.gradient_clip = 1e-9;
    DdpgAgent clipped(4, 2, s, 14);
    clipped.update_on(batch);
    EXPECT_LT((flatten(clipped.critic()) - before).cwiseAbs().maxCoeff(), s.critic_learning_rate / 11);
}

TEST(Agent, ReadyAfterBatchSizeTransitions) {
    DdpgAgent agent(2, 1, small_settings(), 15);
    for (int i = 0; i < 3; ++i) agent.remember(numbered(i));
    EXPECT_FALSE(agent.ready());
    agent.remember(numbered(3));
    EXPECT_TRUE(agent.ready());
    EXPECT_NO_THROW(agent.update());
}

TEST(Agent, CheckpointRoundTripContinuesIdentically) {
    test::TempDir dir("agent");
    DdpgAgent a(2, 1, small_settings(), 16);
    for (int i = 0; i < 20; ++i) a.remember(numbered(i * 0.1));
    for (int i = 0; i < 5; ++i) a.update();
    a.progress = {7, -12.5};
    a.save(dir / "agent.bin");
    DdpgAgent b = DdpgAgent::load(dir / "agent.bin");
    EXPECT_EQ(b.progress.episodes, 7);
    EXPECT_EQ(b.progress.best_eval_return, -12.5);
    EXPECT_EQ(b.updates(), 5);
    EXPECT_EQ(b.buffer().size(), 20u);
    EXPECT_EQ(b.settings().hidden, small_settings().hidden);
    for (int i = 0; i < 3; ++i) {
        a.update();
        b.update();
    }
    EXPECT_EQ(flatten(a.actor()), flatten(b.actor()));
    EXPECT_EQ(flatten(a.target_critic()), flatten(b.target_critic()));
    const Eigen::VectorXd s = Eigen::Vector2d(0.3, -0.2);
    EXPECT_EQ(a.select_action(s, 0.2).values(), b.select_action(s, 0.2).values());
}

TEST(Agent, CheckpointErrors) {
    test::TempDir dir("agent");
    EXPECT_THROW(DdpgAgent::load(dir / "missing.bin"), std::runtime_error);
    std::ofstream(dir / "junk.bin") << "KSCAGENX";
    EXPECT_THROW(DdpgAgent::load(dir / "junk.bin"), FormatError);
    DdpgAgent a(2, 1, small_settings(), 17);
    a.save(dir / "ok.bin");
    std::string bytes;
    {
        std::ifstream in(dir / "ok.bin", std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    std::ofstream(dir / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    EXPECT_THROW(DdpgAgent::load(dir / "short.bin"), FormatError);
}

}  // namespace
}  // namespace ksc
