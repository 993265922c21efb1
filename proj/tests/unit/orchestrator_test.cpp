#include "ksc/esn_training.hpp"
#include "ksc/orchestrator.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>

namespace ksc {
namespace {

EpisodeRecord constant_record(int steps, double r) {
    EpisodeRecord rec;
    for (int k = 0; k < steps; ++k) {
        StepRecord s;
        s.k = k;
        s.r_true = r;
        rec.steps.push_back(s);
    }
    return rec;
}

TEST(EpisodeReturn, Examples) {
    EXPECT_EQ(episode_return(constant_record(100, 0.0), 0, 100), 0.0);
    EXPECT_DOUBLE_EQ(episode_return(constant_record(1000, -1.0), 500, 1000), -500.0);
    EXPECT_DOUBLE_EQ(episode_return(constant_record(10, -1.0), 2, 5), -3.0);
}

TEST(ReturnStatistics, SingleEpisodeHasNoSpread) {
    const ReturnStatistics s = return_statistics({-3.5});
    EXPECT_EQ(s.mean, -3.5);
    EXPECT_EQ(s.std_dev, 0.0);
    EXPECT_EQ(s.min, -3.5);
    EXPECT_EQ(s.max, -3.5);
    const ReturnStatistics t = return_statistics({1.0, 3.0});
    EXPECT_DOUBLE_EQ(t.mean, 2.0);
    EXPECT_DOUBLE_EQ(t.std_dev, std::sqrt(2.0));
    EXPECT_THROW(return_statistics({}), std::invalid_argument);
}

TEST(Experiment, StateDimensionPerMode) {
    EXPECT_EQ(Experiment(test::tiny_config(Mode::model_free)).agent_state_dim(), 64);
    ExperimentConfig c = test::tiny_config(Mode::damirl_fourier);
    c.control.rl_grid = 32;
    EXPECT_EQ(Experiment(c).agent_state_dim(), 32);
}

TEST(Experiment, RandomStageContract) {
    const ExperimentConfig c = test::tiny_config(Mode::damirl_fourier);
    Experiment exp(c);
    DdpgAgent agent = exp.make_agent();
    const Eigen::VectorXd actor = flatten(agent.actor());
    const EpisodeRecord rec = exp.run_episode(agent, Stage::random, 0);
    ASSERT_FALSE(rec.aborted) << rec.abort_reason;
    ASSERT_EQ(rec.steps.size(), 60u);
    EXPECT_EQ(rec.updates, 0);
    EXPECT_EQ(flatten(agent.actor()), actor);
    EXPECT_EQ(agent.buffer().size(), 40u);
    for (const StepRecord& s : rec.steps) {
        if (s.k < 20) {
            EXPECT_EQ(s.action.norm(), 0.0);
            EXPECT_TRUE(std::isnan(s.error_prior));
        } else {
            EXPECT_LE(s.action.cwiseAbs().maxCoeff(), 1.0);
            EXPECT_GT(s.action.norm(), 0.0);
        }
        EXPECT_TRUE(std::isnan(s.loss_q));
        EXPECT_TRUE(std::isfinite(s.r_true));
    }
    // Analyses every obs_interval steps from k_start on.
    for (int k : {20, 30, 40, 50}) EXPECT_TRUE(std::isfinite(rec.steps[k].error_prior)) << k;
    EXPECT_TRUE(std::isnan(rec.steps[25].error_prior));
    EXPECT_DOUBLE_EQ(rec.total_return, episode_return(rec, 20, 60));
}

TEST(Experiment, EpisodesAreDeterministic) {
    const ExperimentConfig c = test::tiny_config(Mode::damirl_fourier);
    Experiment exp(c);
    DdpgAgent a1 = exp.make_agent();
    DdpgAgent a2 = exp.make_agent();
    const EpisodeRecord r1 = exp.run_episode(a1, Stage::random, 3);
    const EpisodeRecord r2 = exp.run_episode(a2, Stage::random, 3);
    EXPECT_EQ(r1.total_return, r2.total_return);
    const EpisodeRecord r3 = exp.run_episode(a2, Stage::random, 4);
    EXPECT_NE(r1.total_return, r3.total_return);
}

TEST(Experiment, EvalUsesTargetActorWithoutNoise) {
    const ExperimentConfig c = test::tiny_config(Mode::damirl_fourier);
    Experiment exp(c);
    DdpgAgent agent = exp.make_agent();
    const EpisodeRecord first = exp.run_episode(agent, Stage::eval, 0);
    EXPECT_EQ(agent.buffer().size(), 0u);
    EXPECT_EQ(first.updates, 0);

    // Changing the learning actor leaves evaluation untouched.
    agent.actor().biases.back().setConstant(0.7);
    EXPECT_EQ(exp.run_episode(agent, Stage::eval, 0).total_return, first.total_return);
    // Changing the target actor does not.
    agent.target_actor().biases.back().setConstant(0.7);
    const EpisodeRecord changed = exp.run_episode(agent, Stage::eval, 0);
    EXPECT_NE(changed.total_return, first.total_return);
    for (const StepRecord& s : changed.steps) {
        if (s.k >= 20) EXPECT_GT(s.action.minCoeff(), 0.5);
    }
}

TEST(Experiment, LearnStageUpdatesOnceBufferIsReady) {
    const ExperimentConfig c = test::tiny_config(Mode::damirl_fourier);
    Experiment exp(c);
    DdpgAgent agent = exp.make_agent();
    const EpisodeRecord rec = exp.run_episode(agent, Stage::learn, 1);
    // Batch size 8: the first update happens at the eighth stored transition.
    EXPECT_EQ(rec.updates, 40 - 8 + 1);
    EXPECT_TRUE(std::isnan(rec.steps[26].loss_q));
    EXPECT_TRUE(std::isfinite(rec.steps[27].loss_q));
}

TEST(Experiment, ModelFreeObservesEveryStep) {
    const ExperimentConfig c = test::tiny_config(Mode::model_free);
    Experiment exp(c);
    DdpgAgent agent = exp.make_agent();
    const EpisodeRecord rec = exp.run_episode(agent, Stage::random, 0);
    ASSERT_FALSE(rec.aborted);
    for (const StepRecord& s : rec.steps) {
        EXPECT_TRUE(std::isnan(s.error_prior));
        EXPECT_EQ(s.r_model, s.r_true);
    }
    // With sigma_o = 0 and 64 sensors the stored state is the true field.
    const Transition t = agent.buffer().at(0);
    EXPECT_EQ(t.state.size(), 64);
    EXPECT_NEAR(-t.next_state.norm() / 8.0 - 0.1 * t.action.norm(), t.reward, 1e-12);
}

TEST(Experiment, RecordsFieldsOnRequest) {
    const ExperimentConfig c = test::tiny_config(Mode::damirl_fourier);
    Experiment exp(c);
    DdpgAgent agent = exp.make_agent();
    const EpisodeRecord rec = exp.run_episode(agent, Stage::random, 0, {.record_fields = true});
    ASSERT_EQ(rec.true_fields.rows(), 64);
    ASSERT_EQ(rec.true_fields.cols(), 60);
    EXPECT_TRUE(rec.true_fields.allFinite());
    EXPECT_TRUE(rec.estimated_fields.allFinite());
    for (int k = 0; k < 60; ++k) {
        EXPECT_NEAR(rec.true_fields.col(k).norm() / 8.0, rec.steps[k].true_norm, 1e-10);
    }
}

TEST(Experiment, EsnModeRunsWithInjectedMachine) {
    ExperimentConfig c = test::tiny_config(Mode::damirl_esn);
    DatasetSettings ds = c.dataset();
    ds.episodes = 2;
    ds.steps = 300;
    ds.spinup_steps = 200;
    const Dataset data = generate_dataset(ds);
    EsnParams p;
    p.reservoir_size = 80;
    auto machine = std::make_shared<const EsnMachine>(train_esn(p, data, {0, 1}));
    c.model.esn_washout = 20;
    Experiment exp(c, machine);
    DdpgAgent agent = exp.make_agent();
    const EpisodeRecord rec = exp.run_episode(agent, Stage::random, 0);
    ASSERT_FALSE(rec.aborted) << rec.abort_reason;
    EXPECT_TRUE(std::isfinite(rec.total_return));
    EXPECT_TRUE(std::isfinite(rec.steps[20].error_posterior));
    EXPECT_THROW(Experiment(c, nullptr), std::invalid_argument);
}

TEST(Train, ZeroTrainingEpisodesLeavesAgentAfterRandomStage) {
    ExperimentConfig c = test::tiny_config(Mode::damirl_fourier);
    c.episodes.training = 0;
    Experiment exp(c);
    DdpgAgent agent = exp.make_agent();
    const Eigen::VectorXd actor = flatten(agent.actor());
    const TrainingLog log = train(exp, agent, {});
    EXPECT_EQ(log.episodes.size(), 1u);
    EXPECT_TRUE(log.eval_returns.empty());
    EXPECT_EQ(flatten(agent.actor()), actor);
    EXPECT_EQ(agent.progress.episodes, 1);
}

TEST(Train, DeterministicLogs) {
    const ExperimentConfig c = test::tiny_config(Mode::damirl_fourier);
    Experiment exp(c);
    DdpgAgent a = exp.make_agent();
    DdpgAgent b = exp.make_agent();
    const TrainingLog la = train(exp, a, {});
    const TrainingLog lb = train(exp, b, {});
    ASSERT_EQ(la.episodes.size(), lb.episodes.size());
    EXPECT_EQ(la.learning_returns, lb.learning_returns);
    EXPECT_EQ(la.eval_returns, lb.eval_returns);
    EXPECT_EQ(flatten(a.actor()), flatten(b.actor()));
    // 1 random + 2 learning episodes, an evaluation after each learning one.
    EXPECT_EQ(la.episodes.size(), 5u);
    EXPECT_EQ(la.eval_returns.size(), 2u);
}

TEST(Train, BestCheckpointAndResume) {
    test::TempDir dir("train");
    const ExperimentConfig full = test::tiny_config(Mode::damirl_fourier);
    Experiment exp_full(full);
    DdpgAgent reference = exp_full.make_agent();
    std::optional<DdpgAgent> best;
    const TrainingLog log = train(exp_full, reference, {.best_checkpoint = dir / "best.bin"}, &best);
    ASSERT_TRUE(best.has_value());
    ASSERT_TRUE(log.best_eval_episode.has_value());
    EXPECT_EQ(log.best_eval_return, *std::max_element(log.eval_returns.begin(), log.eval_returns.end()));
    EXPECT_EQ(DdpgAgent::load(dir / "best.bin").progress.best_eval_return, log.best_eval_return);

    ExperimentConfig half = full;
    half.episodes.training = 1;
    Experiment exp_half(half);
    DdpgAgent first = exp_half.make_agent();
    train(exp_half, first, {.latest_checkpoint = dir / "latest.bin"});
    DdpgAgent resumed = DdpgAgent::load(dir / "latest.bin");
    EXPECT_EQ(resumed.progress.episodes, 2);
    const TrainingLog rest = train(exp_full, resumed, {});
    EXPECT_EQ(rest.learning_returns.size(), 1u);
    EXPECT_EQ(rest.learning_returns.front(), log.learning_returns.back());
    EXPECT_EQ(flatten(resumed.actor()), flatten(reference.actor()));
}

TEST(Evaluate, SeedsApartFromTraining) {
    const ExperimentConfig c = test::tiny_config(Mode::damirl_fourier);
    Experiment exp(c);
    DdpgAgent agent = exp.make_agent();
    std::vector<EpisodeRecord> records;
    const ReturnStatistics s = evaluate(exp, agent, 2, &records, true);
    ASSERT_EQ(records.size(), 2u);
    EXPECT_EQ(records[0].episode, 1'000'000);
    EXPECT_EQ(records[0].true_fields.cols(), 60);
    EXPECT_NE(s.returns[0], s.returns[1]);
    EXPECT_THROW(evaluate(exp, agent, 0), std::invalid_argument);
}

}  // namespace
}  // namespace ksc
