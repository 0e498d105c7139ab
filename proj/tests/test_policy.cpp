#include <gtest/gtest.h>

#include "stackplay/policy.hpp"

#include <cmath>
#include <map>

using namespace stackplay;
using namespace stackplay::policy;

namespace {

const TrainResult& trained() {
    static const TrainResult r = [] {
        Td3Config cfg;
        cfg.seed = 11;
        return td3_train(cfg);
    }();
    return r;
}

sim::AttemptRecord record(bool supported, bool touching) {
    sim::AttemptRecord r;
    r.relations.supported = supported;
    r.relations.touching = touching;
    r.rel_pos_settled = Vec3(0.2, 2.0, -0.4);
    return r;
}

}  // namespace

TEST(Reward, ClosedFormTable) {
    for (int k = 1; k <= 10; ++k) {
        EXPECT_EQ(reward(Outcome::miss, k), -1.0);
        EXPECT_EQ(reward(Outcome::touch, k), 9.0);
        EXPECT_EQ(reward(Outcome::stacked, k), 1100.0 - 100.0 * k) << k;
    }
    EXPECT_EQ(reward(Outcome::stacked, 2), 900.0);
    EXPECT_EQ(reward(Outcome::stacked, 10), 100.0);
    EXPECT_THROW(reward(Outcome::miss, 0), InputError);
    EXPECT_THROW(reward(Outcome::stacked, 11), InputError);
}

TEST(Reward, OutcomeFromRelations) {
    EXPECT_EQ(outcome_of(record(true, true)), Outcome::stacked);
    EXPECT_EQ(outcome_of(record(false, true)), Outcome::touch);
    EXPECT_EQ(outcome_of(record(false, false)), Outcome::miss);
}

TEST(State, StackJoinsOnSupport) {
    const RlState before = next_state(record(false, true));
    EXPECT_EQ(before.stack_count, 1);
    EXPECT_EQ(before.cog_xz, Vec2::Zero());
    const RlState after = next_state(record(true, true));
    EXPECT_EQ(after.stack_count, 2);
    EXPECT_NEAR(after.cog_xz.x(), 0.5 * 0.2 * sim::kDestHalf, 1e-15);
    EXPECT_NEAR(after.cog_xz.y(), 0.5 * -0.4 * sim::kDestHalf, 1e-15);
}

TEST(Action, CentreMapsToDestinationCentre) {
    EXPECT_EQ(to_placement(Vec2(500, 500)).coord, Vec2::Zero());
    Vector unit(2);
    unit << 0.0, 0.0;
    EXPECT_EQ(scale_action(unit), Vec2(500, 500));
    unit << -1.0, 1.0;
    EXPECT_EQ(scale_action(unit), Vec2(0, 1000));
    EXPECT_NEAR(to_placement(Vec2(750, 250)).coord.x(), 0.5, 1e-15);
    EXPECT_NEAR(to_placement(Vec2(750, 250)).coord.y(), -0.5, 1e-15);
}

TEST(Action, AnyInputIsClampedIntoTheOpenSquare) {
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const Vec2 a(rng.uniform(-5000, 6000), rng.uniform(-5000, 6000));
        const Vec2 c = to_placement(a).coord;
        EXPECT_LT(c.cwiseAbs().maxCoeff(), 1.0);
        const Vec2 clamped = a.cwiseMax(0.0).cwiseMin(1000.0);
        EXPECT_NEAR(c.x(), std::clamp(clamped.x() / 500.0 - 1.0, -1.0 + 1e-9, 1.0 - 1e-9), 1e-12);
    }
}

TEST(Replay, RingOverwritesOldest) {
    ReplayBuffer b(3, 1, 1);
    for (int i = 0; i < 5; ++i) {
        b.add(Vector::Constant(1, i), Vector::Constant(1, i), i, Vector::Constant(1, i), i % 2 == 0);
    }
    EXPECT_EQ(b.size(), 3u);
    Rng rng(1);
    const auto batch = b.sample(200, rng);
    EXPECT_GE(batch.r.minCoeff(), 2.0);
    EXPECT_LE(batch.r.maxCoeff(), 4.0);
    for (Eigen::Index i = 0; i < batch.r.size(); ++i) {
        EXPECT_EQ(batch.s(0, i), batch.r[i]);
        EXPECT_EQ(batch.done[i], static_cast<int>(batch.r[i]) % 2 == 0 ? 1.0 : 0.0);
    }
}

TEST(Td3, TwinCriticsShareShapes) {
    Td3Config cfg;
    Rng rng(2);
    const Agent a = Agent::create(cfg, rng);
    ASSERT_EQ(a.q1.size(), a.q2.size());
    for (std::size_t i = 0; i < a.q1.size(); ++i) {
        EXPECT_EQ(a.q1.layers()[i].weights.rows(), a.q2.layers()[i].weights.rows());
        EXPECT_EQ(a.q1.layers()[i].weights.cols(), a.q2.layers()[i].weights.cols());
    }
    EXPECT_FALSE(a.q1 == a.q2);
    EXPECT_TRUE(a.actor == a.actor_target);
    EXPECT_EQ(a.q1.input_size(), 5);
    EXPECT_EQ(a.actor.output_size(), 2);
}

TEST(Td3, TargetsFollowByPolyakAverage) {
    Td3Config cfg;
    Rng rng(2);
    Agent a = Agent::create(cfg, rng);
    ReplayBuffer buf(64, 3, 2);
    for (int i = 0; i < 64; ++i) {
        Vector act(2);
        act << rng.uniform(-1, 1), rng.uniform(-1, 1);
        buf.add(RlState{}.as_vector(), act, rng.uniform(), RlState{}.as_vector(), false);
    }
    const auto batch = buf.sample(32, rng);
    const Agent before = a;
    EXPECT_FALSE(td3_update(a, batch, cfg, 1, rng).actor_updated);
    EXPECT_TRUE(a.actor == before.actor);
    EXPECT_TRUE(a.q1_target == before.q1_target);
    EXPECT_FALSE(a.q1 == before.q1);

    const Agent mid = a;
    EXPECT_TRUE(td3_update(a, batch, cfg, 2, rng).actor_updated);
    for (std::size_t i = 0; i < a.q1.size(); ++i) {
        const Matrix expect = cfg.polyak * mid.q1_target.layers()[i].weights + (1 - cfg.polyak) * a.q1.layers()[i].weights;
        EXPECT_LT((a.q1_target.layers()[i].weights - expect).cwiseAbs().maxCoeff(), 1e-15);
    }
    EXPECT_FALSE(a.actor == mid.actor);
}

TEST(Td3, ConvergesOnQuadraticBandit) {
    Td3Config cfg;
    cfg.gamma = 0.0;
    Rng init(1), noise(2), upd(3);
    Agent a = Agent::create(cfg, init);
    a.actor.layers().back().bias << 1.2, 1.2;
    a.actor_target = a.actor;
    ReplayBuffer buf(cfg.replay_size, 3, 2);
    const Vector best = (Vector(2) << 0.3, -0.2).finished();
    for (long step = 0; step < 2500; ++step) {
        Vector act = a.act(RlState{});
        for (int i = 0; i < 2; ++i) act[i] = std::clamp(act[i] + noise.normal(0.0, 0.2), -1.0, 1.0);
        buf.add(RlState{}.as_vector(), act, -(act - best).squaredNorm(), RlState{}.as_vector(), false);
        if (step >= 128) td3_update(a, buf.sample(128, upd), cfg, step, upd);
    }
    EXPECT_LT((a.act(RlState{}) - best).norm(), 0.15);
}

TEST(Train, ReachesAccurateCheckpoint) {
    const TrainResult& r = trained();
    EXPECT_TRUE(r.reached_accurate);
    EXPECT_GE(r.accurate.success_rate, 0.9);
    EXPECT_EQ(r.accurate.quality, Quality::accurate);
    EXPECT_EQ(r.imprecise.quality, Quality::imprecise);
    EXPECT_LE(r.imprecise.step, r.accurate.step);
    if (!r.imprecise.fallback) {
        EXPECT_GE(r.imprecise.success_rate, 0.5);
        EXPECT_LE(r.imprecise.success_rate, 0.7);
    }
    ASSERT_FALSE(r.curve.empty());
    EXPECT_GT(r.curve.back().mean_reward, 500.0);
    // trained reward exceeds the random warm-up level
    double warmup = 0.0;
    for (const CurvePoint& p : r.curve) {
        if (p.step <= Td3Config{}.start_steps) warmup = p.mean_reward;
    }
    EXPECT_GT(r.curve.back().mean_reward, warmup);
}

TEST(Train, RecomputedRollingStatistics) {
    const auto& curve = trained().curve;
    for (std::size_t i = 0; i < curve.size(); i += 37) {
        const std::size_t lo = i >= 99 ? i - 99 : 0;
        double s = 0.0;
        for (std::size_t k = lo; k <= i; ++k) s += curve[k].episode_reward;
        EXPECT_NEAR(curve[i].mean_reward, s / static_cast<double>(i - lo + 1), 1e-9);
    }
}

TEST(Train, Deterministic) {
    Td3Config cfg;
    cfg.seed = 11;
    const TrainResult again = td3_train(cfg);
    EXPECT_EQ(again.steps, trained().steps);
    EXPECT_EQ(again.accurate.to_json().dump(), trained().accurate.to_json().dump());
    EXPECT_EQ(curve_csv(again.curve), curve_csv(trained().curve));
}

TEST(Train, FallbackRetracesShorterRun) {
    Td3Config cfg;
    cfg.seed = 4;
    cfg.imprecise_low = 2.0;  // unreachable
    cfg.imprecise_high = 3.0;
    const TrainResult r = td3_train(cfg);
    EXPECT_TRUE(r.imprecise.fallback);
    EXPECT_EQ(r.imprecise.step, static_cast<long>(std::floor(0.25 * static_cast<double>(r.steps))));

    Td3Config shorter = cfg;
    shorter.max_steps = r.imprecise.step;
    shorter.stop_when_accurate = false;
    const TrainResult prefix = td3_train(shorter);
    EXPECT_TRUE(prefix.accurate.agent.actor == r.imprecise.agent.actor);
}

TEST(Train, InvalidConfigRejected) {
    Td3Config cfg;
    cfg.gamma = 1.0;
    EXPECT_THROW(td3_train(cfg), InputError);
    cfg = Td3Config{};
    cfg.replay_size = 10;
    EXPECT_THROW(td3_train(cfg), InputError);
}

TEST(Checkpoint, RoundTripIsExact) {
    const PolicyCheckpoint& c = trained().accurate;
    const PolicyCheckpoint back = PolicyCheckpoint::from_json(nlohmann::json::parse(c.to_json().dump()));
    EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
    EXPECT_TRUE(back.agent.actor == c.agent.actor);
    EXPECT_TRUE(back.agent.q2_target == c.agent.q2_target);
    EXPECT_TRUE(back.agent.q1_opt == c.agent.q1_opt);
    EXPECT_THROW(PolicyCheckpoint::from_json(nlohmann::json{{"format", "other"}}), InputError);
    EXPECT_THROW(quality_from_string("sloppy"), InputError);
}

TEST(Eval, EpisodeBookkeeping) {
    EvalConfig ec;
    ec.seed = 5;
    const EvalResult r = evaluate_policy(&trained().accurate.agent.actor, sim::ClassName::cylinder, ec);
    ASSERT_EQ(r.records.size(), 1000u);
    double cum = 0.0;
    std::size_t successes = 0;
    for (std::size_t i = 0; i < r.records.size(); ++i) {
        const sim::AttemptRecord& rec = r.records[i];
        ASSERT_GE(rec.attempt_idx, 1);
        ASSERT_LE(rec.attempt_idx, 10);
        if (rec.attempt_idx == 1) cum = 0.0;
        cum += rec.reward;
        EXPECT_DOUBLE_EQ(rec.cum_reward, cum);
        EXPECT_DOUBLE_EQ(rec.mean_reward, cum / rec.attempt_idx);
        EXPECT_EQ(rec.stack_height, rec.relations.supported ? 2 : 1);
        EXPECT_LT(rec.action.cwiseAbs().maxCoeff(), 1.0);
        if (rec.relations.supported) {
            ++successes;
            // success ends the episode
            if (i + 1 < r.records.size()) EXPECT_EQ(r.records[i + 1].attempt_idx, 1);
        }
    }
    EXPECT_EQ(successes, r.successes);
}

TEST(Eval, DeterministicGivenSeed) {
    EvalConfig ec;
    ec.seed = 8;
    const auto a = evaluate_policy(&trained().accurate.agent.actor, sim::ClassName::capsule, ec);
    const auto b = evaluate_policy(&trained().accurate.agent.actor, sim::ClassName::capsule, ec);
    EXPECT_TRUE(a.records == b.records);
    const auto par = evaluate_classes(trained().accurate.agent.actor, kEvalClasses, ec, 5);
    const auto ser = evaluate_classes(trained().accurate.agent.actor, kEvalClasses, ec, 1);
    for (std::size_t i = 0; i < par.size(); ++i) EXPECT_TRUE(par[i].records == ser[i].records);
}

TEST(Eval, ClassOrderingAndSphere) {
    EvalConfig ec;
    ec.seed = 21;
    const auto res = evaluate_classes(trained().accurate.agent.actor, kEvalClasses, ec);
    std::map<sim::ClassName, const EvalResult*> by;
    for (const auto& r : res) by[r.theme] = &r;
    EXPECT_EQ(by[sim::ClassName::sphere]->successes, 0u);
    EXPECT_GT(by[sim::ClassName::cube]->mean_episode_reward(), by[sim::ClassName::cylinder]->mean_episode_reward());
    EXPECT_GT(by[sim::ClassName::cylinder]->mean_episode_reward(), by[sim::ClassName::capsule]->mean_episode_reward());
    EXPECT_GT(by[sim::ClassName::capsule]->mean_episode_reward(), by[sim::ClassName::sphere]->mean_episode_reward());

    const EvalResult& cube = *by[sim::ClassName::cube];
    const EvalResult& small = *by[sim::ClassName::small_cube];
    const double sd = std::max({cube.sd_episode_reward(), small.sd_episode_reward(), 1.0});
    EXPECT_LE(std::abs(cube.mean_episode_reward() - small.mean_episode_reward()), sd);

    const EvalResult random = evaluate_policy(nullptr, sim::ClassName::cube, ec);
    EXPECT_LT(random.mean_episode_reward(), cube.mean_episode_reward());
}

TEST(Export, EpisodesCsvRoundTrip) {
    EvalConfig ec;
    ec.timesteps = 60;
    const EvalResult r = evaluate_policy(&trained().accurate.agent.actor, sim::ClassName::capsule, ec);
    const std::vector<Matrix> eps = read_episodes_csv(episodes_csv(r.records));
    ASSERT_EQ(eps.size(), static_cast<std::size_t>(r.records.back().episode_id + 1));
    std::size_t k = 0;
    for (const Matrix& e : eps) {
        EXPECT_EQ(e.cols(), 19);
        for (Eigen::Index row = 0; row < e.rows(); ++row, ++k) {
            const std::vector<double> f = sim::featurize(r.records[k], sim::FeatureLayout::rl19);
            for (int c = 0; c < 19; ++c) EXPECT_EQ(e(row, c), f[static_cast<std::size_t>(c)]);
        }
    }
    EXPECT_EQ(k, r.records.size());
    EXPECT_THROW(read_episodes_csv("a,b\n1,2\n"), InputError);
}

TEST(Export, CurveCsvHeader) {
    const std::string csv = curve_csv(trained().curve);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,episode,episode_reward,mean_reward,success_rate");
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), trained().curve.size() + 1);
}
