#include "stackplay/policy.hpp"

#include "stackplay/plot.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <future>
#include <sstream>

namespace stackplay::policy {

double reward(Outcome outcome, int attempt_idx) {
    if (attempt_idx < 1 || attempt_idx > sim::kMaxAttempts) {
        throw InputError(fmt::format("attempt index {} outside [1, {}]", attempt_idx, sim::kMaxAttempts));
    }
    switch (outcome) {
        case Outcome::miss: return -1.0;
        case Outcome::touch: return 9.0;
        case Outcome::stacked: return 1000.0 - 100.0 * (attempt_idx - 1);
    }
    return 0.0;
}

Outcome outcome_of(const sim::AttemptRecord& r) {
    if (r.relations.supported) return Outcome::stacked;
    return r.relations.touching ? Outcome::touch : Outcome::miss;
}

Vector RlState::as_vector() const {
    Vector v(3);
    v << static_cast<double>(stack_count), cog_xz.x(), cog_xz.y();
    return v;
}

RlState next_state(const sim::AttemptRecord& r) {
    RlState s;
    if (r.relations.supported) {
        s.stack_count = 2;
        // equal masses; the destination sits at the origin
        s.cog_xz = 0.5 * Vec2(r.rel_pos_settled.x(), r.rel_pos_settled.z()) * sim::kDestHalf;
    }
    return s;
}

sim::PlacementAction to_placement(const Vec2& scaled) {
    constexpr double kInside = 1.0 - 1e-9;
    sim::PlacementAction a;
    for (int i = 0; i < 2; ++i) {
        const double c = std::clamp(scaled[i], 0.0, kActionMax);
        a.coord[i] = std::clamp((c - kActionMax / 2) / (kActionMax / 2), -kInside, kInside);
    }
    return a;
}

Vec2 scale_action(const Vector& unit) {
    return Vec2((unit[0] + 1.0) * kActionMax / 2, (unit[1] + 1.0) * kActionMax / 2);
}

void Td3Config::validate() const {
    if (hidden.empty()) throw InputError("td3 needs at least one hidden layer");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InputError("gamma must be in [0, 1)");
    if (!(polyak >= 0.0 && polyak <= 1.0)) throw InputError("polyak must be in [0, 1]");
    if (policy_delay < 1 || batch_size < 1 || window < 1) throw InputError("policy_delay, batch and window must be positive");
    if (replay_size < static_cast<std::size_t>(batch_size)) throw InputError("replay buffer smaller than a batch");
    if (max_steps < 1) throw InputError("max_steps must be positive");
    if (!(imprecise_low <= imprecise_high)) throw InputError("imprecise window is empty");
    if (!(imprecise_fallback > 0.0 && imprecise_fallback <= 1.0)) throw InputError("imprecise fallback must be in (0, 1]");
}

// ------------------------------------------------------------------ agent

namespace {

constexpr int kStateDim = 3;
constexpr int kActionDim = 2;

nn::Network mlp(int in, const std::vector<int>& hidden, int out, nn::Activation head, Rng& rng) {
    std::vector<nn::LayerSpec> specs;
    int prev = in;
    for (int h : hidden) {
        specs.push_back(nn::LayerSpec::dense(prev, h, nn::Activation::relu));
        prev = h;
    }
    specs.push_back(nn::LayerSpec::dense(prev, out, head));
    return nn::Network::build(specs, rng);
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
    Matrix m(top.rows() + bottom.rows(), top.cols());
    m << top, bottom;
    return m;
}

void soft_update(nn::Network& target, const nn::Network& online, double polyak) {
    for (std::size_t i = 0; i < target.size(); ++i) {
        nn::Layer& t = target.layers()[i];
        const nn::Layer& o = online.layers()[i];
        t.weights = polyak * t.weights + (1.0 - polyak) * o.weights;
        t.bias = polyak * t.bias + (1.0 - polyak) * o.bias;
    }
}

double critic_step(nn::Network& q, nn::Adam& opt, const Matrix& input, const Matrix& target) {
    nn::Trace trace;
    const Matrix out = q.forward(input, &trace);
    const Matrix diff = out - target;
    const double n = static_cast<double>(input.cols());
    opt.step(q, q.backward(trace, 2.0 * diff / n));
    return diff.squaredNorm() / n;
}

}  // namespace

Agent Agent::create(const Td3Config& config, Rng& rng) {
    Agent a;
    a.actor = mlp(kStateDim, config.hidden, kActionDim, nn::Activation::tanh, rng);
    a.q1 = mlp(kStateDim + kActionDim, config.hidden, 1, nn::Activation::linear, rng);
    a.q2 = mlp(kStateDim + kActionDim, config.hidden, 1, nn::Activation::linear, rng);
    a.actor_target = a.actor;
    a.q1_target = a.q1;
    a.q2_target = a.q2;
    a.actor_opt = nn::Adam(config.lr, 0.0);
    a.q1_opt = nn::Adam(config.lr, 0.0);
    a.q2_opt = nn::Adam(config.lr, 0.0);
    return a;
}

Vector Agent::act(const RlState& s) const { return actor.forward(s.as_vector()).col(0); }

ReplayBuffer::ReplayBuffer(std::size_t capacity, int state_dim, int action_dim)
    : capacity_(capacity),
      s_(state_dim, static_cast<Eigen::Index>(capacity)),
      a_(action_dim, static_cast<Eigen::Index>(capacity)),
      s2_(state_dim, static_cast<Eigen::Index>(capacity)),
      r_(static_cast<Eigen::Index>(capacity)),
      done_(static_cast<Eigen::Index>(capacity)) {
    if (capacity == 0) throw InputError("replay buffer needs capacity > 0");
}

void ReplayBuffer::add(const Vector& s, const Vector& a, double r, const Vector& s2, bool done) {
    const auto i = static_cast<Eigen::Index>(next_);
    s_.col(i) = s;
    a_.col(i) = a;
    s2_.col(i) = s2;
    r_[i] = r;
    done_[i] = done ? 1.0 : 0.0;
    next_ = (next_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
}

ReplayBuffer::Batch ReplayBuffer::sample(std::size_t n, Rng& rng) const {
    if (size_ == 0) throw PipelineError("cannot sample an empty replay buffer");
    const auto cols = static_cast<Eigen::Index>(n);
    Batch b{Matrix(s_.rows(), cols), Matrix(a_.rows(), cols), Matrix(s2_.rows(), cols), Vector(cols), Vector(cols)};
    for (Eigen::Index k = 0; k < cols; ++k) {
        const auto i = static_cast<Eigen::Index>(rng.index(size_));
        b.s.col(k) = s_.col(i);
        b.a.col(k) = a_.col(i);
        b.s2.col(k) = s2_.col(i);
        b.r[k] = r_[i];
        b.done[k] = done_[i];
    }
    return b;
}

UpdateStats td3_update(Agent& agent, const ReplayBuffer::Batch& batch, const Td3Config& config, long iteration,
                       Rng& rng) {
    const Eigen::Index n = batch.s.cols();
    Matrix a2 = agent.actor_target.forward(batch.s2);
    for (Eigen::Index i = 0; i < a2.size(); ++i) {
        const double eps = std::clamp(rng.normal(0.0, config.target_noise), -config.noise_clip, config.noise_clip);
        a2.data()[i] = std::clamp(a2.data()[i] + eps, -1.0, 1.0);
    }
    const Matrix in2 = stack_rows(batch.s2, a2);
    const Matrix q_next = agent.q1_target.forward(in2).cwiseMin(agent.q2_target.forward(in2));
    Matrix y(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(0, i) = batch.r[i] + config.gamma * (1.0 - batch.done[i]) * q_next(0, i);
    }

    const Matrix in = stack_rows(batch.s, batch.a);
    UpdateStats st;
    st.critic_loss = 0.5 * (critic_step(agent.q1, agent.q1_opt, in, y) + critic_step(agent.q2, agent.q2_opt, in, y));

    if (iteration % config.policy_delay == 0) {
        nn::Trace actor_trace;
        const Matrix a = agent.actor.forward(batch.s, &actor_trace);
        nn::Trace q_trace;
        agent.q1.forward(stack_rows(batch.s, a), &q_trace);
        Matrix d_in;
        agent.q1.backward(q_trace, Matrix::Constant(1, n, -1.0 / static_cast<double>(n)), &d_in);
        agent.actor_opt.step(agent.actor, agent.actor.backward(actor_trace, d_in.bottomRows(kActionDim)));
        soft_update(agent.actor_target, agent.actor, config.polyak);
        soft_update(agent.q1_target, agent.q1, config.polyak);
        soft_update(agent.q2_target, agent.q2, config.polyak);
        st.actor_updated = true;
    }
    return st;
}

// ------------------------------------------------------------ checkpoints

std::string_view to_string(Quality q) { return q == Quality::accurate ? "accurate" : "imprecise"; }

Quality quality_from_string(std::string_view s) {
    if (s == "accurate") return Quality::accurate;
    if (s == "imprecise") return Quality::imprecise;
    throw InputError("unknown policy quality '" + std::string(s) + "' (expected accurate or imprecise)");
}

nlohmann::json PolicyCheckpoint::to_json() const {
    return {{"format", "stackplay.policy"},
            {"version", 1},
            {"quality", std::string(policy::to_string(quality))},
            {"step", step},
            {"success_rate", success_rate},
            {"replay_fill", replay_fill},
            {"fallback", fallback},
            {"actor", nn::to_json(agent.actor)},
            {"q1", nn::to_json(agent.q1)},
            {"q2", nn::to_json(agent.q2)},
            {"actor_target", nn::to_json(agent.actor_target)},
            {"q1_target", nn::to_json(agent.q1_target)},
            {"q2_target", nn::to_json(agent.q2_target)},
            {"actor_opt", agent.actor_opt.to_json()},
            {"q1_opt", agent.q1_opt.to_json()},
            {"q2_opt", agent.q2_opt.to_json()}};
}

PolicyCheckpoint PolicyCheckpoint::from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "stackplay.policy") throw InputError("not a policy checkpoint");
    if (j.value("version", 0) != 1) throw InputError("unsupported policy checkpoint version");
    PolicyCheckpoint c;
    c.quality = quality_from_string(j.at("quality").get<std::string>());
    c.step = j.at("step").get<long>();
    c.success_rate = j.at("success_rate").get<double>();
    c.replay_fill = j.at("replay_fill").get<std::size_t>();
    c.fallback = j.at("fallback").get<bool>();
    c.agent.actor = nn::network_from_json(j.at("actor"));
    c.agent.q1 = nn::network_from_json(j.at("q1"));
    c.agent.q2 = nn::network_from_json(j.at("q2"));
    c.agent.actor_target = nn::network_from_json(j.at("actor_target"));
    c.agent.q1_target = nn::network_from_json(j.at("q1_target"));
    c.agent.q2_target = nn::network_from_json(j.at("q2_target"));
    c.agent.actor_opt = nn::Adam::from_json(j.at("actor_opt"));
    c.agent.q1_opt = nn::Adam::from_json(j.at("q1_opt"));
    c.agent.q2_opt = nn::Adam::from_json(j.at("q2_opt"));
    return c;
}

void save_policy(const std::string& path, const PolicyCheckpoint& checkpoint) {
    plot::write_text_file(path, checkpoint.to_json().dump() + "\n");
}

PolicyCheckpoint load_policy(const std::string& path) {
    const std::string text = plot::read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(fmt::format("{}: {}", path, e.what()));
    }
    return PolicyCheckpoint::from_json(j);
}

// --------------------------------------------------------------- training

namespace {

struct EpisodeStat {
    double reward = 0.0;
    int attempts = 0;
    int successes = 0;
};

struct Run {
    Agent agent;
    long steps = 0;
    std::size_t replay_fill = 0;
    std::vector<CurvePoint> curve;
    std::optional<PolicyCheckpoint> accurate;
    std::optional<PolicyCheckpoint> imprecise;
};

/// Runs training for at most `stop_at` steps. Deterministic in the config, so
/// a shorter rerun retraces the prefix of a longer one exactly.
Run run_training(const Td3Config& config, long stop_at) {
    Rng init = Rng::derive(config.seed, 1);
    Rng explore = Rng::derive(config.seed, 3);
    Rng update_rng = Rng::derive(config.seed, 4);
    Run run;
    run.agent = Agent::create(config, init);
    ReplayBuffer buffer(config.replay_size, kStateDim, kActionDim);
    sim::StackingScene scene(config.theme, Rng::derive(config.seed, 2));

    std::deque<EpisodeStat> window;
    EpisodeStat current;
    RlState state;
    int attempt = 0;
    long updates = 0;
    long episode = 0;
    const double sigma = 2.0 * config.explore_noise;

    auto checkpoint = [&](Quality q, double rate) {
        PolicyCheckpoint c;
        c.quality = q;
        c.agent = run.agent;
        c.step = run.steps;
        c.success_rate = rate;
        c.replay_fill = buffer.size();
        return c;
    };

    for (long step = 0; step < stop_at; ++step) {
        if (attempt == 0) {
            scene.reset();
            state = RlState{};
            current = EpisodeStat{};
            attempt = 1;
        }
        Vector a(kActionDim);
        if (step < config.start_steps) {
            for (int i = 0; i < kActionDim; ++i) a[i] = explore.uniform(-1.0, 1.0);
        } else {
            a = run.agent.act(state);
            for (int i = 0; i < kActionDim; ++i) a[i] = std::clamp(a[i] + explore.normal(0.0, sigma), -1.0, 1.0);
        }
        const sim::AttemptRecord rec = scene.attempt(to_placement(scale_action(a)));
        const Outcome out = outcome_of(rec);
        const double r = reward(out, attempt);
        const RlState next = next_state(rec);
        const bool stacked = out == Outcome::stacked;
        buffer.add(state.as_vector(), a, r * config.reward_scale, next.as_vector(), stacked);
        current.reward += r;
        ++current.attempts;
        current.successes += stacked;
        run.steps = step + 1;

        if (step + 1 >= config.start_steps) {
            const ReplayBuffer::Batch batch = buffer.sample(static_cast<std::size_t>(config.batch_size), update_rng);
            td3_update(run.agent, batch, config, updates++, update_rng);
        }
        state = next;

        if (!stacked && attempt < sim::kMaxAttempts) {
            ++attempt;
            continue;
        }
        attempt = 0;
        window.push_back(current);
        if (window.size() > static_cast<std::size_t>(config.window)) window.pop_front();
        double rewards = 0.0, successes = 0.0, attempts = 0.0;
        for (const EpisodeStat& e : window) {
            rewards += e.reward;
            successes += e.successes;
            attempts += e.attempts;
        }
        const double rate = successes / attempts;
        run.curve.push_back({run.steps, episode++, current.reward, rewards / static_cast<double>(window.size()), rate});
        if (window.size() < static_cast<std::size_t>(config.window) || step < config.start_steps) continue;
        if (!run.imprecise && rate >= config.imprecise_low && rate <= config.imprecise_high) {
            run.imprecise = checkpoint(Quality::imprecise, rate);
        }
        if (!run.accurate && rate >= config.accurate_rate) {
            run.accurate = checkpoint(Quality::accurate, rate);
            if (config.stop_when_accurate) break;
        }
    }
    run.replay_fill = buffer.size();
    return run;
}

}  // namespace

TrainResult td3_train(const Td3Config& config) {
    config.validate();
    Run run = run_training(config, config.max_steps);
    TrainResult result;
    result.steps = run.steps;
    result.curve = std::move(run.curve);
    result.reached_accurate = run.accurate.has_value();
    const double last_rate = result.curve.empty() ? 0.0 : result.curve.back().success_rate;
    if (run.accurate) {
        result.accurate = std::move(*run.accurate);
    } else {
        spdlog::warn("accurate policy not reached within {} steps (rolling success {:.3f})", config.max_steps,
                     last_rate);
        result.accurate.quality = Quality::accurate;
        result.accurate.agent = run.agent;
        result.accurate.step = run.steps;
        result.accurate.success_rate = last_rate;
        result.accurate.replay_fill = run.replay_fill;
    }
    if (run.imprecise) {
        result.imprecise = std::move(*run.imprecise);
    } else {
        const long at = std::max(1L, static_cast<long>(std::floor(config.imprecise_fallback * static_cast<double>(run.steps))));
        spdlog::warn("no rolling success rate in [{}, {}]; imprecise policy taken at step {}", config.imprecise_low,
                     config.imprecise_high, at);
        Run prefix = run_training(config, at);
        result.imprecise.quality = Quality::imprecise;
        result.imprecise.agent = std::move(prefix.agent);
        result.imprecise.step = prefix.steps;
        result.imprecise.success_rate = prefix.curve.empty() ? 0.0 : prefix.curve.back().success_rate;
        result.imprecise.replay_fill = prefix.replay_fill;
        result.imprecise.fallback = true;
    }
    return result;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::string out = "step,episode,episode_reward,mean_reward,success_rate\n";
    for (const CurvePoint& p : curve) {
        out += fmt::format("{},{},{},{:.6f},{:.6f}\n", p.step, p.episode, p.episode_reward, p.mean_reward,
                           p.success_rate);
    }
    return out;
}

std::string curve_svg(const std::vector<CurvePoint>& curve, const std::string& title) {
    plot::Series s{"mean reward (last episodes)", {}, {}};
    for (const CurvePoint& p : curve) {
        s.x.push_back(static_cast<double>(p.step));
        s.y.push_back(p.mean_reward);
    }
    return plot::line_svg({s}, title, "timestep", "mean episode reward");
}

// ------------------------------------------------------------- evaluation

double EvalResult::mean_episode_reward() const {
    if (episode_rewards.empty()) return 0.0;
    double s = 0.0;
    for (double r : episode_rewards) s += r;
    return s / static_cast<double>(episode_rewards.size());
}

double EvalResult::sd_episode_reward() const {
    if (episode_rewards.size() < 2) return 0.0;
    const double m = mean_episode_reward();
    double s = 0.0;
    for (double r : episode_rewards) s += (r - m) * (r - m);
    return std::sqrt(s / static_cast<double>(episode_rewards.size() - 1));
}

EvalResult evaluate_policy(const nn::Network* actor, sim::ClassName theme, const EvalConfig& config) {
    if (config.timesteps < 1) throw InputError("evaluation needs at least one timestep");
    Rng rng = Rng::derive(config.seed, static_cast<std::uint64_t>(theme));
    sim::StackingScene scene(theme, Rng(rng.next()));
    EvalResult res;
    res.theme = theme;
    res.records.reserve(static_cast<std::size_t>(config.timesteps));

    RlState state;
    int attempt = 0;
    std::int64_t episode = -1;
    double cum = 0.0;
    for (long t = 0; t < config.timesteps; ++t) {
        if (attempt == 0) {
            scene.reset();
            state = RlState{};
            attempt = 1;
            cum = 0.0;
            ++episode;
        }
        Vector a(kActionDim);
        if (actor) {
            a = actor->forward(state.as_vector()).col(0);
            for (int i = 0; i < kActionDim; ++i) a[i] = std::clamp(a[i] + rng.normal(0.0, config.action_noise), -1.0, 1.0);
        } else {
            for (int i = 0; i < kActionDim; ++i) a[i] = rng.uniform(-1.0, 1.0);
        }
        sim::AttemptRecord rec = scene.attempt(to_placement(scale_action(a)));
        const Outcome out = outcome_of(rec);
        rec.episode_id = episode;
        rec.attempt_idx = attempt;
        rec.reward = reward(out, attempt);
        cum += rec.reward;
        rec.cum_reward = cum;
        rec.mean_reward = cum / attempt;
        state = next_state(rec);
        res.records.push_back(rec);

        const bool stacked = out == Outcome::stacked;
        if (stacked || attempt == sim::kMaxAttempts) {
            res.episode_rewards.push_back(cum);
            res.successes += stacked;
            attempt = 0;
        } else {
            ++attempt;
        }
    }
    return res;
}

std::vector<EvalResult> evaluate_classes(const nn::Network& actor, const std::vector<sim::ClassName>& classes,
                                         const EvalConfig& config, int jobs) {
    std::vector<EvalResult> out(classes.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < classes.size(); ++i) out[i] = evaluate_policy(&actor, classes[i], config);
        return out;
    }
    std::vector<std::future<EvalResult>> futures;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        futures.push_back(std::async(std::launch::async, [&, i] { return evaluate_policy(&actor, classes[i], config); }));
    }
    for (std::size_t i = 0; i < classes.size(); ++i) out[i] = futures[i].get();
    return out;
}

std::string episodes_csv(const sim::Dataset& records) {
    std::string out = "episode_id";
    for (const std::string& n : sim::feature_names(sim::FeatureLayout::rl19)) out += "," + n;
    out += '\n';
    for (const sim::AttemptRecord& r : records) {
        out += std::to_string(r.episode_id);
        for (double v : sim::featurize(r, sim::FeatureLayout::rl19)) out += fmt::format(",{:.17g}", v);
        out += '\n';
    }
    return out;
}

std::vector<Matrix> read_episodes_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string expected = "episode_id";
    for (const std::string& n : sim::feature_names(sim::FeatureLayout::rl19)) expected += "," + n;
    if (!std::getline(in, line) || line != expected) throw InputError("episodes CSV header does not match rl19");

    std::vector<Matrix> episodes;
    std::vector<std::vector<double>> rows;
    long current = -1;
    auto flush = [&] {
        if (rows.empty()) return;
        Matrix m(static_cast<Eigen::Index>(rows.size()), 19);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (int j = 0; j < 19; ++j) m(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
        }
        episodes.push_back(std::move(m));
        rows.clear();
    };
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> cells;
        std::stringstream ls(line);
        std::string cell;
        try {
            while (std::getline(ls, cell, ',')) cells.push_back(std::stod(cell));
        } catch (const std::exception&) {
            throw InputError(fmt::format("episodes CSV line {}: bad number", line_no));
        }
        if (cells.size() != 20) throw InputError(fmt::format("episodes CSV line {}: expected 20 cells", line_no));
        const auto id = static_cast<long>(cells[0]);
        if (id != current) {
            flush();
            current = id;
        }
        rows.emplace_back(cells.begin() + 1, cells.end());
    }
    flush();
    return episodes;
}

}  // namespace stackplay::policy
