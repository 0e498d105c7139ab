#pragma once

#include "stackplay/nn.hpp"
#include "stackplay/simworld.hpp"

#include <string>
#include <vector>

namespace stackplay::policy {

using nn::Matrix;
using nn::Vector;

enum class Outcome { miss, touch, stacked };

/// miss -> -1, touch -> 9, stacked on attempt k -> 1000 - 100 (k - 1).
/// Throws InputError for attempt_idx outside [1, 10].
double reward(Outcome outcome, int attempt_idx);

Outcome outcome_of(const sim::AttemptRecord& record);

struct RlState {
    int stack_count = 1;
    /// Stack centre of gravity minus destination centre, world units.
    Vec2 cog_xz = Vec2::Zero();

    Vector as_vector() const;
};

/// State after an attempt: the theme joins the stack when it is supported.
RlState next_state(const sim::AttemptRecord& record);

inline constexpr double kActionMax = 1000.0;

/// Clamps to [0, 1000]^2 and maps affinely onto the placement square, with
/// (500, 500) at the destination centre. Edges are pulled just inside the
/// open interval the simulator accepts.
sim::PlacementAction to_placement(const Vec2& scaled);

/// [-1, 1]^2 (actor output) to [0, 1000]^2.
Vec2 scale_action(const Vector& unit);

struct Td3Config {
    std::vector<int> hidden = {64, 64};
    double gamma = 0.99;
    double polyak = 0.995;
    int policy_delay = 2;
    double target_noise = 0.2;
    double noise_clip = 0.5;
    /// Gaussian exploration, as a fraction of the action range.
    double explore_noise = 0.1;
    std::size_t replay_size = 50000;
    int batch_size = 128;
    double lr = 1e-3;
    /// Rewards are multiplied by this before entering the critics.
    double reward_scale = 1e-3;
    long start_steps = 1000;
    long max_steps = 200000;
    int window = 100;
    double accurate_rate = 0.9;
    double imprecise_low = 0.5;
    double imprecise_high = 0.7;
    double imprecise_fallback = 0.25;
    /// Stop as soon as the accurate checkpoint is taken.
    bool stop_when_accurate = true;
    sim::ClassName theme = sim::ClassName::cube;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Agent {
    nn::Network actor, q1, q2;
    nn::Network actor_target, q1_target, q2_target;
    nn::Adam actor_opt, q1_opt, q2_opt;

    static Agent create(const Td3Config& config, Rng& rng);

    /// Deterministic actor output in [-1, 1]^2 for one state.
    Vector act(const RlState& s) const;
};

/// Fixed-capacity ring buffer of transitions (columns are samples).
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, int state_dim, int action_dim);

    void add(const Vector& s, const Vector& a, double r, const Vector& s2, bool done);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }

    struct Batch {
        Matrix s, a, s2;
        Vector r, done;
    };
    Batch sample(std::size_t n, Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t size_ = 0;
    std::size_t next_ = 0;
    Matrix s_, a_, s2_;
    Vector r_, done_;
};

struct UpdateStats {
    double critic_loss = 0.0;
    bool actor_updated = false;
};

/// One TD3 update on a sampled batch; the actor and targets move every
/// `policy_delay` calls (counted by `iteration`).
UpdateStats td3_update(Agent& agent, const ReplayBuffer::Batch& batch, const Td3Config& config, long iteration,
                       Rng& rng);

enum class Quality { accurate, imprecise };
std::string_view to_string(Quality q);
Quality quality_from_string(std::string_view s);

struct PolicyCheckpoint {
    Quality quality = Quality::accurate;
    Agent agent;
    long step = 0;
    double success_rate = 0.0;
    std::size_t replay_fill = 0;
    /// True when the imprecise checkpoint came from the step-fraction fallback.
    bool fallback = false;

    nlohmann::json to_json() const;
    static PolicyCheckpoint from_json(const nlohmann::json& j);
};

void save_policy(const std::string& path, const PolicyCheckpoint& checkpoint);
PolicyCheckpoint load_policy(const std::string& path);

struct CurvePoint {
    long step = 0;
    long episode = 0;
    double episode_reward = 0.0;
    /// Mean episode reward over the last `window` episodes.
    double mean_reward = 0.0;
    /// Successful attempts / attempts over the last `window` episodes.
    double success_rate = 0.0;
};

struct TrainResult {
    PolicyCheckpoint accurate;
    PolicyCheckpoint imprecise;
    bool reached_accurate = false;
    long steps = 0;
    std::vector<CurvePoint> curve;
};

/// Trains on the configured theme-on-cube scene until the accurate
/// checkpoint is reached or max_steps run out. Warns when no imprecise window
/// is seen and takes the agent after imprecise_fallback * steps instead
/// (training is deterministic, so a shorter rerun reproduces it).
TrainResult td3_train(const Td3Config& config);

std::string curve_csv(const std::vector<CurvePoint>& curve);
std::string curve_svg(const std::vector<CurvePoint>& curve, const std::string& title);

struct EvalConfig {
    long timesteps = 1000;
    /// Gaussian noise on the actor output, in actor units ([-1, 1]).
    double action_noise = 0.1;
    std::uint64_t seed = 0;
};

struct EvalResult {
    sim::ClassName theme = sim::ClassName::cube;
    /// Every attempt, with reward, cum_reward, mean_reward and stack_height set.
    sim::Dataset records;
    std::vector<double> episode_rewards;
    std::size_t successes = 0;

    std::size_t episodes() const { return episode_rewards.size(); }
    double mean_episode_reward() const;
    double sd_episode_reward() const;
};

/// Runs the frozen actor for `timesteps` attempts on `theme`, stacking it as
/// if it were a cube. A null actor acts uniformly at random.
EvalResult evaluate_policy(const nn::Network* actor, sim::ClassName theme, const EvalConfig& config);

/// Classes used for policy evaluation.
inline const std::vector<sim::ClassName> kEvalClasses = {sim::ClassName::cube, sim::ClassName::sphere,
                                                         sim::ClassName::cylinder, sim::ClassName::capsule,
                                                         sim::ClassName::small_cube};

/// One evaluation per class on its own derived stream, run in parallel.
std::vector<EvalResult> evaluate_classes(const nn::Network& actor, const std::vector<sim::ClassName>& classes,
                                         const EvalConfig& config, int jobs = 1);

/// episode_id, then the rl19 columns.
std::string episodes_csv(const sim::Dataset& records);

/// Episodes from an episodes CSV: one matrix per episode, rows = attempts,
/// columns = rl19 features.
std::vector<Matrix> read_episodes_csv(const std::string& text);

}  // namespace stackplay::policy
