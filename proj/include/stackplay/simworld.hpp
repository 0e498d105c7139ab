#pragma once

#include "stackplay/common.hpp"
#include "stackplay/geometry.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stackplay::sim {

enum class ClassName { cube, sphere, cylinder, capsule, egg, rect_prism, cone, pyramid, small_cube };

inline constexpr std::array<ClassName, 9> kAllClasses = {
    ClassName::cube,       ClassName::sphere, ClassName::cylinder,
    ClassName::capsule,    ClassName::egg,    ClassName::rect_prism,
    ClassName::cone,       ClassName::pyramid, ClassName::small_cube};

std::string_view to_string(ClassName c);
ClassName class_from_string(std::string_view name);

enum class Contact { flat, round };
enum class SymAxis { X, Y, none };

std::string_view to_string(Contact c);

/// One settled pose category. The body rotation for a sample of this category
/// is Ry(yaw) * Rx(up_offset) * Ry(spin) with spin drawn from `spins`
/// (or uniformly from [0, 2pi) when `spins` is empty).
struct RestOrientation {
    std::string label;
    double up_offset = 0.0;
    Contact contact = Contact::flat;
    std::vector<double> spins;
    /// CoM height above the support plane; only used for round contacts, flat
    /// contacts derive height from the body vertices.
    double round_height = 0.0;
    /// Probability of rolling off under jitter (round contacts only).
    double fall_probability = 0.0;
    /// Mean of the exponential roll-out distance of a fallen body that comes
    /// to rest in this pose.
    double roll_mean = 0.1;
};

struct ObjectClass {
    ClassName name;
    Vec3 half_extents;
    SymAxis sym_axis = SymAxis::none;
    /// Sphere and egg rest in a continuum of orientations.
    bool continuous_rest = false;
    std::vector<RestOrientation> rest_orientations;
    /// Starting distribution over rest_orientations at scene re-placement.
    std::vector<double> start_weights;
    /// transitions[i][j]: probability a fallen object in orientation i comes
    /// to rest in orientation j.
    std::vector<std::vector<double>> transitions;
    /// Convex body approximation, CoM at the origin.
    std::vector<Vec3> vertices;
};

const ObjectClass& object_class(ClassName name);

struct Pose {
    Vec3 position = Vec3::Zero();
    Vec3 rotation = Vec3::Zero();
    double up_offset = 0.0;
};

struct PlacementAction {
    Vec2 coord = Vec2::Zero();
};

struct Relations {
    bool supported = false;
    bool touching = false;

    bool operator==(const Relations&) const = default;
};

struct AttemptRecord {
    std::int64_t episode_id = 0;
    int attempt_idx = 0;
    ClassName theme_class = ClassName::cube;
    Vec3 start_rotation = Vec3::Zero();
    double start_up_offset = 0.0;
    Vec2 action = Vec2::Zero();
    Vec3 post_rotation = Vec3::Zero();
    double post_up_offset = 0.0;
    Vec3 jitter = Vec3::Zero();
    Vec3 rel_pos_before = Vec3::Zero();
    Vec3 rel_pos_after = Vec3::Zero();
    Vec3 rel_pos_settled = Vec3::Zero();
    Relations relations;
    double reward = 0.0;
    double cum_reward = 0.0;
    double mean_reward = 0.0;
    int stack_height = 1;

    bool operator==(const AttemptRecord&) const = default;
};

enum class EpisodeOutcome { stacked, exhausted };

struct Episode {
    std::vector<AttemptRecord> records;
    EpisodeOutcome outcome = EpisodeOutcome::exhausted;
};

/// World-unit constants of the scene.
inline constexpr double kDestHalf = 0.5;
/// Stability margin, in destination half-extent units.
inline constexpr double kMarginHalfUnits = 0.05;
inline constexpr int kMaxAttempts = 10;

/// Index of the rest orientation matching `rotation` within 1e-6 rad, or
/// nullopt when the rotation is not a rest pose for the class. Continuous
/// classes return 0.
std::optional<std::size_t> match_rest(const ObjectClass& cls, const Vec3& rotation);

bool is_rest_pose(const ObjectClass& cls, const Vec3& rotation);

/// Draws a rotation (Euler XYZ) for rest orientation `index` with random yaw.
Vec3 sample_rest_rotation(const ObjectClass& cls, std::size_t index, Rng& rng);

/// Unit post-release jitter direction for a body at `pose`.
Vec3 apply_jitter(const ObjectClass& cls, const Pose& pose, Rng& rng);

/// World-space symmetry axis of the body, or nullopt for sym_axis = none.
std::optional<Vec3> world_sym_axis(const ObjectClass& cls, const Vec3& rotation);

/// Places the theme at `action` on the destination, applies jitter, and
/// settles. Throws InputError for a non-rest pose or an action outside
/// (-1, 1)^2.
AttemptRecord place_and_settle(const ObjectClass& cls, const Pose& pose,
                               const PlacementAction& action, Rng& rng);

Contact label_contact(const ObjectClass& cls, const Vec3& post_rotation);

/// Stacking scene with one theme object and a destination cube. Holds the
/// theme's pose across attempts within an episode.
class StackingScene {
public:
    StackingScene(ClassName theme, Rng rng);

    /// Re-places destination and theme randomly; starts a new episode.
    void reset();

    const Pose& theme_pose() const { return pose_; }
    const ObjectClass& theme() const { return *cls_; }
    Rng& rng() { return rng_; }

    /// Runs one attempt; the theme keeps its settled pose for the next one.
    AttemptRecord attempt(const PlacementAction& action);

private:
    const ObjectClass* cls_;
    Rng rng_;
    Pose pose_;
    Vec2 destination_xz_ = Vec2::Zero();
};

/// Free-play episode: kMaxAttempts uniformly random placements, no stop on
/// success.
Episode sample_episode(ClassName cls, Rng& rng);

using Dataset = std::vector<AttemptRecord>;

/// Exactly `n` records built from independent per-episode streams derived from
/// `seed`; byte-identical for any `jobs`.
Dataset generate_freeplay(ClassName cls, std::size_t n, std::uint64_t seed, int jobs = 1);

enum class FeatureLayout { freeplay, rl19, rl16_nojitter };

std::string_view to_string(FeatureLayout layout);
FeatureLayout layout_from_string(std::string_view name);
std::size_t feature_width(FeatureLayout layout);

std::vector<double> featurize(const AttemptRecord& record, FeatureLayout layout);
/// Column names matching featurize's order.
std::vector<std::string> feature_names(FeatureLayout layout);

/// Writes the fields carried by `layout` back into a record.
AttemptRecord decode_features(const std::vector<double>& features, FeatureLayout layout);

// CSV with a fixed header; doubles printed with 17 significant digits.
void write_csv(std::ostream& out, const Dataset& data);
Dataset read_csv(std::istream& in);
void write_csv_file(const std::string& path, const Dataset& data);
Dataset read_csv_file(const std::string& path);
const std::vector<std::string>& csv_header();

}  // namespace stackplay::sim
