#include "stackplay/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

namespace stackplay::sim {

namespace {

constexpr double kHalfPi = kPi / 2.0;
constexpr double kSideTilt = 2.0 * kPi / 3.0;  // cone lying on its side
const std::vector<double> kQuarterSpins = {0.0, kHalfPi, kPi, 3.0 * kHalfPi};
constexpr double kRestTolerance = 1e-6;
constexpr double kMarginWorld = kMarginHalfUnits * kDestHalf;
constexpr double kFloorLimit = 3.0;
constexpr double kStableSlide = 0.01;

std::vector<Vec3> box_vertices(const Vec3& h) {
    std::vector<Vec3> v;
    for (int sx : {-1, 1})
        for (int sy : {-1, 1})
            for (int sz : {-1, 1}) v.emplace_back(sx * h.x(), sy * h.y(), sz * h.z());
    return v;
}

std::vector<Vec3> ring(double radius, double y, int sides) {
    std::vector<Vec3> v;
    for (int i = 0; i < sides; ++i) {
        const double t = kTwoPi * i / sides;
        v.emplace_back(radius * std::cos(t), y, radius * std::sin(t));
    }
    return v;
}

std::vector<Vec3> ellipsoid_vertices(const Vec3& h) {
    std::vector<Vec3> v{{0, h.y(), 0}, {0, -h.y(), 0}};
    for (int lat = 1; lat < 8; ++lat) {
        const double phi = kPi * lat / 8.0;
        for (const Vec3& p : ring(std::sin(phi), std::cos(phi), 16)) {
            v.emplace_back(p.x() * h.x(), p.y() * h.y(), p.z() * h.z());
        }
    }
    return v;
}

void append(std::vector<Vec3>& dst, const std::vector<Vec3>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

RestOrientation flat(std::string label, double up, std::vector<double> spins) {
    return {std::move(label), up, Contact::flat, std::move(spins), 0.0, 0.0, 0.1};
}

RestOrientation round(std::string label, double up, double height, double fall, double roll) {
    return {std::move(label), up, Contact::round, {}, height, fall, roll};
}

ObjectClass make_box(ClassName name, const Vec3& h) {
    ObjectClass c{name, h, SymAxis::none, false, {}, {}, {}, box_vertices(h)};
    c.rest_orientations = {flat("upright", 0.0, kQuarterSpins),
                           flat("side", kHalfPi, kQuarterSpins),
                           flat("inverted", kPi, kQuarterSpins)};
    c.start_weights = {0.6, 0.3, 0.1};
    c.transitions.assign(3, {0.5, 0.35, 0.15});
    return c;
}

std::vector<ObjectClass> build_catalogue() {
    std::vector<ObjectClass> out;

    out.push_back(make_box(ClassName::cube, {0.5, 0.5, 0.5}));

    {
        ObjectClass c{ClassName::sphere, {0.5, 0.5, 0.5}, SymAxis::none, true, {}, {}, {}, {}};
        c.vertices = ellipsoid_vertices(c.half_extents);
        c.rest_orientations = {round("any", 0.0, 0.5, 1.0, 1.5)};
        c.start_weights = {1.0};
        c.transitions = {{1.0}};
        out.push_back(c);
    }
    {
        constexpr double r = 0.4, h = 0.6;
        ObjectClass c{ClassName::cylinder, {r, h, r}, SymAxis::Y, false, {}, {}, {}, {}};
        append(c.vertices, ring(r, h, 32));
        append(c.vertices, ring(r, -h, 32));
        c.rest_orientations = {flat("upright", 0.0, {}), round("horizontal", kHalfPi, r, 0.9, 1.2),
                               flat("inverted", kPi, {})};
        c.start_weights = {0.5, 0.4, 0.1};
        c.transitions = {{0.2, 0.8, 0.0}, {0.08, 0.9, 0.02}, {0.0, 0.8, 0.2}};
        out.push_back(c);
    }
    {
        constexpr double r = 0.3;
        ObjectClass c{ClassName::capsule, {r, 0.5, r}, SymAxis::Y, false, {}, {}, {}, {}};
        for (int lat = 0; lat <= 4; ++lat) {
            const double phi = kHalfPi * lat / 4.0;
            const double rr = r * std::cos(phi);
            const double dy = (0.5 - r) + r * std::sin(phi);
            append(c.vertices, ring(rr, dy, 16));
            append(c.vertices, ring(rr, -dy, 16));
        }
        c.rest_orientations = {round("vertical", 0.0, 0.5, 0.98, 0.3),
                               round("horizontal", kHalfPi, r, 0.85, 1.0),
                               round("inverted", kPi, 0.5, 0.98, 0.3)};
        c.start_weights = {0.4, 0.5, 0.1};
        c.transitions.assign(3, {0.03, 0.95, 0.02});
        out.push_back(c);
    }
    {
        ObjectClass c{ClassName::egg, {0.7, 0.45, 0.45}, SymAxis::X, true, {}, {}, {}, {}};
        c.vertices = ellipsoid_vertices(c.half_extents);
        c.rest_orientations = {round("lying", 0.0, 0.45, 1.0, 1.2)};
        c.start_weights = {1.0};
        c.transitions = {{1.0}};
        out.push_back(c);
    }
    {
        ObjectClass c = make_box(ClassName::rect_prism, {0.8, 0.45, 0.45});
        c.sym_axis = SymAxis::X;
        c.rest_orientations = {flat("upright", 0.0, {0.0, kPi}),
                               flat("side", kHalfPi, {0.0, kPi}),
                               flat("end", kHalfPi, {kHalfPi, 3.0 * kHalfPi}),
                               flat("inverted", kPi, {0.0, kPi})};
        c.start_weights = {0.5, 0.3, 0.05, 0.15};
        c.transitions.assign(4, {0.45, 0.35, 0.05, 0.15});
        out.push_back(c);
    }

    // Cone base radius tan(pi/6) * height puts its side rest at exactly 2pi/3.
    constexpr double height = 1.1;
    const double base = std::tan(kPi / 6.0) * height;
    const double side_height = 0.75 * base * height / std::hypot(base, height);
    {
        ObjectClass c{ClassName::cone, {base, height / 2.0, base}, SymAxis::Y, false, {}, {}, {}, {}};
        append(c.vertices, ring(base, -height / 4.0, 32));
        c.vertices.emplace_back(0.0, 0.75 * height, 0.0);
        c.rest_orientations = {flat("base", 0.0, {}), round("side", kSideTilt, side_height, 0.7, 0.3)};
        c.start_weights = {0.7, 0.3};
        c.transitions = {{0.3, 0.7}, {0.15, 0.85}};
        out.push_back(c);
    }
    {
        // square base inscribed in the cone's base circle
        const double half = base / std::sqrt(2.0);
        const double tilt = kHalfPi + std::atan(half / height);
        ObjectClass c{ClassName::pyramid, {half, height / 2.0, half}, SymAxis::Y, false, {}, {}, {}, {}};
        for (int sx : {-1, 1})
            for (int sz : {-1, 1}) c.vertices.emplace_back(sx * half, -height / 4.0, sz * half);
        c.vertices.emplace_back(0.0, 0.75 * height, 0.0);
        c.rest_orientations = {flat("base", 0.0, kQuarterSpins), flat("side", tilt, kQuarterSpins)};
        c.start_weights = {0.7, 0.3};
        c.transitions = {{0.4, 0.6}, {0.3, 0.7}};
        out.push_back(c);
    }

    out.push_back(make_box(ClassName::small_cube, {0.25, 0.25, 0.25}));
    return out;
}

const std::vector<ObjectClass>& catalogue() {
    static const std::vector<ObjectClass> classes = build_catalogue();
    return classes;
}

std::size_t sample_weighted(const std::vector<double>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform(0.0, total);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (u < weights[i]) return i;
        u -= weights[i];
    }
    for (std::size_t i = weights.size(); i-- > 0;) {
        if (weights[i] > 0.0) return i;
    }
    return 0;
}

Mat3 random_rotation(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q.toRotationMatrix();
}

struct Support {
    double height = 0.0;
    Polygon footprint;  // relative to the CoM ground projection
};

Support flat_support(const ObjectClass& cls, const Mat3& rotation) {
    double min_y = 0.0;
    std::vector<Vec3> world;
    world.reserve(cls.vertices.size());
    for (const Vec3& v : cls.vertices) {
        world.push_back(rotation * v);
        min_y = std::min(min_y, world.back().y());
    }
    std::vector<Vec2> contact;
    for (const Vec3& w : world) {
        if (w.y() < min_y + 1e-6) contact.emplace_back(w.x(), w.z());
    }
    return {-min_y, convex_hull(std::move(contact))};
}

double rest_height(const ObjectClass& cls, std::size_t rest, const Mat3& rotation) {
    const RestOrientation& ro = cls.rest_orientations[rest];
    if (ro.contact == Contact::round) return ro.round_height;
    return flat_support(cls, rotation).height;
}

double horizontal_reach(const ObjectClass& cls, const Mat3& rotation) {
    double reach = 0.0;
    for (const Vec3& v : cls.vertices) {
        const Vec3 w = rotation * v;
        reach = std::max(reach, std::hypot(w.x(), w.z()));
    }
    return reach;
}

/// Half-vector of the line contact for round bodies lying along their axis.
Vec2 contact_half_segment(const ObjectClass& cls, std::size_t rest, const Mat3& rotation) {
    const RestOrientation& ro = cls.rest_orientations[rest];
    if (ro.contact != Contact::round || cls.continuous_rest) return Vec2::Zero();
    const Vec3 axis = rotation.col(1);
    const Vec2 horizontal(axis.x(), axis.z());
    if (horizontal.norm() < 1e-9) return Vec2::Zero();
    const double half_len =
        cls.name == ClassName::capsule ? cls.half_extents.y() - cls.half_extents.x() : cls.half_extents.y();
    return horizontal.normalized() * half_len;
}

Vec2 random_direction(Rng& rng) {
    const double t = rng.uniform(0.0, kTwoPi);
    return {std::cos(t), std::sin(t)};
}

/// Point where a ray from `p` along unit `u` leaves the destination top face.
Vec2 exit_point(const Vec2& p, const Vec2& u) {
    if (std::abs(p.x()) > kDestHalf || std::abs(p.y()) > kDestHalf) return p;
    double t = 1e9;
    for (int i = 0; i < 2; ++i) {
        if (std::abs(u[i]) > 1e-12) {
            const double bound = u[i] > 0 ? kDestHalf : -kDestHalf;
            t = std::min(t, (bound - p[i]) / u[i]);
        }
    }
    return p + t * u;
}

}  // namespace

std::string_view to_string(ClassName c) {
    switch (c) {
        case ClassName::cube: return "cube";
        case ClassName::sphere: return "sphere";
        case ClassName::cylinder: return "cylinder";
        case ClassName::capsule: return "capsule";
        case ClassName::egg: return "egg";
        case ClassName::rect_prism: return "rect_prism";
        case ClassName::cone: return "cone";
        case ClassName::pyramid: return "pyramid";
        case ClassName::small_cube: return "small_cube";
    }
    return "unknown";
}

ClassName class_from_string(std::string_view name) {
    for (ClassName c : kAllClasses) {
        if (to_string(c) == name) return c;
    }
    throw InputError("unknown object class '" + std::string(name) + "'");
}

std::string_view to_string(Contact c) { return c == Contact::flat ? "flat" : "round"; }

const ObjectClass& object_class(ClassName name) {
    for (const ObjectClass& c : catalogue()) {
        if (c.name == name) return c;
    }
    throw InputError("no such class");
}

std::optional<std::size_t> match_rest(const ObjectClass& cls, const Vec3& rotation) {
    const Mat3 r = euler_to_matrix(rotation);
    if (cls.continuous_rest) {
        // an egg rests with its long (X) axis horizontal
        if (cls.sym_axis == SymAxis::X && std::abs(r(1, 0)) > kRestTolerance) return std::nullopt;
        return 0;
    }
    const double up = up_offset_of(r);
    for (std::size_t i = 0; i < cls.rest_orientations.size(); ++i) {
        if (std::abs(up - cls.rest_orientations[i].up_offset) < kRestTolerance) return i;
    }
    return std::nullopt;
}

bool is_rest_pose(const ObjectClass& cls, const Vec3& rotation) {
    return match_rest(cls, rotation).has_value();
}

Vec3 sample_rest_rotation(const ObjectClass& cls, std::size_t index, Rng& rng) {
    const double yaw = rng.uniform(0.0, kTwoPi);
    if (cls.continuous_rest) {
        if (cls.sym_axis == SymAxis::X) {
            const double roll = rng.uniform(0.0, kTwoPi);
            return matrix_to_euler(rotation_about(Vec3::UnitY(), yaw) * rotation_about(Vec3::UnitX(), roll));
        }
        return matrix_to_euler(random_rotation(rng));
    }
    const RestOrientation& ro = cls.rest_orientations.at(index);
    const double spin = ro.spins.empty() ? rng.uniform(0.0, kTwoPi) : ro.spins[rng.index(ro.spins.size())];
    const Mat3 r = rotation_about(Vec3::UnitY(), yaw) * rotation_about(Vec3::UnitX(), ro.up_offset) *
                   rotation_about(Vec3::UnitY(), spin);
    return matrix_to_euler(r);
}

std::optional<Vec3> world_sym_axis(const ObjectClass& cls, const Vec3& rotation) {
    if (cls.sym_axis == SymAxis::none) return std::nullopt;
    const Mat3 r = euler_to_matrix(rotation);
    return Vec3(r.col(cls.sym_axis == SymAxis::X ? 0 : 1)).normalized();
}

Vec3 apply_jitter(const ObjectClass& cls, const Pose& pose, Rng& rng) {
    const double angle = rng.uniform(0.0, kTwoPi);
    const auto axis = world_sym_axis(cls, pose.rotation);
    if (!axis) return {std::cos(angle), 0.0, std::sin(angle)};
    const Vec3& a = *axis;
    Eigen::Index least = 0;
    a.cwiseAbs().minCoeff(&least);
    const Vec3 u = a.cross(Vec3::Unit(least)).normalized();
    const Vec3 v = a.cross(u).normalized();
    Vec3 j = std::cos(angle) * u + std::sin(angle) * v;
    // one Gram-Schmidt pass keeps |j . a| at rounding level
    j -= j.dot(a) * a;
    return j.normalized();
}

AttemptRecord place_and_settle(const ObjectClass& cls, const Pose& pose, const PlacementAction& action,
                               Rng& rng) {
    if (!(std::abs(action.coord.x()) < 1.0 && std::abs(action.coord.y()) < 1.0)) {
        throw InputError("placement action must lie strictly inside (-1, 1)^2");
    }
    const auto rest = match_rest(cls, pose.rotation);
    if (!rest) {
        throw InputError("pose is not a rest orientation for " + std::string(to_string(cls.name)));
    }
    const RestOrientation& ro = cls.rest_orientations[*rest];
    const Mat3 rotation = euler_to_matrix(pose.rotation);

    // the action is scaled so that (-1, 1) spans the full top face width
    const Vec2 placed = action.coord * (2.0 * kDestHalf);
    bool touching = false;
    bool stable = false;
    double height = 0.0;
    if (ro.contact == Contact::flat) {
        const Support support = flat_support(cls, rotation);
        height = support.height;
        const Polygon patch = clip_convex(transformed(support.footprint, 0.0, placed),
                                          rectangle(kDestHalf, kDestHalf));
        touching = patch.size() >= 3 && polygon_area(patch) > 1e-12;
        stable = touching && inside_with_margin(patch, placed, kMarginWorld);
    } else {
        height = ro.round_height;
        const Vec2 half = contact_half_segment(cls, *rest, rotation);
        touching = segment_meets_box(placed - half, placed + half, kDestHalf, kDestHalf);
        stable = touching && inside_with_margin(rectangle(kDestHalf, kDestHalf), placed, kMarginWorld);
    }

    const Vec3 jitter = apply_jitter(cls, pose, rng);
    const Vec2 jitter_h(jitter.x(), jitter.z());
    if (stable && ro.contact == Contact::round) stable = !rng.bernoulli(ro.fall_probability);

    AttemptRecord rec;
    rec.theme_class = cls.name;
    rec.start_rotation = pose.rotation;
    rec.start_up_offset = pose.up_offset;
    rec.action = action.coord;
    rec.jitter = jitter;
    rec.rel_pos_before = pose.position / kDestHalf;
    rec.rel_pos_after = Vec3(placed.x(), kDestHalf + height, placed.y()) / kDestHalf;
    rec.relations.touching = touching;

    if (stable) {
        const Vec2 slid = placed + kStableSlide * jitter_h;
        rec.post_rotation = pose.rotation;
        rec.rel_pos_settled = Vec3(slid.x(), kDestHalf + height, slid.y()) / kDestHalf;
        rec.relations.supported = true;
        rec.stack_height = 2;
    } else {
        Vec2 dir = Vec2::Zero();
        if (ro.contact == Contact::round && touching && jitter_h.norm() > 1e-6) {
            dir = jitter_h.normalized();
        } else if (placed.norm() > 1e-9) {
            dir = placed.normalized();
        } else if (jitter_h.norm() > 1e-6) {
            dir = jitter_h.normalized();
        } else {
            dir = random_direction(rng);
        }
        const std::size_t next = sample_weighted(cls.transitions[*rest], rng);
        rec.post_rotation = sample_rest_rotation(cls, next, rng);
        const Mat3 post = euler_to_matrix(rec.post_rotation);
        // distance rolled depends on the side the body ends up resting on
        const double roll = -cls.rest_orientations[next].roll_mean * std::log(1.0 - rng.uniform());
        Vec2 landed = exit_point(placed, dir) + dir * (horizontal_reach(cls, post) + roll);
        landed += Vec2(rng.normal(0.0, 0.01), rng.normal(0.0, 0.01));
        if (landed.norm() > kFloorLimit) landed *= kFloorLimit / landed.norm();
        const double landed_height = rest_height(cls, *match_rest(cls, rec.post_rotation), post);
        rec.rel_pos_settled = Vec3(landed.x(), landed_height - kDestHalf, landed.y()) / kDestHalf;
        rec.relations.supported = false;
        rec.stack_height = 1;
    }
    rec.post_up_offset = up_offset_of_euler(rec.post_rotation);
    return rec;
}

Contact label_contact(const ObjectClass& cls, const Vec3& post_rotation) {
    const auto rest = match_rest(cls, post_rotation);
    if (!rest) {
        throw InputError("rotation is not a rest orientation for " + std::string(to_string(cls.name)));
    }
    return cls.rest_orientations[*rest].contact;
}

StackingScene::StackingScene(ClassName theme, Rng rng) : cls_(&object_class(theme)), rng_(std::move(rng)) {
    reset();
}

void StackingScene::reset() {
    destination_xz_ = Vec2(rng_.uniform(-2.0, 2.0), rng_.uniform(-2.0, 2.0));
    const std::size_t rest = sample_weighted(cls_->start_weights, rng_);
    pose_.rotation = sample_rest_rotation(*cls_, rest, rng_);
    pose_.up_offset = up_offset_of_euler(pose_.rotation);
    const Mat3 r = euler_to_matrix(pose_.rotation);
    const Vec2 beside = random_direction(rng_) * rng_.uniform(1.2, 2.0);
    pose_.position = Vec3(beside.x(), rest_height(*cls_, rest, r) - kDestHalf, beside.y());
}

AttemptRecord StackingScene::attempt(const PlacementAction& action) {
    AttemptRecord rec = place_and_settle(*cls_, pose_, action, rng_);
    pose_.rotation = rec.post_rotation;
    pose_.up_offset = rec.post_up_offset;
    pose_.position = rec.rel_pos_settled * kDestHalf;
    return rec;
}

Episode sample_episode(ClassName cls, Rng& rng) {
    StackingScene scene(cls, Rng(rng.next()));
    Episode ep;
    for (int k = 1; k <= kMaxAttempts; ++k) {
        PlacementAction action;
        do {
            action.coord = Vec2(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        } while (std::abs(action.coord.x()) >= 1.0 || std::abs(action.coord.y()) >= 1.0);
        AttemptRecord rec = scene.attempt(action);
        rec.attempt_idx = k;
        if (rec.relations.supported) ep.outcome = EpisodeOutcome::stacked;
        ep.records.push_back(rec);
    }
    return ep;
}

Dataset generate_freeplay(ClassName cls, std::size_t n, std::uint64_t seed, int jobs) {
    if (n == 0) throw InputError("generate_freeplay needs n > 0");
    const std::size_t episodes = (n + kMaxAttempts - 1) / kMaxAttempts;
    auto run = [&](std::size_t begin, std::size_t end) {
        Dataset part;
        for (std::size_t e = begin; e < end; ++e) {
            Rng rng = Rng::derive(seed, e);
            Episode ep = sample_episode(cls, rng);
            for (AttemptRecord& r : ep.records) {
                r.episode_id = static_cast<std::int64_t>(e);
                part.push_back(r);
            }
        }
        return part;
    };
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, episodes);
    std::vector<std::future<Dataset>> parts;
    const std::size_t chunk = (episodes + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(episodes, b + chunk);
        if (b >= e) break;
        parts.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, run, b, e));
    }
    Dataset out;
    out.reserve(episodes * kMaxAttempts);
    for (auto& p : parts) {
        Dataset d = p.get();
        out.insert(out.end(), d.begin(), d.end());
    }
    out.resize(n);
    return out;
}

// ---------------------------------------------------------------- features

std::string_view to_string(FeatureLayout layout) {
    switch (layout) {
        case FeatureLayout::freeplay: return "freeplay";
        case FeatureLayout::rl19: return "rl19";
        case FeatureLayout::rl16_nojitter: return "rl16_nojitter";
    }
    return "unknown";
}

FeatureLayout layout_from_string(std::string_view name) {
    if (name == "freeplay") return FeatureLayout::freeplay;
    if (name == "rl19") return FeatureLayout::rl19;
    if (name == "rl16" || name == "rl16_nojitter") return FeatureLayout::rl16_nojitter;
    throw InputError("unknown feature layout '" + std::string(name) + "'");
}

std::size_t feature_width(FeatureLayout layout) {
    switch (layout) {
        case FeatureLayout::freeplay: return 24;
        case FeatureLayout::rl19: return 19;
        case FeatureLayout::rl16_nojitter: return 16;
    }
    throw InputError("unknown feature layout");
}

namespace {

// Field accessors shared by featurize and decode_features so both directions
// use one ordering.
enum class Field {
    start_rot, start_up, action, post_rot, post_up, jitter, before, after, settled, relations,
    reward, stack_height, supported
};

const std::vector<Field>& fields_of(FeatureLayout layout) {
    static const std::vector<Field> freeplay = {Field::start_rot, Field::start_up, Field::action,
                                                Field::post_rot,  Field::post_up,  Field::jitter,
                                                Field::before,    Field::after,    Field::settled,
                                                Field::relations};
    static const std::vector<Field> rl19 = {Field::action,  Field::start_up, Field::post_up,
                                            Field::post_rot, Field::jitter,  Field::after,
                                            Field::settled,  Field::reward,  Field::stack_height,
                                            Field::supported};
    static const std::vector<Field> rl16 = {Field::action,  Field::start_up, Field::post_up,
                                            Field::post_rot, Field::after,   Field::settled,
                                            Field::reward,   Field::stack_height, Field::supported};
    switch (layout) {
        case FeatureLayout::freeplay: return freeplay;
        case FeatureLayout::rl19: return rl19;
        case FeatureLayout::rl16_nojitter: return rl16;
    }
    throw InputError("unknown feature layout");
}

const std::vector<std::string>& names_of(Field field) {
    static const std::map<Field, std::vector<std::string>> names = {
        {Field::start_rot, {"start_rot_x", "start_rot_y", "start_rot_z"}},
        {Field::start_up, {"start_up_offset"}},
        {Field::action, {"action_x", "action_z"}},
        {Field::post_rot, {"post_rot_x", "post_rot_y", "post_rot_z"}},
        {Field::post_up, {"post_up_offset"}},
        {Field::jitter, {"jitter_x", "jitter_y", "jitter_z"}},
        {Field::before, {"rel_before_x", "rel_before_y", "rel_before_z"}},
        {Field::after, {"rel_after_x", "rel_after_y", "rel_after_z"}},
        {Field::settled, {"rel_settled_x", "rel_settled_y", "rel_settled_z"}},
        {Field::relations, {"supported", "touching"}},
        {Field::reward, {"reward"}},
        {Field::stack_height, {"stack_height"}},
        {Field::supported, {"supported"}}};
    return names.at(field);
}

}  // namespace

std::vector<std::string> feature_names(FeatureLayout layout) {
    std::vector<std::string> out;
    for (Field field : fields_of(layout)) {
        const auto& n = names_of(field);
        out.insert(out.end(), n.begin(), n.end());
    }
    return out;
}

std::vector<double> featurize(const AttemptRecord& r, FeatureLayout layout) {
    std::vector<double> f;
    f.reserve(feature_width(layout));
    auto put3 = [&](const Vec3& v) { f.insert(f.end(), {v.x(), v.y(), v.z()}); };
    for (Field field : fields_of(layout)) {
        switch (field) {
            case Field::start_rot: put3(r.start_rotation); break;
            case Field::start_up: f.push_back(r.start_up_offset); break;
            case Field::action: f.insert(f.end(), {r.action.x(), r.action.y()}); break;
            case Field::post_rot: put3(r.post_rotation); break;
            case Field::post_up: f.push_back(r.post_up_offset); break;
            case Field::jitter: put3(r.jitter); break;
            case Field::before: put3(r.rel_pos_before); break;
            case Field::after: put3(r.rel_pos_after); break;
            case Field::settled: put3(r.rel_pos_settled); break;
            case Field::relations:
                f.push_back(r.relations.supported ? 1.0 : 0.0);
                f.push_back(r.relations.touching ? 1.0 : 0.0);
                break;
            case Field::reward: f.push_back(r.reward); break;
            case Field::stack_height: f.push_back(static_cast<double>(r.stack_height)); break;
            case Field::supported: f.push_back(r.relations.supported ? 1.0 : 0.0); break;
        }
    }
    return f;
}

AttemptRecord decode_features(const std::vector<double>& f, FeatureLayout layout) {
    if (f.size() != feature_width(layout)) throw InputError("feature vector width does not match layout");
    AttemptRecord r;
    std::size_t i = 0;
    auto get3 = [&]() {
        Vec3 v(f[i], f[i + 1], f[i + 2]);
        i += 3;
        return v;
    };
    for (Field field : fields_of(layout)) {
        switch (field) {
            case Field::start_rot: r.start_rotation = get3(); break;
            case Field::start_up: r.start_up_offset = f[i++]; break;
            case Field::action: r.action = Vec2(f[i], f[i + 1]); i += 2; break;
            case Field::post_rot: r.post_rotation = get3(); break;
            case Field::post_up: r.post_up_offset = f[i++]; break;
            case Field::jitter: r.jitter = get3(); break;
            case Field::before: r.rel_pos_before = get3(); break;
            case Field::after: r.rel_pos_after = get3(); break;
            case Field::settled: r.rel_pos_settled = get3(); break;
            case Field::relations:
                r.relations.supported = f[i++] != 0.0;
                r.relations.touching = f[i++] != 0.0;
                break;
            case Field::reward: r.reward = f[i++]; break;
            case Field::stack_height: r.stack_height = static_cast<int>(f[i++]); break;
            case Field::supported: r.relations.supported = f[i++] != 0.0; break;
        }
    }
    return r;
}

// --------------------------------------------------------------------- csv

const std::vector<std::string>& csv_header() {
    static const std::vector<std::string> header = {
        "episode_id",   "attempt_idx",  "theme_class",     "start_rot_x",     "start_rot_y",
        "start_rot_z",  "start_up_offset", "action_x",     "action_z",        "post_rot_x",
        "post_rot_y",   "post_rot_z",   "post_up_offset",  "jitter_x",        "jitter_y",
        "jitter_z",     "rel_before_x", "rel_before_y",    "rel_before_z",    "rel_after_x",
        "rel_after_y",  "rel_after_z",  "rel_settled_x",   "rel_settled_y",   "rel_settled_z",
        "supported",    "touching",     "reward",          "cum_reward",      "mean_reward",
        "stack_height"};
    return header;
}

namespace {

void put_double(std::string& line, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    line += ',';
    line += buf;
}

}  // namespace

void write_csv(std::ostream& out, const Dataset& data) {
    const auto& header = csv_header();
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    std::string line;
    for (const AttemptRecord& r : data) {
        line = std::to_string(r.episode_id) + ',' + std::to_string(r.attempt_idx) + ',' +
               std::string(to_string(r.theme_class));
        for (double v : {r.start_rotation.x(), r.start_rotation.y(), r.start_rotation.z(), r.start_up_offset,
                         r.action.x(), r.action.y(), r.post_rotation.x(), r.post_rotation.y(),
                         r.post_rotation.z(), r.post_up_offset, r.jitter.x(), r.jitter.y(), r.jitter.z(),
                         r.rel_pos_before.x(), r.rel_pos_before.y(), r.rel_pos_before.z(), r.rel_pos_after.x(),
                         r.rel_pos_after.y(), r.rel_pos_after.z(), r.rel_pos_settled.x(),
                         r.rel_pos_settled.y(), r.rel_pos_settled.z()}) {
            put_double(line, v);
        }
        line += r.relations.supported ? ",1" : ",0";
        line += r.relations.touching ? ",1" : ",0";
        put_double(line, r.reward);
        put_double(line, r.cum_reward);
        put_double(line, r.mean_reward);
        line += ',' + std::to_string(r.stack_height);
        out << line << '\n';
    }
}

Dataset read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw PipelineError("empty dataset file");
    {
        std::string expected;
        for (std::size_t i = 0; i < csv_header().size(); ++i) expected += (i ? "," : "") + csv_header()[i];
        if (line != expected) throw PipelineError("dataset header does not match the record layout");
    }
    Dataset out;
    std::vector<std::string> cells;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        cells.clear();
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != csv_header().size()) {
            throw PipelineError("dataset row has " + std::to_string(cells.size()) + " cells");
        }
        auto d = [&](std::size_t i) { return std::strtod(cells[i].c_str(), nullptr); };
        AttemptRecord r;
        r.episode_id = std::stoll(cells[0]);
        r.attempt_idx = std::stoi(cells[1]);
        r.theme_class = class_from_string(cells[2]);
        r.start_rotation = Vec3(d(3), d(4), d(5));
        r.start_up_offset = d(6);
        r.action = Vec2(d(7), d(8));
        r.post_rotation = Vec3(d(9), d(10), d(11));
        r.post_up_offset = d(12);
        r.jitter = Vec3(d(13), d(14), d(15));
        r.rel_pos_before = Vec3(d(16), d(17), d(18));
        r.rel_pos_after = Vec3(d(19), d(20), d(21));
        r.rel_pos_settled = Vec3(d(22), d(23), d(24));
        r.relations.supported = cells[25] == "1";
        r.relations.touching = cells[26] == "1";
        r.reward = d(27);
        r.cum_reward = d(28);
        r.mean_reward = d(29);
        r.stack_height = std::stoi(cells[30]);
        out.push_back(r);
    }
    return out;
}

void write_csv_file(const std::string& path, const Dataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError("cannot write " + path);
    write_csv(out, data);
    if (!out) throw PipelineError("write failed for " + path);
}

Dataset read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot read " + path);
    return read_csv(in);
}

}  // namespace stackplay::sim
