#include "stackplay/geometry.hpp"

#include "stackplay/common.hpp"

#include <algorithm>
#include <cmath>

namespace stackplay {

Mat3 euler_to_matrix(const Vec3& euler) {
    const Mat3 rx = Eigen::AngleAxisd(euler.x(), Vec3::UnitX()).toRotationMatrix();
    const Mat3 ry = Eigen::AngleAxisd(euler.y(), Vec3::UnitY()).toRotationMatrix();
    const Mat3 rz = Eigen::AngleAxisd(euler.z(), Vec3::UnitZ()).toRotationMatrix();
    return rx * ry * rz;
}

double wrap_angle(double radians) {
    double w = std::fmod(radians, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    if (w >= kTwoPi) w = 0.0;
    return w;
}

Vec3 matrix_to_euler(const Mat3& r) {
    const double sb = std::clamp(r(0, 2), -1.0, 1.0);
    const double b = std::asin(sb);
    double a = 0.0;
    double c = 0.0;
    if (std::abs(sb) < 1.0 - 1e-12) {
        a = std::atan2(-r(1, 2), r(2, 2));
        c = std::atan2(-r(0, 1), r(0, 0));
    } else {
        // gimbal lock: fold everything into a
        a = std::atan2(r(2, 1), r(1, 1));
    }
    return {wrap_angle(a), wrap_angle(b), wrap_angle(c)};
}

double up_offset_of(const Mat3& rotation) {
    return std::acos(std::clamp(rotation(1, 1), -1.0, 1.0));
}

double up_offset_of_euler(const Vec3& euler) { return up_offset_of(euler_to_matrix(euler)); }

Mat3 rotation_about(const Vec3& axis, double radians) {
    return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

Polygon clip_convex(const Polygon& subject, const Polygon& clip) {
    Polygon out = subject;
    const std::size_t n = clip.size();
    for (std::size_t i = 0; i < n && !out.empty(); ++i) {
        const Vec2& a = clip[i];
        const Vec2& b = clip[(i + 1) % n];
        const Vec2 edge = b - a;
        auto side = [&](const Vec2& p) { return cross2(edge, p - a); };
        Polygon in = std::move(out);
        out.clear();
        for (std::size_t j = 0; j < in.size(); ++j) {
            const Vec2& p = in[j];
            const Vec2& q = in[(j + 1) % in.size()];
            const double sp = side(p);
            const double sq = side(q);
            if (sp >= 0.0) out.push_back(p);
            if ((sp >= 0.0) != (sq >= 0.0)) {
                const double t = sp / (sp - sq);
                out.push_back(p + t * (q - p));
            }
        }
    }
    return out;
}

double polygon_area(const Polygon& poly) {
    double area = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        area += cross2(poly[i], poly[(i + 1) % poly.size()]);
    }
    return 0.5 * area;
}

Polygon convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    if (pts.size() < 3) return pts;
    Polygon hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 1e-12) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 1e-12) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

bool segment_meets_box(const Vec2& a, const Vec2& b, double hx, double hz) {
    // Liang-Barsky
    double t0 = 0.0;
    double t1 = 1.0;
    const Vec2 d = b - a;
    const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
    const double q[4] = {a.x() + hx, hx - a.x(), a.y() + hz, hz - a.y()};
    for (int i = 0; i < 4; ++i) {
        if (std::abs(p[i]) < 1e-15) {
            if (q[i] < 0.0) return false;
            continue;
        }
        const double t = q[i] / p[i];
        if (p[i] < 0.0) {
            t0 = std::max(t0, t);
        } else {
            t1 = std::min(t1, t);
        }
        if (t0 > t1) return false;
    }
    return true;
}

bool inside_with_margin(const Polygon& poly, const Vec2& p, double margin) {
    if (poly.size() < 3 || polygon_area(poly) <= 1e-12) return false;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % poly.size()];
        const double len = (b - a).norm();
        if (len < 1e-12) continue;
        if (cross2(b - a, p - a) / len < margin) return false;
    }
    return true;
}

Polygon regular_polygon(double radius, int sides) {
    Polygon poly;
    poly.reserve(static_cast<std::size_t>(sides));
    for (int i = 0; i < sides; ++i) {
        const double t = kTwoPi * i / sides;
        poly.emplace_back(radius * std::cos(t), radius * std::sin(t));
    }
    return poly;
}

Polygon rectangle(double half_x, double half_z) {
    return {{-half_x, -half_z}, {half_x, -half_z}, {half_x, half_z}, {-half_x, half_z}};
}

Polygon transformed(const Polygon& poly, double yaw, const Vec2& offset) {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    Polygon out;
    out.reserve(poly.size());
    for (const Vec2& p : poly) {
        out.emplace_back(c * p.x() - s * p.y() + offset.x(), s * p.x() + c * p.y() + offset.y());
    }
    return out;
}

}  // namespace stackplay
