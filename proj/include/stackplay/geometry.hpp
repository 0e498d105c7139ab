#pragma once

#include <Eigen/Dense>

#include <vector>

namespace stackplay {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Euler angles are intrinsic X-Y-Z in radians: R = Rx(a) * Ry(b) * Rz(c).
Mat3 euler_to_matrix(const Vec3& euler);

/// Inverse of euler_to_matrix with every angle wrapped to [0, 2pi).
Vec3 matrix_to_euler(const Mat3& rotation);

double wrap_angle(double radians);

/// Angle between world +Y and the body's local +Y axis, in [0, pi].
double up_offset_of(const Mat3& rotation);
double up_offset_of_euler(const Vec3& euler);

Mat3 rotation_about(const Vec3& axis, double radians);

/// Convex polygon in the horizontal (x, z) plane, counter-clockwise.
using Polygon = std::vector<Vec2>;

/// Clip `subject` against the convex polygon `clip` (Sutherland-Hodgman).
Polygon clip_convex(const Polygon& subject, const Polygon& clip);

double polygon_area(const Polygon& poly);

/// Counter-clockwise convex hull (monotone chain); collinear points dropped.
Polygon convex_hull(std::vector<Vec2> points);

/// True iff the segment [a, b] meets the axis-aligned box |x| <= hx, |z| <= hz.
bool segment_meets_box(const Vec2& a, const Vec2& b, double hx, double hz);

/// True iff `p` lies inside the convex polygon with at least `margin`
/// clearance from every edge. Degenerate polygons contain nothing.
bool inside_with_margin(const Polygon& poly, const Vec2& p, double margin);

Polygon regular_polygon(double radius, int sides);
Polygon rectangle(double half_x, double half_z);
Polygon transformed(const Polygon& poly, double yaw, const Vec2& offset);

}  // namespace stackplay
