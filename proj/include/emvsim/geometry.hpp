#pragma once

#include <stdexcept>
#include <vector>

namespace emv::geom {

struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

using Polygon = std::vector<Point>; // vertex loop, no repeated closing point

// Signed area (positive for counter-clockwise), shoelace formula.
double signed_area(const Polygon& p);
double area(const Polygon& p);

// Andrew monotone chain; returns a counter-clockwise hull (collinear points
// dropped). Needs >= 3 distinct input points.
Polygon convex_hull(std::vector<Point> points);

// Sutherland-Hodgman: clip `subject` by the half-plane a*x + b*y <= c.
Polygon clip_halfplane(const Polygon& subject, double a, double b, double c);

// Clip a (possibly non-convex) subject by a convex clip polygon.
Polygon clip_polygon(const Polygon& subject, const Polygon& convex_clip);

// Area of subject ∩ convex_clip.
double intersection_area(const Polygon& subject, const Polygon& convex_clip);

// Voronoi cell of sites[i] within a convex bounding polygon, built by
// half-plane clipping against every other site's perpendicular bisector.
// Throws on duplicate site coordinates (degenerate bisector).
Polygon voronoi_cell(const std::vector<Point>& sites, std::size_t i, const Polygon& bounds);

} // namespace emv::geom
