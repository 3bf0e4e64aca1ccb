#include "emvsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace emv::geom {

double signed_area(const Polygon& p) {
    double s = 0.0;
    size_t n = p.size();
    for (size_t i = 0; i < n; ++i) {
        const Point& a = p[i];
        const Point& b = p[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    return 0.5 * s;
}

double area(const Polygon& p) { return std::abs(signed_area(p)); }

Polygon convex_hull(std::vector<Point> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Point& a, const Point& b) {
                              return a.x == b.x && a.y == b.y;
                          }),
              pts.end());
    if (pts.size() < 3) throw GeometryError("convex hull needs at least 3 distinct points");
    auto cross = [](const Point& o, const Point& a, const Point& b) {
        return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    };
    std::vector<Point> hull(2 * pts.size());
    size_t k = 0;
    for (const Point& p : pts) { // lower
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    size_t lower = k + 1;
    for (size_t i = pts.size() - 1; i-- > 0;) { // upper
        const Point& p = pts[i];
        while (k >= lower && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    hull.resize(k - 1);
    if (hull.size() < 3) throw GeometryError("input points are collinear");
    return hull;
}

Polygon clip_halfplane(const Polygon& subject, double a, double b, double c) {
    Polygon out;
    size_t n = subject.size();
    if (n == 0) return out;
    auto inside = [&](const Point& p) { return a * p.x + b * p.y <= c + 1e-12; };
    auto intersect = [&](const Point& p, const Point& q) {
        double fp = a * p.x + b * p.y - c;
        double fq = a * q.x + b * q.y - c;
        double t = fp / (fp - fq);
        return Point{p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
    };
    for (size_t i = 0; i < n; ++i) {
        const Point& cur = subject[i];
        const Point& nxt = subject[(i + 1) % n];
        bool cin = inside(cur), nin = inside(nxt);
        if (cin) out.push_back(cur);
        if (cin != nin) out.push_back(intersect(cur, nxt));
    }
    return out;
}

Polygon clip_polygon(const Polygon& subject, const Polygon& convex_clip) {
    if (convex_clip.size() < 3) throw GeometryError("clip polygon must have >= 3 vertices");
    // orient the clip polygon counter-clockwise so each edge's left side is
    // the interior
    Polygon clip = convex_clip;
    if (signed_area(clip) < 0) std::reverse(clip.begin(), clip.end());
    Polygon out = subject;
    size_t n = clip.size();
    for (size_t i = 0; i < n && !out.empty(); ++i) {
        const Point& p = clip[i];
        const Point& q = clip[(i + 1) % n];
        // interior: cross(q-p, x-p) >= 0  =>  (qy-py)x - (qx-px)y <= qy*px...
        double a = q.y - p.y;
        double b = -(q.x - p.x);
        double c = a * p.x + b * p.y;
        out = clip_halfplane(out, a, b, c);
    }
    return out;
}

double intersection_area(const Polygon& subject, const Polygon& convex_clip) {
    Polygon inter = clip_polygon(subject, convex_clip);
    return inter.size() < 3 ? 0.0 : area(inter);
}

Polygon voronoi_cell(const std::vector<Point>& sites, std::size_t i, const Polygon& bounds) {
    if (i >= sites.size()) throw GeometryError("site index out of range");
    Polygon cell = bounds;
    if (signed_area(cell) < 0) std::reverse(cell.begin(), cell.end());
    const Point& s = sites[i];
    for (size_t j = 0; j < sites.size() && !cell.empty(); ++j) {
        if (j == i) continue;
        const Point& o = sites[j];
        double dx = o.x - s.x, dy = o.y - s.y;
        if (dx == 0.0 && dy == 0.0)
            throw GeometryError("duplicate node coordinates for sites " + std::to_string(i) +
                                " and " + std::to_string(j));
        // closer to s than to o: 2(o-s)·x <= |o|^2 - |s|^2
        double c = (o.x * o.x + o.y * o.y - s.x * s.x - s.y * s.y) / 2.0;
        cell = clip_halfplane(cell, dx, dy, c);
    }
    return cell;
}

} // namespace emv::geom
