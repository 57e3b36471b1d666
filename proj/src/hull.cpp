#include <algorithm>
#include <cmath>

#include "scenecond/geometry.hpp"

namespace scenecond {

namespace {

double cross(Vec2 o, Vec2 a, Vec2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

}  // namespace

std::vector<Vec2> convex_hull(std::vector<Vec2> points, double tolerance) {
    std::sort(points.begin(), points.end(),
              [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    points.erase(std::unique(points.begin(), points.end()), points.end());
    if (points.size() <= 2) return points;

    // Point b is kept only if it turns strictly left of o->a by more than the tolerance.
    auto keeps = [tolerance](Vec2 o, Vec2 a, Vec2 b) {
        const double len = std::hypot(b.x - o.x, b.y - o.y);
        return cross(o, a, b) > tolerance * len;
    };

    std::vector<Vec2> hull(2 * points.size());
    std::size_t k = 0;
    for (const auto& p : points) {
        while (k >= 2 && !keeps(hull[k - 2], hull[k - 1], p)) --k;
        hull[k++] = p;
    }
    for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
        const auto& p = points[i];
        while (k >= lower && !keeps(hull[k - 2], hull[k - 1], p)) --k;
        hull[k++] = p;
    }
    hull.resize(k - 1);
    if (hull.size() == 1) hull.push_back(points.back());
    return hull;
}

}  // namespace scenecond
