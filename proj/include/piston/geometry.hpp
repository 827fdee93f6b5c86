#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <variant>
#include <vector>

#include "piston/rng.hpp"
#include "piston/vec.hpp"

namespace piston {

// Absolute tolerances; all container dimensions are O(1).
inline constexpr double kHitTol = 1e-12;    // surface / root acceptance
inline constexpr double kEdgeTol = 1e-9;    // near piece-boundary => singular
inline constexpr double kGrazeTol = 1e-9;   // |cos phi| below this => singular

// ---------------------------------------------------------------------------
// Boundary pieces. 2D: line segments and circular arcs. 3D: planar convex
// polygon facets (optionally with circular holes) and spherical patches
// (polar caps). All pieces store the inward unit normal orientation, i.e. the
// side on which the gas domain lies.
// ---------------------------------------------------------------------------

struct Segment {
    Vec2 a, b;
    Vec2 inward;  // unit, perpendicular to b-a
    // derived
    Vec2 tangent{};
    double length = 0;

    void finalize() {
        const Vec2 ab = b - a;
        length = norm(ab);
        if (length <= kHitTol) throw std::invalid_argument("segment endpoints coincide");
        tangent = ab * (1.0 / length);
        if (std::fabs(dot(tangent, inward)) > 1e-9)
            throw std::invalid_argument("segment normal not perpendicular to segment");
        inward = normalized(inward);
    }
};

struct Arc {
    Vec2 center;
    double radius = 0;
    double theta0 = 0, theta1 = 0;  // CCW parameter range, theta1 > theta0
    bool normal_toward_center = true;
    // derived
    bool closed = false;
    double length = 0;

    void finalize() {
        if (radius <= 0) throw std::invalid_argument("arc radius must be positive");
        const double range = theta1 - theta0;
        if (range <= kHitTol || range > 2 * M_PI + 1e-12)
            throw std::invalid_argument("arc angle range invalid");
        closed = range >= 2 * M_PI - 1e-12;
        length = radius * range;
    }
};

struct Hole {
    Vec3 center;
    double radius = 0;
};

struct Facet {
    std::vector<Vec3> verts;  // planar, convex
    Vec3 inward;
    std::vector<Hole> holes;
    // derived chart: point = origin + u*e1 + v*e2
    Vec3 origin{}, e1{}, e2{};
    std::vector<Vec2> verts2;
    std::vector<Vec2> holes2;
    double area = 0;

    void finalize() {
        if (verts.size() < 3) throw std::invalid_argument("facet needs >= 3 vertices");
        inward = normalized(inward);
        origin = verts[0];
        e1 = normalized(verts[1] - verts[0]);
        e2 = cross(inward, e1);
        verts2.clear();
        for (const auto& v : verts) {
            const Vec3 d = v - origin;
            if (std::fabs(dot(d, inward)) > 1e-9)
                throw std::invalid_argument("facet vertices not coplanar");
            verts2.push_back({{dot(d, e1), dot(d, e2)}});
        }
        // shoelace; enforce CCW chart orientation
        double twice = 0;
        for (std::size_t i = 0; i < verts2.size(); ++i) {
            const Vec2& p = verts2[i];
            const Vec2& q = verts2[(i + 1) % verts2.size()];
            twice += cross(p, q);
        }
        if (twice < 0) {
            std::reverse(verts.begin(), verts.end());
            std::reverse(verts2.begin(), verts2.end());
            twice = -twice;
        }
        area = 0.5 * twice;
        // convexity
        for (std::size_t i = 0; i < verts2.size(); ++i) {
            const Vec2 e = verts2[(i + 1) % verts2.size()] - verts2[i];
            const Vec2 f = verts2[(i + 2) % verts2.size()] - verts2[(i + 1) % verts2.size()];
            if (cross(e, f) < -1e-12) throw std::invalid_argument("facet polygon must be convex");
        }
        holes2.clear();
        for (const auto& h : holes) {
            if (h.radius <= 0) throw std::invalid_argument("hole radius must be positive");
            const Vec3 d = h.center - origin;
            if (std::fabs(dot(d, inward)) > 1e-9)
                throw std::invalid_argument("hole center not on facet plane");
            holes2.push_back({{dot(d, e1), dot(d, e2)}});
            area -= M_PI * h.radius * h.radius;
        }
        if (area <= 0) throw std::invalid_argument("facet area nonpositive after holes");
    }

    bool chart_in_polygon(const Vec2& p) const {
        for (std::size_t i = 0; i < verts2.size(); ++i) {
            const Vec2 e = verts2[(i + 1) % verts2.size()] - verts2[i];
            if (cross(e, p - verts2[i]) < 0) return false;
        }
        return true;
    }

    double chart_edge_distance(const Vec2& p) const {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < verts2.size(); ++i) {
            const Vec2& a2 = verts2[i];
            const Vec2& b2 = verts2[(i + 1) % verts2.size()];
            const Vec2 ab = b2 - a2;
            const double s = std::clamp(dot(p - a2, ab) / dot(ab, ab), 0.0, 1.0);
            d = std::min(d, norm(p - (a2 + ab * s)));
        }
        for (std::size_t i = 0; i < holes2.size(); ++i)
            d = std::min(d, std::fabs(norm(p - holes2[i]) - holes[i].radius));
        return d;
    }
};

struct SphericalPatch {
    Vec3 center;
    double radius = 0;
    Vec3 axis;              // unit, center -> apex
    double cos_half = 0;    // cos of cap half-angle, in (0, 1)
    bool normal_toward_center = true;
    // derived
    Vec3 w1{}, w2{};        // azimuth frame about axis
    double area = 0;

    void finalize() {
        if (radius <= 0) throw std::invalid_argument("patch radius must be positive");
        if (!(cos_half > 0.0 && cos_half < 1.0))
            throw std::invalid_argument("patch cos_half must lie in (0,1)");
        axis = normalized(axis);
        w1 = any_orthonormal(axis);
        w2 = cross(axis, w1);
        area = 2 * M_PI * radius * radius * (1.0 - cos_half);
    }

    double half_angle() const { return std::acos(cos_half); }
};

template <int D>
struct PieceTypes;
template <>
struct PieceTypes<2> {
    using type = std::variant<Segment, Arc>;
};
template <>
struct PieceTypes<3> {
    using type = std::variant<Facet, SphericalPatch>;
};
template <int D>
using Piece = typename PieceTypes<D>::type;

// ---------------------------------------------------------------------------
// Piece queries
// ---------------------------------------------------------------------------

inline double piece_measure(const Segment& s) { return s.length; }
inline double piece_measure(const Arc& a) { return a.length; }
inline double piece_measure(const Facet& f) { return f.area; }
inline double piece_measure(const SphericalPatch& p) { return p.area; }

template <int D>
inline double piece_measure(const Piece<D>& p) {
    return std::visit([](const auto& x) { return piece_measure(x); }, p);
}

/// One ray-piece crossing. `t` is in units of the ray direction vector.
struct RayCrossing {
    double t = 0;
    bool near_edge = false;  // within kEdgeTol of the piece boundary
};

inline void ray_crossings(const Segment& s, const Vec2& o, const Vec2& d, double t_min,
                          std::vector<RayCrossing>& out) {
    const Vec2 ab = s.b - s.a;
    const double denom = cross(d, ab);
    if (std::fabs(denom) < 1e-300) return;  // parallel
    const Vec2 w = s.a - o;
    const double t = cross(w, ab) / denom;
    if (t <= t_min) return;
    const double u = cross(w, d) / denom;  // position along segment in [0,1]
    const double r = u * s.length;
    if (r < -kEdgeTol || r > s.length + kEdgeTol) return;
    out.push_back({t, r < kEdgeTol || r > s.length - kEdgeTol});
}

/// Wrap angle into [0, 2*pi).
inline double wrap_2pi(double a) {
    a = std::fmod(a, 2 * M_PI);
    return a < 0 ? a + 2 * M_PI : a;
}

inline void ray_crossings(const Arc& arc, const Vec2& o, const Vec2& d, double t_min,
                          std::vector<RayCrossing>& out) {
    const Vec2 q = o - arc.center;
    const double A = dot(d, d);
    const double B = dot(q, d);
    const double C = dot(q, q) - arc.radius * arc.radius;
    const double disc = B * B - A * C;
    if (disc < 0) return;
    const double sq = std::sqrt(disc);
    // stable quadratic roots
    const double h = -(B + std::copysign(sq, B));
    const double roots[2] = {h / A, h != 0 ? C / h : -B / A};
    const double range = arc.theta1 - arc.theta0;
    const double tol_ang = kEdgeTol / arc.radius;
    for (double t : roots) {
        if (t <= t_min) continue;
        const Vec2 p = o + d * t - arc.center;
        double w = wrap_2pi(std::atan2(p[1], p[0]) - arc.theta0);
        if (!arc.closed) {
            if (w > range + tol_ang && w < 2 * M_PI - tol_ang) continue;
            if (w >= 2 * M_PI - tol_ang) w = 0;
        }
        const bool near = !arc.closed && (w < tol_ang || w > range - tol_ang);
        const bool tangential = disc < kEdgeTol * kEdgeTol * A;
        out.push_back({t, near || tangential});
    }
}

inline void ray_crossings(const Facet& f, const Vec3& o, const Vec3& d, double t_min,
                          std::vector<RayCrossing>& out) {
    const double vn = dot(d, f.inward);
    if (std::fabs(vn) < 1e-300) return;
    const double t = dot(f.origin - o, f.inward) / vn;
    if (t <= t_min) return;
    const Vec3 p = o + d * t - f.origin;
    const Vec2 uv{{dot(p, f.e1), dot(p, f.e2)}};
    const double edge = f.chart_edge_distance(uv);
    const bool inside = f.chart_in_polygon(uv);
    bool in_hole = false;
    for (std::size_t i = 0; i < f.holes2.size(); ++i)
        if (norm(uv - f.holes2[i]) < f.holes[i].radius) in_hole = true;
    if (edge < kEdgeTol) {
        out.push_back({t, true});
        return;
    }
    if (inside && !in_hole) out.push_back({t, false});
}

inline void ray_crossings(const SphericalPatch& sp, const Vec3& o, const Vec3& d, double t_min,
                          std::vector<RayCrossing>& out) {
    const Vec3 q = o - sp.center;
    const double A = dot(d, d);
    const double B = dot(q, d);
    const double C = dot(q, q) - sp.radius * sp.radius;
    const double disc = B * B - A * C;
    if (disc < 0) return;
    const double sq = std::sqrt(disc);
    const double h = -(B + std::copysign(sq, B));
    const double roots[2] = {h / A, h != 0 ? C / h : -B / A};
    const double tol_ang = kEdgeTol / sp.radius;
    for (double t : roots) {
        if (t <= t_min) continue;
        const Vec3 p = o + d * t - sp.center;
        const double ca = std::clamp(dot(p, sp.axis) / sp.radius, -1.0, 1.0);
        const double theta = std::acos(ca);
        if (theta > sp.half_angle() + tol_ang) continue;
        const bool near = theta > sp.half_angle() - tol_ang;
        const bool tangential = disc < kEdgeTol * kEdgeTol * A;
        out.push_back({t, near || tangential});
    }
}

template <int D>
inline void ray_crossings(const Piece<D>& p, const Vec<D>& o, const Vec<D>& d, double t_min,
                          std::vector<RayCrossing>& out) {
    std::visit([&](const auto& x) { ray_crossings(x, o, d, t_min, out); }, p);
}

template <int D>
inline Vec<D> inward_normal_at(const Piece<D>& piece, const Vec<D>& point) {
    if constexpr (D == 2) {
        if (const auto* s = std::get_if<Segment>(&piece)) return s->inward;
        const auto& a = std::get<Arc>(piece);
        const Vec2 rad = normalized(point - a.center);
        return a.normal_toward_center ? -rad : rad;
    } else {
        if (const auto* f = std::get_if<Facet>(&piece)) return f->inward;
        const auto& sp = std::get<SphericalPatch>(piece);
        const Vec3 rad = normalized(point - sp.center);
        return sp.normal_toward_center ? -rad : rad;
    }
}

// --- chart coordinates ------------------------------------------------------
// 2D pieces are parameterized by arc length r in [0, length]; 3D facets by
// in-plane coordinates, spherical patches by (geodesic distance from apex,
// azimuth * sin(theta) scale is not needed -- only edge distances are).

struct Frame2 {
    Vec2 point, normal, tangent;
};

inline Frame2 frame_at(const Segment& s, double r) {
    return {s.a + s.tangent * r, s.inward, s.tangent};
}

inline Frame2 frame_at(const Arc& a, double r) {
    const double th = a.theta0 + r / a.radius;
    const Vec2 rad{{std::cos(th), std::sin(th)}};
    const Vec2 point = a.center + rad * a.radius;
    const Vec2 tangent{{-rad[1], rad[0]}};  // CCW
    return {point, a.normal_toward_center ? -rad : rad, tangent};
}

inline Frame2 frame_at(const Piece<2>& p, double r) {
    return std::visit([&](const auto& x) { return frame_at(x, r); }, p);
}

inline double chart_of(const Segment& s, const Vec2& point) {
    return std::clamp(dot(point - s.a, s.tangent), 0.0, s.length);
}

inline double chart_of(const Arc& a, const Vec2& point) {
    const Vec2 q = point - a.center;
    double w = wrap_2pi(std::atan2(q[1], q[0]) - a.theta0);
    if (!a.closed && w > (a.theta1 - a.theta0)) {
        // clamp just-past-the-end hits to the nearest endpoint
        w = (2 * M_PI - w < w - (a.theta1 - a.theta0)) ? 0.0 : a.theta1 - a.theta0;
    }
    return std::clamp(w * a.radius, 0.0, a.length);
}

inline double chart_of(const Piece<2>& p, const Vec2& point) {
    return std::visit([&](const auto& x) { return chart_of(x, point); }, p);
}

/// Distance from the chart point to the piece boundary (arc length units).
/// Closed arcs have no boundary.
inline double edge_distance(const Piece<2>& p, double r) {
    if (const auto* a = std::get_if<Arc>(&p); a && a->closed)
        return std::numeric_limits<double>::infinity();
    const double len = piece_measure<2>(p);
    return std::min(r, len - r);
}

struct Frame3 {
    Vec3 point, normal;
    Vec2 chart;
};

inline Frame3 frame3_at(const Facet& f, const Vec2& uv) {
    const Vec3 point = f.origin + f.e1 * uv[0] + f.e2 * uv[1];
    return {point, f.inward, uv};
}

inline Vec2 chart_of(const Facet& f, const Vec3& point) {
    const Vec3 d = point - f.origin;
    return {{dot(d, f.e1), dot(d, f.e2)}};
}

inline Vec2 chart_of(const SphericalPatch& sp, const Vec3& point) {
    const Vec3 q = normalized(point - sp.center);
    const double theta = std::acos(std::clamp(dot(q, sp.axis), -1.0, 1.0));
    const double psi = std::atan2(dot(q, sp.w2), dot(q, sp.w1));
    return {{sp.radius * theta, psi}};
}

inline Vec2 chart_of(const Piece<3>& p, const Vec3& point) {
    return std::visit([&](const auto& x) { return chart_of(x, point); }, p);
}

inline double edge_distance(const Piece<3>& p, const Vec2& chart) {
    if (const auto* f = std::get_if<Facet>(&p)) return f->chart_edge_distance(chart);
    const auto& sp = std::get<SphericalPatch>(p);
    return sp.radius * sp.half_angle() - chart[0];
}

// --- uniform boundary sampling ----------------------------------------------

inline Vec2 sample_point(const Segment& s, Rng& rng) {
    return s.a + s.tangent * (rng.uniform01() * s.length);
}

inline Vec2 sample_point(const Arc& a, Rng& rng) {
    const double th = a.theta0 + rng.uniform01() * (a.theta1 - a.theta0);
    return a.center + Vec2{{std::cos(th), std::sin(th)}} * a.radius;
}

inline Vec3 sample_point(const Facet& f, Rng& rng) {
    Vec2 lo{{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()}};
    Vec2 hi = -lo;
    for (const auto& v : f.verts2) {
        for (int i = 0; i < 2; ++i) {
            lo[i] = std::min(lo[i], v[i]);
            hi[i] = std::max(hi[i], v[i]);
        }
    }
    for (long k = 0; k < 1000000; ++k) {
        const Vec2 uv{{rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1])}};
        if (!f.chart_in_polygon(uv)) continue;
        bool in_hole = false;
        for (std::size_t i = 0; i < f.holes2.size(); ++i)
            if (norm(uv - f.holes2[i]) < f.holes[i].radius) in_hole = true;
        if (in_hole) continue;
        return f.origin + f.e1 * uv[0] + f.e2 * uv[1];
    }
    throw std::runtime_error("facet sampling failed: rejection cap exceeded");
}

inline Vec3 sample_point(const SphericalPatch& sp, Rng& rng) {
    const double ct = rng.uniform(sp.cos_half, 1.0);  // uniform in area
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    const double psi = rng.uniform(0.0, 2 * M_PI);
    const Vec3 dir = sp.axis * ct + (sp.w1 * std::cos(psi) + sp.w2 * std::sin(psi)) * st;
    return sp.center + dir * sp.radius;
}

template <int D>
inline Vec<D> sample_point(const Piece<D>& p, Rng& rng) {
    return std::visit([&](const auto& x) { return sample_point(x, rng); }, p);
}

// --- divergence-theorem flux terms for exact subdomain measures --------------
// flux_term(piece, ref) = integral over the piece of (x - ref) . n_out, where
// n_out = -inward. Summed over a closed boundary this equals d * volume.

inline double flux_term(const Segment& s, const Vec2& ref) {
    const Vec2 n_out = -s.inward;
    return dot(s.a - ref, n_out) * s.length;
}

inline double flux_term(const Arc& a, const Vec2& ref) {
    const double sigma = a.normal_toward_center ? 1.0 : -1.0;  // n_out = sigma * radial
    const Vec2 I{{std::sin(a.theta1) - std::sin(a.theta0),
                  -(std::cos(a.theta1) - std::cos(a.theta0))}};
    return sigma * a.radius * (dot(a.center - ref, I) + a.radius * (a.theta1 - a.theta0));
}

inline double flux_term(const Facet& f, const Vec3& ref) {
    return dot(f.origin - ref, -f.inward) * f.area;
}

inline double flux_term(const SphericalPatch& sp, const Vec3& ref) {
    const double sigma = sp.normal_toward_center ? 1.0 : -1.0;
    const double sin2 = 1.0 - sp.cos_half * sp.cos_half;
    const double vec_area = M_PI * sp.radius * sp.radius * sin2;  // |integral of radial dA|
    return sigma * (dot(sp.center - ref, sp.axis) * vec_area + sp.radius * sp.area);
}

template <int D>
inline double flux_term(const Piece<D>& p, const Vec<D>& ref) {
    return std::visit([&](const auto& x) { return flux_term(x, ref); }, p);
}

// --- bounding boxes -----------------------------------------------------------

template <int D>
struct BBox {
    Vec<D> lo, hi;
    void expand(const Vec<D>& p) {
        for (int i = 0; i < D; ++i) {
            lo[i] = std::min(lo[i], p[i]);
            hi[i] = std::max(hi[i], p[i]);
        }
    }
    static BBox empty() {
        BBox b;
        for (int i = 0; i < D; ++i) {
            b.lo[i] = std::numeric_limits<double>::infinity();
            b.hi[i] = -std::numeric_limits<double>::infinity();
        }
        return b;
    }
};

inline BBox<2> piece_bbox(const Segment& s) {
    auto b = BBox<2>::empty();
    b.expand(s.a);
    b.expand(s.b);
    return b;
}

inline BBox<2> piece_bbox(const Arc& a) {
    auto b = BBox<2>::empty();
    const double range = a.theta1 - a.theta0;
    b.expand(a.center + Vec2{{std::cos(a.theta0), std::sin(a.theta0)}} * a.radius);
    b.expand(a.center + Vec2{{std::cos(a.theta1), std::sin(a.theta1)}} * a.radius);
    for (int k = 0; k < 4; ++k) {  // axis extremes inside the range
        const double ax = k * M_PI / 2;
        const double w = wrap_2pi(ax - a.theta0);
        if (a.closed || w <= range)
            b.expand(a.center + Vec2{{std::cos(ax), std::sin(ax)}} * a.radius);
    }
    return b;
}

inline BBox<3> piece_bbox(const Facet& f) {
    auto b = BBox<3>::empty();
    for (const auto& v : f.verts) b.expand(v);
    return b;
}

inline BBox<3> piece_bbox(const SphericalPatch& sp) {
    auto b = BBox<3>::empty();
    b.expand(sp.center + sp.axis * sp.radius);  // apex
    const double st = std::sqrt(std::max(0.0, 1.0 - sp.cos_half * sp.cos_half));
    const Vec3 rim_c = sp.center + sp.axis * (sp.radius * sp.cos_half);
    for (int i = 0; i < 3; ++i) {
        const double ext = sp.radius * st * std::sqrt(std::max(0.0, 1.0 - sp.axis[i] * sp.axis[i]));
        Vec3 plus = rim_c, minus = rim_c;
        plus[i] += ext;
        minus[i] -= ext;
        b.expand(plus);
        b.expand(minus);
    }
    for (int i = 0; i < 3; ++i) {  // global sphere extremes lying on the cap
        for (double s : {-1.0, 1.0}) {
            if (s * sp.axis[i] >= sp.cos_half) {
                Vec3 p = sp.center;
                p[i] += s * sp.radius;
                b.expand(p);
            }
        }
    }
    return b;
}

template <int D>
inline BBox<D> piece_bbox(const Piece<D>& p) {
    return std::visit([](const auto& x) { return piece_bbox(x); }, p);
}

// ---------------------------------------------------------------------------
// Domain: an immutable closed boundary-piece set answering first-intersection
// and membership queries. Read-only after construction, safe to share across
// threads.
// ---------------------------------------------------------------------------

template <int D>
struct Hit {
    double t = 0;  // in units of the query direction vector
    int piece = -1;
    Vec<D> point{};
    Vec<D> normal{};        // inward unit normal at the hit
    bool singular = false;  // near a piece boundary or tangential
};

template <int D>
class Domain {
  public:
    Domain() = default;
    Domain(std::vector<Piece<D>> pieces, int piston_piece)
        : pieces_(std::move(pieces)), piston_(piston_piece) {
        bbox_ = BBox<D>::empty();
        for (const auto& p : pieces_) {
            const double m = piece_measure<D>(p);
            boundary_measure_ += m;
            cumulative_.push_back(boundary_measure_);
            const auto b = piece_bbox<D>(p);
            bbox_.expand(b.lo);
            bbox_.expand(b.hi);
        }
    }

    const std::vector<Piece<D>>& pieces() const { return pieces_; }
    int piston_piece() const { return piston_; }
    double boundary_measure() const { return boundary_measure_; }
    const BBox<D>& bbox() const { return bbox_; }

    /// First boundary crossing from `origin` along `dir` with parameter
    /// t > t_min. Throws if no piece is crossed (possible only for corrupt,
    /// non-watertight geometry).
    Hit<D> first_hit(const Vec<D>& origin, const Vec<D>& dir, double t_min = kHitTol) const {
        std::vector<RayCrossing> xs;
        double best_t = std::numeric_limits<double>::infinity();
        double second_t = best_t;
        int best_piece = -1;
        bool best_near = false;
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            xs.clear();
            ray_crossings<D>(pieces_[i], origin, dir, t_min, xs);
            for (const auto& c : xs) {
                if (c.t < best_t) {
                    second_t = best_t;
                    best_t = c.t;
                    best_piece = static_cast<int>(i);
                    best_near = c.near_edge;
                } else if (c.t < second_t) {
                    second_t = c.t;
                }
            }
        }
        if (best_piece < 0)
            throw std::logic_error("first_hit: ray escapes the domain (geometry corrupt)");
        Hit<D> h;
        h.t = best_t;
        h.piece = best_piece;
        h.point = origin + dir * best_t;
        h.normal = inward_normal_at<D>(pieces_[best_piece], h.point);
        const double graze = std::fabs(dot(dir, h.normal)) / norm(dir);
        h.singular = best_near || graze < kGrazeTol ||
                     (second_t - best_t) < kHitTol;  // simultaneous-hit tie
        return h;
    }

    /// Even-odd membership test via ray crossings. Retries with a different
    /// ray direction whenever a crossing is ambiguous (tangency or near an
    /// edge).
    bool contains(const Vec<D>& p) const {
        std::vector<RayCrossing> xs;
        for (int attempt = 0; attempt < 16; ++attempt) {
            const Vec<D> dir = probe_direction(attempt);
            long count = 0;
            bool ambiguous = false;
            for (const auto& piece : pieces_) {
                xs.clear();
                ray_crossings<D>(piece, p, dir, kHitTol, xs);
                for (const auto& c : xs) {
                    if (c.near_edge) ambiguous = true;
                    ++count;
                }
            }
            if (!ambiguous) return count % 2 == 1;
        }
        throw std::runtime_error("contains: all probe rays ambiguous");
    }

    /// Pick a piece index with probability proportional to its measure.
    int sample_piece(Rng& rng) const {
        const double u = rng.uniform01() * boundary_measure_;
        const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), u);
        return static_cast<int>(std::min<std::size_t>(
            static_cast<std::size_t>(it - cumulative_.begin()), pieces_.size() - 1));
    }

    /// Uniform point in the domain by rejection sampling in the bounding box.
    Vec<D> sample_interior(Rng& rng) const {
        for (long k = 0; k < 1000000; ++k) {
            Vec<D> p;
            for (int i = 0; i < D; ++i) p[i] = rng.uniform(bbox_.lo[i], bbox_.hi[i]);
            if (contains(p)) return p;
        }
        throw std::runtime_error("sample_interior: rejection cap exceeded");
    }

  private:
    static Vec<D> probe_direction(int attempt) {
        // fixed irrational-angle directions, deterministic retry sequence
        const double a = 0.7390851332151607 + 0.591 * attempt;
        if constexpr (D == 2) {
            return {{std::cos(a), std::sin(a)}};
        } else {
            const double b = 1.234567 + 0.377 * attempt;
            const double cz = std::cos(b) * 0.77;
            const double s = std::sqrt(1 - cz * cz);
            return {{s * std::cos(a), s * std::sin(a), cz}};
        }
    }

    std::vector<Piece<D>> pieces_;
    int piston_ = -1;
    double boundary_measure_ = 0;
    std::vector<double> cumulative_;
    BBox<D> bbox_{};
};

}  // namespace piston
