#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "piston/geometry.hpp"

namespace piston {

/// Tube cross-section. 2D: interval [0, ell]. 3D: rectangle [0,a] x [0,b].
template <int D>
struct CrossSection;

template <>
struct CrossSection<2> {
    double ell = 1.0;  // interval length
    double measure() const { return ell; }
    double perimeter() const { return 2.0; }  // two tube walls per unit of axis
    bool contains(double y) const { return y > 0 && y < ell; }
};

template <>
struct CrossSection<3> {
    double a = 1.0, b = 1.0;  // rectangle sides
    double measure() const { return a * b; }
    double perimeter() const { return 2 * (a + b); }
    bool contains(double y, double z) const { return y > 0 && y < a && z > 0 && z < b; }
};

/// Gas container: a tube [0,1] x P swept by the piston, closed at x=0 and x=1
/// by cap regions built from boundary primitives (a flat end wall if the cap
/// list is empty). Construction validates watertightness; everything is
/// immutable afterwards and safe for concurrent reads.
template <int D>
class Container {
  public:
    Container(CrossSection<D> cs, std::vector<Piece<D>> left_cap, std::vector<Piece<D>> right_cap)
        : cs_(cs) {
        caps_[0] = std::move(left_cap);
        caps_[1] = std::move(right_cap);
        for (int side = 0; side < 2; ++side) {
            if (caps_[side].empty()) caps_[side].push_back(end_wall(side));
            for (auto& p : caps_[side]) finalize_piece(p);
            validate_cap(side);
            cap_measure_[side] = cap_measure(side);
            cap_boundary_[side] = 0;
            for (const auto& p : caps_[side]) cap_boundary_[side] += piece_measure<D>(p);
        }
        shell_ = build_shell();
    }

    double ell() const { return cs_.measure(); }
    const CrossSection<D>& cross_section() const { return cs_; }

    /// |D_i(Q)|: exact closed form, affine in Q with slope +-ell.
    double side_measure(int side, double Q) const {
        check_side_q(side, Q);
        return cap_measure_[side - 1] + ell() * (side == 1 ? Q : 1.0 - Q);
    }

    /// |dD_i(Q)|: cap boundary + tube walls + piston face.
    double side_boundary_measure(int side, double Q) const {
        check_side_q(side, Q);
        const double span = side == 1 ? Q : 1.0 - Q;
        return cap_boundary_[side - 1] + cs_.perimeter() * span + ell();
    }

    /// Boundary pieces of D_i(Q), piston face last. Piece order is stable:
    /// cap pieces, tube walls, piston.
    Domain<D> side_domain(int side, double Q) const {
        check_side_q(side, Q);
        std::vector<Piece<D>> pieces = caps_[side == 1 ? 0 : 1];
        const double x0 = side == 1 ? 0.0 : Q;
        const double x1 = side == 1 ? Q : 1.0;
        append_tube_walls(pieces, x0, x1);
        pieces.push_back(piston_face(side, Q));
        finalize_piece(pieces.back());
        return Domain<D>(std::move(pieces), static_cast<int>(pieces.size()) - 1);
    }

    /// All static boundary pieces of the full container (no piston face);
    /// used by the moving-piston simulation.
    const Domain<D>& shell() const { return shell_; }

    bool side_contains(int side, double Q, const Vec<D>& p) const {
        if (side == 1 ? p[0] >= Q : p[0] <= Q) return false;
        return shell_.contains(p);
    }

    BBox<D> side_bbox(int side, double Q) const {
        auto b = BBox<D>::empty();
        for (const auto& p : caps_[side == 1 ? 0 : 1]) {
            const auto pb = piece_bbox<D>(p);
            b.expand(pb.lo);
            b.expand(pb.hi);
        }
        Vec<D> lo{}, hi{};
        lo[0] = side == 1 ? 0.0 : Q;
        hi[0] = side == 1 ? Q : 1.0;
        if constexpr (D == 2) {
            hi[1] = cs_.ell;
        } else {
            hi[1] = cs_.a;
            hi[2] = cs_.b;
        }
        b.expand(lo);
        b.expand(hi);
        return b;
    }

    Piece<D> piston_face(int side, double Q) const {
        if constexpr (D == 2) {
            Segment s;
            s.a = {{Q, 0.0}};
            s.b = {{Q, cs_.ell}};
            s.inward = {{side == 1 ? -1.0 : 1.0, 0.0}};
            s.finalize();
            return s;
        } else {
            Facet f;
            f.verts = {{{Q, 0, 0}}, {{Q, cs_.a, 0}}, {{Q, cs_.a, cs_.b}}, {{Q, 0, cs_.b}}};
            f.inward = {{side == 1 ? -1.0 : 1.0, 0.0, 0.0}};
            f.finalize();
            return f;
        }
    }

  private:
    static void finalize_piece(Piece<D>& p) {
        std::visit([](auto& x) { x.finalize(); }, p);
    }

    static void check_side_q(int side, double Q) {
        if (side != 1 && side != 2) throw std::invalid_argument("side must be 1 or 2");
        if (!(Q >= 0.0 && Q <= 1.0)) throw std::domain_error("piston position outside [0,1]");
    }

    Piece<D> end_wall(int side) const {
        const double x = side == 0 ? 0.0 : 1.0;
        if constexpr (D == 2) {
            Segment s;
            s.a = {{x, 0.0}};
            s.b = {{x, cs_.ell}};
            s.inward = {{side == 0 ? 1.0 : -1.0, 0.0}};
            return s;
        } else {
            Facet f;
            f.verts = {{{x, 0, 0}}, {{x, cs_.a, 0}}, {{x, cs_.a, cs_.b}}, {{x, 0, cs_.b}}};
            f.inward = {{side == 0 ? 1.0 : -1.0, 0.0, 0.0}};
            return f;
        }
    }

    void append_tube_walls(std::vector<Piece<D>>& pieces, double x0, double x1) const {
        if (x1 - x0 <= kHitTol) return;  // piston flush against the cap interface
        if constexpr (D == 2) {
            Segment bot, top;
            bot.a = {{x0, 0.0}};
            bot.b = {{x1, 0.0}};
            bot.inward = {{0.0, 1.0}};
            top.a = {{x0, cs_.ell}};
            top.b = {{x1, cs_.ell}};
            top.inward = {{0.0, -1.0}};
            pieces.push_back(bot);
            pieces.push_back(top);
        } else {
            const double a = cs_.a, b = cs_.b;
            Facet f1, f2, f3, f4;
            f1.verts = {{{x0, 0, 0}}, {{x1, 0, 0}}, {{x1, 0, b}}, {{x0, 0, b}}};
            f1.inward = {{0, 1, 0}};
            f2.verts = {{{x0, a, 0}}, {{x1, a, 0}}, {{x1, a, b}}, {{x0, a, b}}};
            f2.inward = {{0, -1, 0}};
            f3.verts = {{{x0, 0, 0}}, {{x1, 0, 0}}, {{x1, a, 0}}, {{x0, a, 0}}};
            f3.inward = {{0, 0, 1}};
            f4.verts = {{{x0, 0, b}}, {{x1, 0, b}}, {{x1, a, b}}, {{x0, a, b}}};
            f4.inward = {{0, 0, -1}};
            for (auto f : {f1, f2, f3, f4}) pieces.push_back(f);
        }
        const std::size_t first_new = pieces.size() - (D == 2 ? 2 : 4);
        for (std::size_t i = first_new; i < pieces.size(); ++i) finalize_piece(pieces[i]);
    }

    Domain<D> build_shell() const {
        std::vector<Piece<D>> pieces = caps_[0];
        for (const auto& p : caps_[1]) pieces.push_back(p);
        append_tube_walls(pieces, 0.0, 1.0);
        return Domain<D>(std::move(pieces), -1);
    }

    // Exact cap measure by the divergence theorem about a reference point on
    // the interface plane (the interface facet contributes zero there).
    double cap_measure(int side) const {
        Vec<D> ref{};
        ref[0] = side == 0 ? 0.0 : 1.0;
        double flux = 0;
        for (const auto& p : caps_[side]) flux += flux_term<D>(p, ref);
        const double m = flux / D;
        if (m < -1e-9) throw std::invalid_argument("cap pieces enclose negative measure");
        return std::max(0.0, m);
    }

    // Watertightness: every open piece edge must be shared with another piece
    // or lie on the tube interface. Pieces must stay on their side of the
    // interface plane.
    void validate_cap(int side) {
        const double xi = side == 0 ? 0.0 : 1.0;
        for (const auto& p : caps_[side]) {
            const auto bb = piece_bbox<D>(p);
            const bool ok = side == 0 ? bb.hi[0] <= xi + 1e-9 : bb.lo[0] >= xi - 1e-9;
            if (!ok)
                throw std::invalid_argument("cap piece crosses the tube interface plane");
        }
        if constexpr (D == 2) {
            std::map<std::pair<std::int64_t, std::int64_t>, int> count;
            auto add = [&](const Vec2& v) {
                count[{llround(v[0] * 1e9), llround(v[1] * 1e9)}] += 1;
            };
            add({{xi, 0.0}});       // interface corners
            add({{xi, cs_.ell}});
            for (const auto& p : caps_[side]) {
                if (const auto* s = std::get_if<Segment>(&p)) {
                    add(s->a);
                    add(s->b);
                } else {
                    const auto& a = std::get<Arc>(p);
                    if (a.closed) continue;
                    add(a.center + Vec2{{std::cos(a.theta0), std::sin(a.theta0)}} * a.radius);
                    add(a.center + Vec2{{std::cos(a.theta1), std::sin(a.theta1)}} * a.radius);
                }
            }
            for (const auto& [k, c] : count)
                if (c % 2 != 0)
                    throw std::invalid_argument("cap boundary not watertight: unmatched endpoint");
        } else {
            validate_cap_3d(side, xi);
        }
    }

    void validate_cap_3d(int side, double xi) {
        // facet edges pair up (including the interface rectangle's edges);
        // every spherical patch rim matches exactly one facet hole.
        using Key = std::array<std::int64_t, 6>;
        auto key_of = [](Vec3 u, Vec3 v) {
            std::array<std::int64_t, 3> ku{llround(u[0] * 1e9), llround(u[1] * 1e9),
                                           llround(u[2] * 1e9)};
            std::array<std::int64_t, 3> kv{llround(v[0] * 1e9), llround(v[1] * 1e9),
                                           llround(v[2] * 1e9)};
            if (kv < ku) std::swap(ku, kv);
            return Key{ku[0], ku[1], ku[2], kv[0], kv[1], kv[2]};
        };
        std::map<Key, int> edges;
        const Vec3 i0{{xi, 0, 0}}, i1{{xi, cs_.a, 0}}, i2{{xi, cs_.a, cs_.b}}, i3{{xi, 0, cs_.b}};
        edges[key_of(i0, i1)] += 1;
        edges[key_of(i1, i2)] += 1;
        edges[key_of(i2, i3)] += 1;
        edges[key_of(i3, i0)] += 1;
        std::vector<std::pair<Vec3, double>> holes;  // (center, radius) awaiting a rim
        std::vector<std::pair<Vec3, double>> rims;
        for (const auto& p : caps_[side]) {
            if (const auto* f = std::get_if<Facet>(&p)) {
                for (std::size_t i = 0; i < f->verts.size(); ++i)
                    edges[key_of(f->verts[i], f->verts[(i + 1) % f->verts.size()])] += 1;
                for (const auto& h : f->holes) holes.push_back({h.center, h.radius});
            } else {
                const auto& sp = std::get<SphericalPatch>(p);
                const Vec3 rim_center = sp.center + sp.axis * (sp.radius * sp.cos_half);
                const double rim_radius =
                    sp.radius * std::sqrt(std::max(0.0, 1.0 - sp.cos_half * sp.cos_half));
                rims.push_back({rim_center, rim_radius});
            }
        }
        for (const auto& [k, c] : edges)
            if (c % 2 != 0)
                throw std::invalid_argument("cap boundary not watertight: unmatched facet edge");
        if (holes.size() != rims.size())
            throw std::invalid_argument("cap holes and patch rims do not match up");
        for (const auto& [hc, hr] : holes) {
            bool matched = false;
            for (const auto& [rc, rr] : rims)
                if (norm(hc - rc) < 1e-9 && std::fabs(hr - rr) < 1e-9) matched = true;
            if (!matched)
                throw std::invalid_argument("facet hole has no matching spherical patch rim");
        }
    }

    CrossSection<D> cs_;
    std::array<std::vector<Piece<D>>, 2> caps_;  // [0]=left (x<=0), [1]=right (x>=1)
    double cap_measure_[2] = {0, 0};
    double cap_boundary_[2] = {0, 0};
    Domain<D> shell_;
};

}  // namespace piston
