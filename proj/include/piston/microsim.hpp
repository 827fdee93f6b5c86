#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "piston/container.hpp"
#include "piston/state.hpp"

namespace piston {

/// Full phase point of the finite-mass system. The piston is stored through
/// W = V / eps; the mass is M = eps^-2.
template <int D>
struct MicroState {
    double t = 0;  // fast time
    double eps = 0.1;
    double Q = 0.5, W = 0;
    struct Particle {
        Vec<D> q, v;
    };
    std::array<std::vector<Particle>, 2> side;  // [0] left of piston, [1] right

    double piston_velocity() const { return eps * W; }

    /// Total energy (M/2)V^2 + sum |v|^2/2 = W^2/2 + sum |v|^2/2.
    double energy() const {
        double e = 0.5 * W * W;
        for (const auto& particles : side)
            for (const auto& p : particles) e += 0.5 * norm2(p.v);
        return e;
    }

    SlowState slow() const {
        SlowState h;
        h.Q = Q;
        h.W = W;
        for (const auto& p : side[0]) h.E1.push_back(0.5 * norm2(p.v));
        for (const auto& p : side[1]) h.E2.push_back(0.5 * norm2(p.v));
        return h;
    }

    /// Free-flight translation by dt: all positions move linearly, velocities
    /// unchanged. The caller guarantees no event inside the interval.
    void advance(double dt) {
        Q += eps * W * dt;
        for (auto& particles : side)
            for (auto& p : particles) p.q += p.v * dt;
        t += dt;
    }
};

/// Elastic particle-piston exchange in (v_perp, W) coordinates. Orthogonal,
/// so v_perp^2 + W^2 is preserved exactly up to rounding.
inline std::pair<double, double> resolve_particle_piston(double v_perp, double W, double eps) {
    const double e2 = eps * eps;
    const double inv = 1.0 / (1.0 + e2);
    return {((e2 - 1.0) * v_perp + 2.0 * eps * W) * inv,
            (2.0 * eps * v_perp + (1.0 - e2) * W) * inv};
}

enum class EventKind { ParticleWall, ParticlePiston, PistonEndWall };

struct CollisionEvent {
    double t = 0;
    EventKind kind = EventKind::ParticleWall;
    int side = 0;   // 1 or 2 for particle events, 0 otherwise
    int index = 0;  // particle index within the side
    double Q = 0;
    double V_pre = 0, V = 0;  // piston velocity before / after the event
    double v_perp_pre = 0, v_perp_post = 0;
    bool clean = false;  // piston collisions only
};

enum class StopKind { None, VExit, LeftTangent, RightTangent, Singular, EventBudget };

inline const char* stop_kind_name(StopKind k) {
    switch (k) {
        case StopKind::None: return "T";
        case StopKind::VExit: return "T_eps";
        case StopKind::LeftTangent: return "T_prime";
        case StopKind::RightTangent: return "T_dprime";
        case StopKind::Singular: return "singular";
        case StopKind::EventBudget: return "event_budget";
    }
    return "?";
}

/// Stopping-time bookkeeping. T' (resp. T'') fires when a left (right)
/// particle sits inside the tube between Q_min and the piston while its
/// normal velocity is below C1 * eps; T_eps fires when the slow state leaves
/// V (checked on the sampling grid only). T_tilde is the minimum of all of
/// them and the horizon.
struct StopClock {
    VBounds V;
    double C1 = 0;  // 0 => default 5*sqrt(2*E_max); negative => checks disabled
    double T = 1.0; // slow-time horizon
    // recorded firing times (slow time), +inf if not fired
    double tau_V = std::numeric_limits<double>::infinity();
    double tau_left = std::numeric_limits<double>::infinity();
    double tau_right = std::numeric_limits<double>::infinity();

    double c1_effective() const { return C1 > 0 ? C1 : 5.0 * std::sqrt(2.0 * V.E_max); }

    double t_tilde() const { return std::min({T, tau_V, tau_left, tau_right}); }

    bool fired() const { return t_tilde() < T; }

    /// Check the tangential-motion conditions at slow time tau; positions are
    /// taken at the corresponding fast time.
    template <int D>
    void check_tangent(const MicroState<D>& s, double dt_ahead, double tau) {
        if (C1 < 0) return;
        const double thresh = c1_effective() * s.eps;
        const double Qnow = s.Q + s.eps * s.W * dt_ahead;
        if (tau < tau_left && Qnow <= V.Q_max) {
            for (const auto& p : s.side[0]) {
                const double x = p.q[0] + p.v[0] * dt_ahead;
                if (x >= V.Q_min && x <= Qnow && std::fabs(p.v[0]) <= thresh) {
                    tau_left = tau;
                    break;
                }
            }
        }
        if (tau < tau_right && Qnow >= V.Q_min) {
            for (const auto& p : s.side[1]) {
                const double x = p.q[0] + p.v[0] * dt_ahead;
                if (x >= Qnow && x <= V.Q_max && std::fabs(p.v[0]) <= thresh) {
                    tau_right = tau;
                    break;
                }
            }
        }
    }
};

/// Next scheduled event batch: the minimal positive event time among
/// particle-wall hits, particle-piston crossings (the piston face treated as
/// a moving plane) and piston end-wall bounces, all solved in closed form.
/// Events tied within the hit tolerance are returned together; they commute
/// unless they share a participant (a triple collision, or the piston hit by
/// a particle exactly at an end wall), which is flagged singular.
template <int D>
struct SubEvent {
    EventKind kind = EventKind::ParticleWall;
    int side = 0, index = 0;
    Hit<D> hit{};
};

template <int D>
struct PendingEvent {
    double dt = std::numeric_limits<double>::infinity();
    std::vector<SubEvent<D>> batch;
    bool singular = false;
    bool any = false;
};

template <int D>
PendingEvent<D> next_event(const MicroState<D>& s, const Container<D>& container) {
    struct Candidate {
        double dt;
        SubEvent<D> ev;
    };
    std::vector<Candidate> cands;
    const double V = s.piston_velocity();
    const auto& shell = container.shell();
    for (int sd = 0; sd < 2; ++sd) {
        for (std::size_t j = 0; j < s.side[sd].size(); ++j) {
            const auto& p = s.side[sd][j];
            const Hit<D> h = shell.first_hit(p.q, p.v);
            cands.push_back({h.t, {EventKind::ParticleWall, sd + 1, static_cast<int>(j), h}});
            // moving piston plane: q_x + v_x t = Q + V t
            const double rel_v = sd == 0 ? p.v[0] - V : V - p.v[0];
            if (rel_v > 0) {
                const double gap = sd == 0 ? s.Q - p.q[0] : p.q[0] - s.Q;
                if (gap < -1e-9)
                    throw std::logic_error("particle found beyond the piston plane");
                // gap ~ 0 happens when the piston's velocity flipped while the
                // particle still sits on the face: collide immediately
                const double tp = std::max(gap, 0.0) / rel_v;
                bool on_face = true;
                bool near_rim = false;
                if constexpr (D == 2) {
                    const double y = p.q[1] + p.v[1] * tp;
                    on_face = container.cross_section().contains(y);
                    near_rim = std::fabs(y) < kEdgeTol ||
                               std::fabs(container.cross_section().ell - y) < kEdgeTol;
                } else {
                    const double y = p.q[1] + p.v[1] * tp;
                    const double z = p.q[2] + p.v[2] * tp;
                    on_face = container.cross_section().contains(y, z);
                    near_rim = std::min({std::fabs(y),
                                         std::fabs(container.cross_section().a - y),
                                         std::fabs(z),
                                         std::fabs(container.cross_section().b - z)}) < kEdgeTol;
                }
                if (on_face || near_rim) {
                    Hit<D> ph{};
                    ph.singular = near_rim;
                    cands.push_back(
                        {tp, {EventKind::ParticlePiston, sd + 1, static_cast<int>(j), ph}});
                }
            }
        }
    }
    if (V > 0)
        cands.push_back({(1.0 - s.Q) / V, {EventKind::PistonEndWall, 0, 0, Hit<D>{}}});
    if (V < 0) cands.push_back({-s.Q / V, {EventKind::PistonEndWall, 0, 0, Hit<D>{}}});

    PendingEvent<D> out;
    for (const auto& c : cands) out.dt = std::min(out.dt, c.dt);
    if (std::isinf(out.dt)) return out;
    out.any = true;
    for (const auto& c : cands)
        if (c.dt - out.dt < kHitTol) out.batch.push_back(c.ev);

    auto touches_piston = [](const SubEvent<D>& e) { return e.kind != EventKind::ParticleWall; };
    auto is_particle = [](const SubEvent<D>& e) { return e.kind != EventKind::PistonEndWall; };
    for (std::size_t i = 0; i < out.batch.size(); ++i) {
        if (out.batch[i].hit.singular) out.singular = true;
        for (std::size_t j = i + 1; j < out.batch.size(); ++j) {
            const auto& a = out.batch[i];
            const auto& b = out.batch[j];
            if (touches_piston(a) && touches_piston(b)) out.singular = true;
            if (is_particle(a) && is_particle(b) && a.side == b.side && a.index == b.index)
                out.singular = true;
        }
    }
    return out;
}

struct RunOptions {
    double dtau = 1e-3;       // slow-time sampling grid spacing
    bool record_path = true;
    bool record_events = false;
    long max_events = 0;      // 0 = unlimited
};

struct TrajectoryRecord {
    std::vector<double> tau;       // grid times actually sampled
    std::vector<SlowState> path;
    StopKind stop = StopKind::None;
    double stop_tau = 0;
    // individual stopping times (slow time, +inf if the condition never fired)
    double tau_V = std::numeric_limits<double>::infinity();
    double tau_left = std::numeric_limits<double>::infinity();
    double tau_right = std::numeric_limits<double>::infinity();
    long events = 0, wall_events = 0, piston_events = 0, piston_wall_events = 0;
    long clean_events = 0, unclean_events = 0;
    double energy_initial = 0, energy_drift_rel = 0;
    std::vector<CollisionEvent> log;
};

/// Run the event-driven dynamics to fast time T/eps or until a stopping
/// condition fires. Slow variables are sampled on the uniform slow-time grid
/// by exact free-flight interpolation. The state is advanced in place.
template <int D>
TrajectoryRecord run_trajectory(const Container<D>& container, MicroState<D>& s, StopClock clock,
                                const RunOptions& opt = {}) {
    TrajectoryRecord rec;
    rec.energy_initial = s.energy();
    const double eps = s.eps;
    const double t_end = clock.T / eps;
    long next_grid = 0;

    // records the grid point at slow time tau given the state dt ahead of s.t
    auto record_sample = [&](double tau, double dt_ahead) {
        SlowState h = s.slow();
        h.Q = s.Q + eps * s.W * dt_ahead;
        if (opt.record_path) {
            rec.tau.push_back(tau);
            rec.path.push_back(h);
        }
        if (tau < clock.tau_V && !clock.V.contains(h)) clock.tau_V = tau;
        clock.check_tangent(s, dt_ahead, tau);
    };

    // process grid points in (s.t, s.t + dt]; returns true if a stopping
    // condition fired at one of them
    auto sweep_grid = [&](double dt) -> bool {
        while (true) {
            const double tau_g = static_cast<double>(next_grid) * opt.dtau;
            const double tg_fast = tau_g / eps;
            if (tg_fast > s.t + dt + 1e-15) return false;
            record_sample(tau_g, tg_fast - s.t);
            ++next_grid;
            if (clock.t_tilde() < clock.T && clock.t_tilde() <= tau_g) return true;
        }
    };

    auto classify_stop = [&]() {
        const double tilde = clock.t_tilde();
        if (tilde >= clock.T) {
            rec.stop = StopKind::None;
            rec.stop_tau = clock.T;
        } else if (clock.tau_V <= tilde) {
            rec.stop = StopKind::VExit;
            rec.stop_tau = tilde;
        } else {
            rec.stop = clock.tau_left <= clock.tau_right ? StopKind::LeftTangent
                                                         : StopKind::RightTangent;
            rec.stop_tau = tilde;
        }
    };

    // tau = 0 sample
    if (sweep_grid(0)) {
        classify_stop();
        rec.energy_drift_rel = 0;
        rec.tau_V = clock.tau_V;
        rec.tau_left = clock.tau_left;
        rec.tau_right = clock.tau_right;
        return rec;
    }

    while (true) {
        const PendingEvent<D> ev = next_event(s, container);
        const double dt = std::min(ev.any ? ev.dt : std::numeric_limits<double>::infinity(),
                                   t_end - s.t);
        if (!(dt >= 0) || std::isinf(dt)) {
            rec.stop = StopKind::Singular;  // no event and no finite horizon: corrupt state
            rec.stop_tau = s.t * eps;
            break;
        }
        const bool event_within = ev.any && ev.dt <= t_end - s.t;

        if (sweep_grid(dt)) {
            classify_stop();
            break;
        }

        s.advance(dt);

        if (!event_within) {
            rec.stop = StopKind::None;
            rec.stop_tau = clock.T;
            break;
        }

        if (ev.singular) {
            rec.stop = StopKind::Singular;
            rec.stop_tau = s.t * eps;
            break;
        }

        for (const auto& sub : ev.batch) {
            ++rec.events;
            CollisionEvent logged;
            logged.t = s.t;
            logged.kind = sub.kind;
            logged.side = sub.side;
            logged.index = sub.index;
            logged.Q = s.Q;
            logged.V_pre = s.piston_velocity();
            logged.V = logged.V_pre;

            if (sub.kind == EventKind::ParticleWall) {
                auto& p = s.side[sub.side - 1][static_cast<std::size_t>(sub.index)];
                p.q = sub.hit.point;  // snap to the exact hit point
                logged.v_perp_pre = p.v[0];
                p.v = reflect(p.v, sub.hit.normal);
                logged.v_perp_post = p.v[0];
                ++rec.wall_events;
            } else if (sub.kind == EventKind::ParticlePiston) {
                auto& p = s.side[sub.side - 1][static_cast<std::size_t>(sub.index)];
                const double v_pre = p.v[0];
                const double W_pre = s.W;
                const bool approaching =
                    sub.side == 1 ? v_pre > eps * W_pre : v_pre < eps * W_pre;
                if (!approaching)
                    throw std::logic_error(
                        "particle-piston event without approach (scheduler bug)");
                const auto [v_post, W_post] = resolve_particle_piston(v_pre, W_pre, eps);
                p.v[0] = v_post;
                s.W = W_post;
                p.q[0] = s.Q;  // collision happens on the piston plane
                logged.v_perp_pre = v_pre;
                logged.v_perp_post = v_post;
                logged.V = s.piston_velocity();
                const double esc = eps * std::sqrt(2.0 * clock.V.E_max);
                logged.clean = sub.side == 1 ? (v_pre > 0 && v_post < -esc)
                                             : (v_pre < 0 && v_post > esc);
                ++rec.piston_events;
                if (logged.clean) ++rec.clean_events;
                else ++rec.unclean_events;
            } else {
                s.W = -s.W;
                logged.V = s.piston_velocity();
                ++rec.piston_wall_events;
            }
            if (opt.record_events) rec.log.push_back(logged);
        }

        // tangential-motion stopping conditions are also checked at events
        clock.check_tangent(s, 0.0, s.t * eps);
        if (clock.t_tilde() < clock.T && clock.t_tilde() <= s.t * eps) {
            classify_stop();
            break;
        }

        if (opt.max_events > 0 && rec.events >= opt.max_events) {
            rec.stop = StopKind::EventBudget;
            rec.stop_tau = s.t * eps;
            break;
        }
    }

    rec.energy_drift_rel =
        std::fabs(s.energy() - rec.energy_initial) / std::max(1e-300, rec.energy_initial);
    rec.tau_V = clock.tau_V;
    rec.tau_left = clock.tau_left;
    rec.tau_right = clock.tau_right;
    return rec;
}

}  // namespace piston
