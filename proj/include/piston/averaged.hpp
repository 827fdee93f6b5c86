#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "piston/container.hpp"
#include "piston/state.hpp"

namespace piston {

/// Right-hand side of the averaged equation in slow time:
///   dQ/dtau   = W
///   dW/dtau   = 2 E1 l / (d |D1|) - 2 E2 l / (d |D2|)
///   dE_ij/dtau = -+ 2 W E_ij l / (d |Di|)
/// with E_i the side totals.
template <int D>
SlowState averaged_vector_field(const Container<D>& c, const SlowState& h) {
    const double m1 = c.side_measure(1, h.Q);
    const double m2 = c.side_measure(2, h.Q);
    if (m1 <= 0 || m2 <= 0) throw std::domain_error("subdomain measure nonpositive");
    const double l = c.ell();
    SlowState out;
    out.Q = h.W;
    out.W = 2.0 * h.total1() * l / (D * m1) - 2.0 * h.total2() * l / (D * m2);
    out.E1.reserve(h.E1.size());
    out.E2.reserve(h.E2.size());
    for (double e : h.E1) out.E1.push_back(-2.0 * h.W * e * l / (D * m1));
    for (double e : h.E2) out.E2.push_back(+2.0 * h.W * e * l / (D * m2));
    return out;
}

/// Adiabatic energy law: E_i(Q) = E_i(0) (|D_i(Q0)| / |D_i(Q)|)^(2/d).
template <int D>
std::pair<double, double> adiabatic_energies(const Container<D>& c, const SlowState& h0,
                                             double Q) {
    const double p = 2.0 / D;
    const double e1 = h0.total1() * std::pow(c.side_measure(1, h0.Q) / c.side_measure(1, Q), p);
    const double e2 = h0.total2() * std::pow(c.side_measure(2, h0.Q) / c.side_measure(2, Q), p);
    return {e1, e2};
}

/// Effective potential of the piston coordinate given reference data h0.
template <int D>
double effective_potential(const Container<D>& c, const SlowState& h0, double Q) {
    const auto [e1, e2] = adiabatic_energies(c, h0, Q);
    return e1 + e2;
}

/// Conserved effective Hamiltonian W^2/2 + V_eff(Q; h0).
template <int D>
double effective_hamiltonian(const Container<D>& c, const SlowState& h, const SlowState& h0) {
    return 0.5 * h.W * h.W + effective_potential(c, h0, h.Q);
}

/// Analytic derivative of the effective potential.
template <int D>
double effective_potential_derivative(const Container<D>& c, const SlowState& h0, double Q) {
    const double p = 2.0 / D;
    const double l = c.ell();
    const double m1 = c.side_measure(1, Q);
    const double m2 = c.side_measure(2, Q);
    const double c1 = h0.total1() * std::pow(c.side_measure(1, h0.Q), p);
    const double c2 = h0.total2() * std::pow(c.side_measure(2, h0.Q), p);
    return -p * l * c1 * std::pow(m1, -p - 1.0) + p * l * c2 * std::pow(m2, -p - 1.0);
}

namespace detail {

inline std::vector<double> flatten(const SlowState& h) {
    std::vector<double> y;
    y.reserve(2 + h.E1.size() + h.E2.size());
    y.push_back(h.Q);
    y.push_back(h.W);
    for (double e : h.E1) y.push_back(e);
    for (double e : h.E2) y.push_back(e);
    return y;
}

inline SlowState unflatten(const std::vector<double>& y, std::size_t n1) {
    SlowState h;
    h.Q = y[0];
    h.W = y[1];
    h.E1.assign(y.begin() + 2, y.begin() + 2 + static_cast<long>(n1));
    h.E2.assign(y.begin() + 2 + static_cast<long>(n1), y.end());
    return h;
}

}  // namespace detail

struct AveragedPath {
    std::vector<double> tau;
    std::vector<SlowState> states;
    bool exited = false;      // left V (or the configuration space) before tau_end
    double exit_tau = std::numeric_limits<double>::infinity();
};

/// Classical fixed-step RK4 integration of the averaged equation, sampled on
/// the same slow-time grid the microsimulation uses. A step whose effective
/// Hamiltonian drift exceeds 1e-10 (relative) is retried with halved
/// substeps. Halts with the exit flag when the path leaves V.
template <int D>
AveragedPath integrate_averaged(const Container<D>& c, const SlowState& h0, double tau_end,
                                double dtau, const VBounds* bounds = nullptr) {
    if (!(dtau > 0)) throw std::invalid_argument("dtau must be positive");
    const std::size_t n1 = h0.E1.size();
    auto rhs = [&](const std::vector<double>& y) {
        return detail::flatten(averaged_vector_field(c, detail::unflatten(y, n1)));
    };
    auto rk4_step = [&](std::vector<double> y, double dt) {
        const auto k1 = rhs(y);
        std::vector<double> tmp(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
        const auto k2 = rhs(tmp);
        for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
        const auto k3 = rhs(tmp);
        for (std::size_t i = 0; i < y.size(); ++i) tmp[i] = y[i] + dt * k3[i];
        const auto k4 = rhs(tmp);
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        return y;
    };

    AveragedPath out;
    std::vector<double> y = detail::flatten(h0);
    const double h_ref = std::max(1.0, std::fabs(effective_hamiltonian(c, h0, h0)));
    const long steps = static_cast<long>(std::ceil(tau_end / dtau - 1e-9));
    out.tau.push_back(0);
    out.states.push_back(h0);
    if (bounds && !bounds->contains(h0)) {
        out.exited = true;
        out.exit_tau = 0;
        return out;
    }
    for (long k = 0; k < steps; ++k) {
        const double h_before = effective_hamiltonian(c, detail::unflatten(y, n1), h0);
        bool ok = false;
        std::vector<double> y_next;
        try {
            for (int halvings = 0; halvings <= 10; ++halvings) {
                const long nsub = 1L << halvings;
                y_next = y;
                for (long s = 0; s < nsub; ++s)
                    y_next = rk4_step(y_next, dtau / static_cast<double>(nsub));
                const double h_after = effective_hamiltonian(c, detail::unflatten(y_next, n1), h0);
                if (std::fabs(h_after - h_before) <= 1e-10 * h_ref) {
                    ok = true;
                    break;
                }
            }
        } catch (const std::domain_error&) {
            // stage left the configuration space entirely; treat as V exit
            out.exited = true;
            out.exit_tau = out.tau.back();
            return out;
        }
        if (!ok) throw std::runtime_error("averaged integrator: Hamiltonian drift persists");
        y = y_next;
        const SlowState h = detail::unflatten(y, n1);
        const double tau = static_cast<double>(k + 1) * dtau;
        out.tau.push_back(tau);
        out.states.push_back(h);
        if (bounds && !bounds->contains(h)) {
            out.exited = true;
            out.exit_tau = tau;
            return out;
        }
    }
    return out;
}

struct PeriodInfo {
    bool at_equilibrium = false;
    bool confining = false;
    double Q_star = std::numeric_limits<double>::quiet_NaN();
    double period = std::numeric_limits<double>::quiet_NaN();
    double Q_turn_lo = std::numeric_limits<double>::quiet_NaN();
    double Q_turn_hi = std::numeric_limits<double>::quiet_NaN();
};

/// Equilibrium position, oscillation period and turning points of the
/// effective one-degree-of-freedom motion defined by h0.
template <int D>
PeriodInfo period_and_equilibrium(const Container<D>& c, const SlowState& h0,
                                  double dtau = 1e-4) {
    if (h0.total1() <= 0 || h0.total2() <= 0)
        throw std::invalid_argument("period analysis needs positive energies on both sides");
    PeriodInfo info;
    auto dV = [&](double Q) { return effective_potential_derivative(c, h0, Q); };

    // V_eff' is strictly increasing, so bracket and bisect
    const double qa = 1e-9, qb = 1.0 - 1e-9;
    if (dV(qa) >= 0 || dV(qb) <= 0) {
        info.confining = false;  // force never balances inside the tube
        return info;
    }
    double lo = qa, hi = qb;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (dV(mid) < 0 ? lo : hi) = mid;
    }
    info.Q_star = 0.5 * (lo + hi);
    info.confining = true;

    if (std::fabs(h0.W) < 1e-12 && std::fabs(dV(h0.Q)) < 1e-12) {
        info.at_equilibrium = true;  // period undefined at the exact equilibrium
        info.Q_turn_lo = info.Q_turn_hi = h0.Q;
        return info;
    }

    // turning points from energy conservation: V_eff(Q) = H0
    const double H0 = 0.5 * h0.W * h0.W + effective_potential(c, h0, h0.Q);
    auto above = [&](double Q) { return effective_potential(c, h0, Q) - H0; };
    auto bisect_turn = [&](double a, double b) {
        // above(a) and above(b) have opposite signs
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (a + b);
            if ((above(a) > 0) == (above(mid) > 0)) a = mid;
            else b = mid;
        }
        return 0.5 * (a + b);
    };
    if (above(qa) <= 0 || above(qb) <= 0) {
        info.confining = false;  // energy reaches the tube ends
        return info;
    }
    const double q_from = std::min(h0.Q, info.Q_star), q_to = std::max(h0.Q, info.Q_star);
    info.Q_turn_lo = above(q_from) >= 0 ? q_from : bisect_turn(qa, q_from);
    info.Q_turn_hi = above(q_to) >= 0 ? q_to : bisect_turn(q_to, qb);

    // period: integrate and time the sign changes of W (turning points)
    for (double horizon = 16.0; horizon <= 4096.0; horizon *= 4) {
        const AveragedPath p = integrate_averaged(c, h0, horizon, dtau, nullptr);
        std::vector<double> zeros;
        for (std::size_t i = 1; i < p.states.size(); ++i) {
            const double w0 = p.states[i - 1].W, w1 = p.states[i].W;
            if ((w0 > 0 && w1 <= 0) || (w0 < 0 && w1 >= 0)) {
                const double f = w0 / (w0 - w1);
                zeros.push_back(p.tau[i - 1] + f * (p.tau[i] - p.tau[i - 1]));
            }
            if (zeros.size() >= 2) break;
        }
        if (zeros.size() >= 2) {
            info.period = 2.0 * (zeros[1] - zeros[0]);
            return info;
        }
    }
    throw std::runtime_error("period detection failed within the search horizon");
}

}  // namespace piston
