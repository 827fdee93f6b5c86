#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace piston {

/// The slow macroscopic variables h = (Q, W, E_{1,j}, E_{2,j}).
/// W = V/eps is the scaled piston velocity; E_{i,j} = |v_{i,j}|^2 / 2.
struct SlowState {
    double Q = 0;
    double W = 0;
    std::vector<double> E1, E2;  // per-particle energies, by side

    double total1() const {
        double s = 0;
        for (double e : E1) s += e;
        return s;
    }
    double total2() const {
        double s = 0;
        for (double e : E2) s += e;
        return s;
    }
    double total_energy() const { return 0.5 * W * W + total1() + total2(); }
};

/// The compact good set V: box bounds on Q, W and the per-particle energies,
/// plus bounds on the conserved total W^2/2 + E1 + E2.
struct VBounds {
    double Q_min = 0.05, Q_max = 0.95;
    double W_bound = 2.0;
    double E_floor = 0.01;    // per-particle energy floor
    double E_min = 0.0, E_max = 0.0;

    bool contains(const SlowState& h) const {
        if (!(h.Q >= Q_min && h.Q <= Q_max)) return false;
        if (!(std::fabs(h.W) <= W_bound)) return false;
        for (double e : h.E1)
            if (!(e >= E_floor)) return false;
        for (double e : h.E2)
            if (!(e >= E_floor)) return false;
        const double tot = h.total_energy();
        return tot >= E_min && tot <= E_max;
    }

    void validate() const {
        if (!(Q_min > 0 && Q_min < Q_max && Q_max < 1))
            throw std::invalid_argument("V bounds: need 0 < Q_min < Q_max < 1");
        if (!(W_bound > 0)) throw std::invalid_argument("V bounds: W_bound must be positive");
        if (!(E_floor > 0)) throw std::invalid_argument("V bounds: E_floor must be positive");
        if (!(E_min >= 0 && E_min < E_max))
            throw std::invalid_argument("V bounds: need 0 <= E_min < E_max");
    }
};

/// Weighted max-norm distance between slow states. Per-particle energies are
/// compared as sorted multisets per side: the averaged flow preserves energy
/// ordering while the exact dynamics can swap particle roles.
inline double weighted_distance(const SlowState& a, const SlowState& b, const VBounds& v) {
    if (a.E1.size() != b.E1.size() || a.E2.size() != b.E2.size())
        throw std::invalid_argument("weighted_distance: particle count mismatch");
    double d = std::fabs(a.Q - b.Q) / (v.Q_max - v.Q_min);
    d = std::max(d, std::fabs(a.W - b.W) / v.W_bound);
    auto side = [&](std::vector<double> x, std::vector<double> y) {
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        double m = 0;
        for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(x[i] - y[i]));
        return m / v.E_max;
    };
    d = std::max(d, side(a.E1, b.E1));
    d = std::max(d, side(a.E2, b.E2));
    return d;
}

}  // namespace piston
