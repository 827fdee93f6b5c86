#pragma once

#include <atomic>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <thread>
#include <vector>

#include "piston/averaged.hpp"
#include "piston/microsim.hpp"
#include "piston/stats.hpp"

namespace piston {

/// Thrown when more than the allowed fraction of samples had to be excluded
/// (singular trajectories); mapped to a dedicated process exit code.
struct ExclusionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Full description of a convergence experiment.
template <int D>
struct Experiment {
    Container<D> container;
    int n1 = 1, n2 = 1;
    SlowState h0;
    VBounds V;
    double C1 = 0;  // 0 => paper default 5*sqrt(2*E_max)
    double T = 1.0;
    double dtau = 1e-3;
    std::vector<double> deltas{0.1};
    std::vector<double> eps_grid{0.2, 0.1, 0.05};
    long samples = 100;
    std::uint64_t seed = 1;
    int jobs = 1;

    void validate() const {
        V.validate();
        if (n1 < 1 || n2 < 1) throw std::invalid_argument("need at least one particle per side");
        if (h0.E1.size() != static_cast<std::size_t>(n1) ||
            h0.E2.size() != static_cast<std::size_t>(n2))
            throw std::invalid_argument("initial energies do not match particle counts");
        // strict interiority, so the coupled paths start away from every face of V
        bool strict = h0.Q > V.Q_min && h0.Q < V.Q_max && std::fabs(h0.W) < V.W_bound;
        for (double e : h0.E1) strict = strict && e > V.E_floor;
        for (double e : h0.E2) strict = strict && e > V.E_floor;
        const double tot = h0.total_energy();
        strict = strict && tot > V.E_min && tot < V.E_max;
        if (!strict) throw std::invalid_argument("initial slow state not strictly inside V");
        if (eps_grid.empty()) throw std::invalid_argument("eps grid empty");
        for (std::size_t i = 1; i < eps_grid.size(); ++i)
            if (!(eps_grid[i] < eps_grid[i - 1]))
                throw std::invalid_argument("eps grid must be strictly decreasing");
        for (double e : eps_grid)
            if (!(e > 0 && e <= 1)) throw std::invalid_argument("eps values must lie in (0,1]");
        if (samples < 10) throw std::invalid_argument("need at least 10 samples per eps");
        if (deltas.empty()) throw std::invalid_argument("deltas empty");
        for (double d : deltas)
            if (!(d > 0)) throw std::invalid_argument("deltas must be positive");
        if (!(T > 0) || !(dtau > 0) || dtau > T)
            throw std::invalid_argument("need 0 < dtau <= T");
        if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
    }
};

/// Draw a micro state from the fiber measure at fixed slow variables h0:
/// particle positions uniform in their subdomain, velocity directions
/// uniform, speeds sqrt(2 E_ij(0)). The slow variables of the sample equal
/// h0 exactly, matching the coupling h_bar(0) = h_eps(0).
template <int D>
MicroState<D> sample_initial(const Container<D>& c, const SlowState& h0, double eps, Rng& rng) {
    MicroState<D> s;
    s.eps = eps;
    s.Q = h0.Q;
    s.W = h0.W;
    for (int side = 1; side <= 2; ++side) {
        const auto& energies = side == 1 ? h0.E1 : h0.E2;
        const BBox<D> bb = c.side_bbox(side, h0.Q);
        for (double E : energies) {
            typename MicroState<D>::Particle p;
            bool placed = false;
            for (long k = 0; k < 1000000; ++k) {
                for (int i = 0; i < D; ++i) p.q[i] = rng.uniform(bb.lo[i], bb.hi[i]);
                if (c.side_contains(side, h0.Q, p.q)) {
                    placed = true;
                    break;
                }
            }
            if (!placed) throw std::runtime_error("initial-condition rejection cap exceeded");
            p.v = rng.template unit_vector<D>() * std::sqrt(2.0 * E);
            s.side[side - 1].push_back(p);
        }
    }
    return s;
}

struct SampleResult {
    std::uint64_t seed = 0;
    double D_sup = 0;  // sup over the stopped window of the weighted deviation
    StopKind stop = StopKind::None;
    double stop_tau = 0;
    long piston_collisions = 0;
    double clean_fraction = 1.0;
    bool singular = false;
    bool bad_set = false;  // T_tilde fired strictly before min(T, T_eps)
};

/// Run one coupled (micro, averaged) pair and form the sup-deviation
/// statistic of the slow paths over the stopped window.
template <int D>
SampleResult run_pair(const Experiment<D>& exp, double eps, std::uint64_t seed) {
    Rng rng(seed);
    SampleResult out;
    out.seed = seed;

    MicroState<D> micro = sample_initial(exp.container, exp.h0, eps, rng);
    StopClock clock;
    clock.V = exp.V;
    clock.C1 = exp.C1;
    clock.T = exp.T;
    RunOptions opt;
    opt.dtau = exp.dtau;
    opt.record_path = true;
    const TrajectoryRecord rec = run_trajectory(exp.container, micro, clock, opt);

    out.stop = rec.stop;
    out.stop_tau = rec.stop_tau;
    out.piston_collisions = rec.piston_events;
    out.clean_fraction = rec.piston_events > 0
                             ? static_cast<double>(rec.clean_events) /
                                   static_cast<double>(rec.piston_events)
                             : 1.0;
    if (rec.stop == StopKind::Singular) {
        out.singular = true;
        return out;
    }

    const AveragedPath avg = integrate_averaged(exp.container, exp.h0, exp.T, exp.dtau, &exp.V);

    // T_eps is evaluated on both paths (grid-resolution truncation)
    const double tau_V = std::min(rec.tau_V, avg.exit_tau);
    const double tau_stop = std::min({exp.T, tau_V, rec.tau_left, rec.tau_right});
    out.stop_tau = tau_stop;
    if (tau_stop >= exp.T) out.stop = StopKind::None;
    else if (tau_V <= std::min(rec.tau_left, rec.tau_right)) out.stop = StopKind::VExit;
    else out.stop = rec.tau_left <= rec.tau_right ? StopKind::LeftTangent : StopKind::RightTangent;

    const std::size_t n = std::min(rec.path.size(), avg.states.size());
    double d = 0;
    for (std::size_t g = 0; g < n; ++g) {
        if (rec.tau[g] > tau_stop + 1e-12) break;
        d = std::max(d, weighted_distance(rec.path[g], avg.states[g], exp.V));
    }
    out.D_sup = d;
    out.bad_set = std::min(rec.tau_left, rec.tau_right) < std::min(exp.T, tau_V);
    return out;
}

struct DeltaStat {
    double delta = 0;
    double p = 0;
    Interval ci;
};

struct EpsStats {
    double eps = 0;
    long n_total = 0, n_excluded = 0;
    double median_D = 0;
    std::vector<DeltaStat> p_ge_delta;
    long bad_count = 0;
    double bad_fraction = 0;
    Interval bad_ci;
};

struct ConvergenceReport {
    std::vector<EpsStats> per_eps;
    std::vector<std::vector<SampleResult>> samples;  // [eps index][sample index]
    bool has_monotonicity = false;
    bool median_strictly_decreasing = false;
    std::vector<bool> p_nonincreasing_within_ci;  // per delta
    bool bad_fit_valid = false;
    LinearFit bad_fit;  // bad-set frequency vs eps
};

/// Run N independent samples for every eps on the grid (sample seeds are
/// base ^ index, so ensembles are coupled across eps values) and aggregate
/// the Theorem's statistics. Samples are distributed over a small worker
/// pool; the reduction order is fixed, so reports are bitwise reproducible.
template <int D>
ConvergenceReport convergence_experiment(const Experiment<D>& exp) {
    exp.validate();
    ConvergenceReport rep;
    const std::size_t ne = exp.eps_grid.size();
    const std::size_t ns = static_cast<std::size_t>(exp.samples);
    rep.samples.assign(ne, std::vector<SampleResult>(ns));

    std::atomic<std::size_t> cursor{0};
    const std::size_t total = ne * ns;
    const std::uint64_t base = mix_seed(exp.seed);  // scramble before XOR-ing indices
    auto worker = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= total) return;
            const std::size_t ei = i / ns, si = i % ns;
            const std::uint64_t seed = base ^ static_cast<std::uint64_t>(si);
            rep.samples[ei][si] = run_pair(exp, exp.eps_grid[ei], seed);
        }
    };
    if (exp.jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < exp.jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t ei = 0; ei < ne; ++ei) {
        EpsStats st;
        st.eps = exp.eps_grid[ei];
        st.n_total = exp.samples;
        std::vector<double> ds;
        for (const auto& r : rep.samples[ei]) {
            if (r.singular) {
                ++st.n_excluded;
                continue;
            }
            ds.push_back(r.D_sup);
            if (r.bad_set) ++st.bad_count;
        }
        if (st.n_excluded * 5 > st.n_total)
            throw ExclusionError("more than 20% of samples excluded as singular");
        st.median_D = median(ds);
        const long used = st.n_total - st.n_excluded;
        for (double delta : exp.deltas) {
            DeltaStat dstat;
            dstat.delta = delta;
            long cnt = 0;
            for (double d : ds)
                if (d >= delta) ++cnt;
            dstat.p = static_cast<double>(cnt) / static_cast<double>(used);
            dstat.ci = wilson_ci(cnt, used);
            st.p_ge_delta.push_back(dstat);
        }
        st.bad_fraction = static_cast<double>(st.bad_count) / static_cast<double>(used);
        st.bad_ci = wilson_ci(st.bad_count, used);
        rep.per_eps.push_back(st);
    }

    rep.has_monotonicity = ne > 1;
    if (rep.has_monotonicity) {
        rep.median_strictly_decreasing = true;
        for (std::size_t i = 1; i < ne; ++i)
            if (!(rep.per_eps[i].median_D < rep.per_eps[i - 1].median_D))
                rep.median_strictly_decreasing = false;
        for (std::size_t di = 0; di < exp.deltas.size(); ++di) {
            bool ok = true;
            for (std::size_t i = 1; i < ne; ++i) {
                const auto& a = rep.per_eps[i - 1].p_ge_delta[di];
                const auto& b = rep.per_eps[i].p_ge_delta[di];
                if (!(b.p <= a.p || b.ci.lo <= a.ci.hi)) ok = false;
            }
            rep.p_nonincreasing_within_ci.push_back(ok);
        }
        std::vector<double> xs, ys;
        for (const auto& st : rep.per_eps) {
            xs.push_back(st.eps);
            ys.push_back(st.bad_fraction);
        }
        rep.bad_fit = linear_fit(xs, ys);
        rep.bad_fit_valid = true;
    }
    return rep;
}

/// Per-eps frequency of T_tilde < T and T_eps, i.e. of the tangential
/// stopping conditions invalidating averaging before the horizon.
template <int D>
std::vector<EpsStats> bad_set_frequency(const Experiment<D>& exp) {
    return convergence_experiment(exp).per_eps;
}

}  // namespace piston
