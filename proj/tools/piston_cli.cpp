// Command-line front end: single-trajectory simulation, averaged-equation
// integration, frozen-billiard verification, and the convergence experiment.
// All subcommands are deterministic given (config, seed).

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "piston/billiard.hpp"
#include "piston/config.hpp"
#include "piston/ensemble.hpp"
#include "piston/io.hpp"

namespace fs = std::filesystem;
using namespace piston;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "pistonsim 0.1.0";

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
};

std::string out_path(const CommonArgs& args, const char* name) {
    fs::create_directories(args.out_dir);
    return (fs::path(args.out_dir) / name).string();
}

// The manifest records provenance (including a timestamp) and is not part of
// the byte-reproducible primary outputs.
void write_manifest(const CommonArgs& args, const json& cfg, std::uint64_t seed,
                    const std::vector<std::string>& outputs) {
    json m;
    m["config_hash"] = hash_hex(config_hash(cfg));
    m["version"] = kVersion;
    m["seed"] = seed;
    const auto now = std::chrono::system_clock::now();
    m["timestamp_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    m["outputs"] = outputs;
    write_text_file(out_path(args, "run_manifest.json"), m.dump(2) + "\n");
}

const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::ParticleWall: return "wall";
        case EventKind::ParticlePiston: return "piston";
        case EventKind::PistonEndWall: return "piston_wall";
    }
    return "?";
}

void write_slow_path_csv(const std::string& path, const std::vector<double>& tau,
                         const std::vector<SlowState>& states, bool with_hamiltonian,
                         const std::vector<double>& h_eff) {
    CsvWriter csv(path);
    std::vector<std::string> cols{"tau", "Q", "W"};
    if (!states.empty()) {
        for (std::size_t j = 0; j < states[0].E1.size(); ++j)
            cols.push_back("E1_" + std::to_string(j + 1));
        for (std::size_t j = 0; j < states[0].E2.size(); ++j)
            cols.push_back("E2_" + std::to_string(j + 1));
    }
    if (with_hamiltonian) cols.push_back("H_eff");
    csv.header(cols);
    for (std::size_t i = 0; i < states.size(); ++i) {
        csv.cell(tau[i]).cell(states[i].Q).cell(states[i].W);
        for (double e : states[i].E1) csv.cell(e);
        for (double e : states[i].E2) csv.cell(e);
        if (with_hamiltonian) csv.cell(h_eff[i]);
        csv.end_row();
    }
}

struct SimulateFlags {
    double eps = -1;       // <0: take from config
    long long seed = -1;
    double horizon = -1;
    bool dump_events = false;
};

template <int D>
int cmd_simulate(const json& cfg, const CommonArgs& args, const SimulateFlags& flags) {
    const Container<D> container = build_container<D>(cfg);
    const SlowState h0 = parse_initial(cfg);
    const VBounds V = parse_bounds(cfg);
    RunParams rp = parse_run(cfg);
    if (flags.eps > 0) rp.eps = flags.eps;
    if (flags.seed >= 0) rp.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.horizon > 0) rp.T = flags.horizon;
    const bool dump = rp.dump_events || flags.dump_events;

    Rng rng(rp.seed);
    MicroState<D> state = sample_initial(container, h0, rp.eps, rng);
    StopClock clock;
    clock.V = V;
    clock.C1 = cfg::number_or(cfg.at("bounds"), "C1", 0.0);
    clock.T = rp.T;
    RunOptions opt;
    opt.dtau = rp.dtau;
    opt.record_path = true;
    opt.record_events = dump;
    const TrajectoryRecord rec = run_trajectory(container, state, clock, opt);

    std::vector<std::string> outputs;
    const std::string traj = out_path(args, "trajectory.csv");
    write_slow_path_csv(traj, rec.tau, rec.path, false, {});
    outputs.push_back(traj);

    if (dump) {
        const std::string evpath = out_path(args, "events.csv");
        CsvWriter csv(evpath);
        csv.header({"t", "kind", "side", "j", "Q", "V", "v_perp_pre", "v_perp_post", "clean"});
        for (const auto& ev : rec.log) {
            csv.cell(ev.t).cell(event_kind_name(ev.kind)).cell(static_cast<long>(ev.side));
            csv.cell(static_cast<long>(ev.index)).cell(ev.Q).cell(ev.V);
            csv.cell(ev.v_perp_pre).cell(ev.v_perp_post);
            csv.cell(static_cast<long>(ev.clean ? 1 : 0));
            csv.end_row();
        }
        outputs.push_back(evpath);
    }

    json summary;
    summary["config_hash"] = hash_hex(config_hash(cfg));
    summary["dimension"] = D;
    summary["eps"] = rp.eps;
    summary["seed"] = rp.seed;
    summary["T"] = rp.T;
    summary["dtau"] = rp.dtau;
    summary["stop_kind"] = stop_kind_name(rec.stop);
    summary["stop_tau"] = rec.stop_tau;
    summary["events"] = rec.events;
    summary["wall_events"] = rec.wall_events;
    summary["piston_collisions"] = rec.piston_events;
    summary["piston_wall_events"] = rec.piston_wall_events;
    summary["clean_collisions"] = rec.clean_events;
    summary["unclean_collisions"] = rec.unclean_events;
    summary["energy_initial"] = rec.energy_initial;
    summary["energy_drift_rel"] = rec.energy_drift_rel;
    const std::string spath = out_path(args, "summary.json");
    write_text_file(spath, summary.dump(2) + "\n");
    outputs.push_back(spath);

    write_manifest(args, cfg, rp.seed, outputs);
    return 0;
}

template <int D>
int cmd_average(const json& cfg, const CommonArgs& args) {
    const Container<D> container = build_container<D>(cfg);
    const SlowState h0 = parse_initial(cfg);
    const VBounds V = parse_bounds(cfg);
    const RunParams rp = parse_run(cfg);
    const AveragedPath path = integrate_averaged(container, h0, rp.T, rp.dtau, &V);
    std::vector<double> h_eff;
    h_eff.reserve(path.states.size());
    for (const auto& h : path.states)
        h_eff.push_back(effective_hamiltonian(container, h, h0));
    const std::string csvpath = out_path(args, "averaged.csv");
    write_slow_path_csv(csvpath, path.tau, path.states, true, h_eff);

    json summary;
    summary["config_hash"] = hash_hex(config_hash(cfg));
    summary["dimension"] = D;
    summary["T"] = rp.T;
    summary["dtau"] = rp.dtau;
    summary["exited_V"] = path.exited;
    if (path.exited) summary["exit_tau"] = path.exit_tau;
    const PeriodInfo info = period_and_equilibrium(container, h0);
    summary["confining"] = info.confining;
    summary["at_equilibrium"] = info.at_equilibrium;
    if (info.confining) summary["Q_star"] = info.Q_star;
    if (!info.at_equilibrium && info.confining && std::isfinite(info.period)) {
        summary["period"] = info.period;
        summary["Q_turn_lo"] = info.Q_turn_lo;
        summary["Q_turn_hi"] = info.Q_turn_hi;
    }
    const std::string spath = out_path(args, "summary.json");
    write_text_file(spath, summary.dump(2) + "\n");
    write_manifest(args, cfg, 0, {csvpath, spath});
    return 0;
}

json check_to_json(const CheckResult& r) {
    json j;
    j["check"] = r.check;
    j["target"] = r.target;
    j["estimate"] = r.estimate;
    j["stderr"] = r.stderr_est;
    j["z"] = r.z;
    j["used"] = r.used;
    j["skipped"] = r.skipped;
    return j;
}

template <int D>
int cmd_verify_billiard(const json& cfg, const CommonArgs& args) {
    const Container<D> container = build_container<D>(cfg);
    const BilliardParams bp = parse_billiard(cfg);
    const FrozenBilliard<D> bil(container, bp.side, bp.Q, bp.E1);
    Rng rng(bp.seed);

    json checks = json::array();
    checks.push_back(check_to_json(bil.santalo_check(bp.samples, rng)));
    checks.push_back(check_to_json(bil.kac_return_check(bp.kac_samples, rng)));
    checks.push_back(check_to_json(bil.kac_flight_check(bp.kac_samples, rng)));
    checks.push_back(check_to_json(bil.momentum_check(bp.samples, rng)));

    {
        // momentum flux: median over independent orbits, as the a.e. limit
        // converges in measure with no rate
        std::vector<double> est;
        CheckResult flux;
        for (int k = 0; k < bp.flux_orbits; ++k) {
            Rng orbit_rng(mix_seed(bp.seed + 1000) + static_cast<std::uint64_t>(k));
            const CheckResult r = bil.momentum_flux_average(bp.flux_horizon, orbit_rng);
            flux.target = r.target;
            est.push_back(r.estimate);
        }
        flux.check = "momentum_flux_time_average_median";
        flux.estimate = median(est);
        flux.stderr_est = stderr_of_mean(est);
        flux.z = flux.stderr_est > 0 ? (flux.estimate - flux.target) / flux.stderr_est : 0;
        flux.used = bp.flux_orbits;
        checks.push_back(check_to_json(flux));
    }

    checks.push_back(check_to_json(bil.involution_check(bp.involution_samples, rng)));
    for (const auto& r : bil.invariance_checks(bp.samples, rng))
        checks.push_back(check_to_json(r));
    for (const auto& r : bil.induced_invariance_checks(bp.kac_samples, rng))
        checks.push_back(check_to_json(r));

    if constexpr (D == 2) {
        const DfNormReport rep = df_norm_diagnostic(bil, bp.df_samples, rng);
        CheckResult dfr;
        dfr.check = "df_norm_weighted_max";
        dfr.estimate = rep.max_weighted;
        dfr.used = static_cast<long>(rep.samples.size());
        dfr.skipped = rep.skipped;
        checks.push_back(check_to_json(dfr));
    }

    {
        json neigh = json::array();
        double c_bound = 0;
        bool monotone = true, power_ok = true;
        double prev = -1, prev_sigma = 0;
        for (std::size_t i = 0; i < bp.gammas.size(); ++i) {
            const double g = bp.gammas[i];
            const auto est = singularity_neighborhood_measure(bil, g, bp.neighborhood_samples, rng);
            if (i == 0) c_bound = 2.0 * est.fraction / std::pow(g, 0.2);
            else if (est.fraction > c_bound * std::pow(g, 0.2)) power_ok = false;
            if (prev >= 0 && est.fraction > prev + 3 * prev_sigma) monotone = false;
            prev = est.fraction;
            prev_sigma = est.stderr_est;
            json j;
            j["gamma"] = g;
            j["fraction"] = est.fraction;
            j["stderr"] = est.stderr_est;
            neigh.push_back(j);
        }
        json sec;
        sec["check"] = "singularity_neighborhood";
        sec["estimates"] = neigh;
        sec["monotone"] = monotone;
        sec["power_bound_gamma_1_5"] = power_ok;
        checks.push_back(sec);
    }

    json report;
    report["config_hash"] = hash_hex(config_hash(cfg));
    report["dimension"] = D;
    report["side"] = bp.side;
    report["Q"] = bp.Q;
    report["E1"] = bp.E1;
    report["checks"] = checks;
    const std::string vpath = out_path(args, "verify.json");
    write_text_file(vpath, report.dump(2) + "\n");
    write_manifest(args, cfg, bp.seed, {vpath});
    return 0;
}

template <int D>
int cmd_converge(const json& cfg, const CommonArgs& args, int jobs_override) {
    Experiment<D> exp = build_experiment<D>(cfg);
    if (jobs_override > 0) exp.jobs = jobs_override;
    const ConvergenceReport rep = convergence_experiment(exp);

    const std::string csvpath = out_path(args, "samples.csv");
    CsvWriter csv(csvpath);
    csv.header({"eps", "seed", "D", "stop_kind", "stop_tau", "collisions", "clean_fraction",
                "bad_set", "singular"});
    for (std::size_t ei = 0; ei < rep.samples.size(); ++ei) {
        for (const auto& r : rep.samples[ei]) {
            csv.cell(exp.eps_grid[ei]).cell(static_cast<long>(r.seed)).cell(r.D_sup);
            csv.cell(stop_kind_name(r.stop)).cell(r.stop_tau);
            csv.cell(r.piston_collisions).cell(r.clean_fraction);
            csv.cell(static_cast<long>(r.bad_set ? 1 : 0));
            csv.cell(static_cast<long>(r.singular ? 1 : 0));
            csv.end_row();
        }
    }

    json per_eps = json::array();
    for (const auto& st : rep.per_eps) {
        json j;
        j["eps"] = st.eps;
        j["samples"] = st.n_total;
        j["excluded"] = st.n_excluded;
        j["median_D"] = st.median_D;
        json pd = json::array();
        for (const auto& d : st.p_ge_delta) {
            json x;
            x["delta"] = d.delta;
            x["p"] = d.p;
            x["ci_lo"] = d.ci.lo;
            x["ci_hi"] = d.ci.hi;
            pd.push_back(x);
        }
        j["p_ge_delta"] = pd;
        j["bad_set"] = {{"count", st.bad_count},
                        {"fraction", st.bad_fraction},
                        {"ci_lo", st.bad_ci.lo},
                        {"ci_hi", st.bad_ci.hi}};
        per_eps.push_back(j);
    }
    json report;
    report["config_hash"] = hash_hex(config_hash(cfg));
    report["dimension"] = D;
    report["T"] = exp.T;
    report["deltas"] = exp.deltas;
    report["per_eps"] = per_eps;
    if (rep.has_monotonicity) {
        json mono;
        mono["median_strictly_decreasing"] = rep.median_strictly_decreasing;
        mono["p_nonincreasing_within_ci"] = rep.p_nonincreasing_within_ci;
        if (rep.bad_fit_valid) {
            mono["bad_set_fit_slope"] = rep.bad_fit.slope;
            mono["bad_set_fit_intercept"] = rep.bad_fit.intercept;
        }
        report["monotonicity"] = mono;
    }
    const std::string rpath = out_path(args, "report.json");
    write_text_file(rpath, report.dump(2) + "\n");
    write_manifest(args, cfg, exp.seed, {csvpath, rpath});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-driven adiabatic-piston simulator and averaging verifier"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonArgs args;
    const char* env_out = std::getenv("PISTON_OUT");
    args.out_dir = env_out ? env_out : ".";

    SimulateFlags sim_flags;
    int jobs_override = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", args.config_path, "JSON config file")->required();
        sub->add_option("--out", args.out_dir, "output directory");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "run one micro trajectory");
    add_common(simulate);
    simulate->add_option("--eps", sim_flags.eps, "override run.eps");
    simulate->add_option("--seed", sim_flags.seed, "override run.seed");
    simulate->add_option("--horizon", sim_flags.horizon, "override run.T (slow time)");
    simulate->add_flag("--dump-events", sim_flags.dump_events, "write the event log CSV");

    CLI::App* average = app.add_subcommand("average", "integrate the averaged equation");
    add_common(average);

    CLI::App* verify = app.add_subcommand("verify-billiard", "frozen-billiard checks");
    add_common(verify);

    CLI::App* converge =
        app.add_subcommand("converge", "convergence-in-probability experiment");
    add_common(converge);
    converge->add_option("--jobs", jobs_override, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        const json cfg = load_config_file(args.config_path);
        const int d = config_dimension(cfg);
        if (simulate->parsed())
            return d == 2 ? cmd_simulate<2>(cfg, args, sim_flags)
                          : cmd_simulate<3>(cfg, args, sim_flags);
        if (average->parsed())
            return d == 2 ? cmd_average<2>(cfg, args) : cmd_average<3>(cfg, args);
        if (verify->parsed())
            return d == 2 ? cmd_verify_billiard<2>(cfg, args) : cmd_verify_billiard<3>(cfg, args);
        if (converge->parsed())
            return d == 2 ? cmd_converge<2>(cfg, args, jobs_override)
                          : cmd_converge<3>(cfg, args, jobs_override);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ExclusionError& e) {
        std::cerr << "exclusion threshold exceeded: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
