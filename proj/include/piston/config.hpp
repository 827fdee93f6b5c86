#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "piston/ensemble.hpp"

namespace piston {

using nlohmann::json;

/// Configuration problems: bad file, malformed JSON, schema violations.
/// Messages carry the offending field path.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace cfg {

inline const json& require(const json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError("missing field '" + path + key + "'");
    return j.at(key);
}

inline double number(const json& j, const char* key, const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_number()) throw ConfigError("field '" + path + key + "' must be a number");
    return v.get<double>();
}

inline double number_or(const json& j, const char* key, double fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
    return j.at(key).get<double>();
}

inline long integer(const json& j, const char* key, const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_number_integer()) throw ConfigError("field '" + path + key + "' must be an integer");
    return v.get<long>();
}

inline long integer_or(const json& j, const char* key, long fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return j.at(key).get<long>();
}

inline bool flag_or(const json& j, const char* key, bool fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return j.at(key).get<bool>();
}

template <int D>
Vec<D> vec(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != D)
        throw ConfigError("field '" + path + "' must be an array of " + std::to_string(D) +
                          " numbers");
    Vec<D> out;
    for (int i = 0; i < D; ++i) out[i] = v.at(static_cast<std::size_t>(i)).get<double>();
    return out;
}

inline std::vector<double> number_list(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty())
        throw ConfigError("field '" + path + "' must be a non-empty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) out.push_back(x.get<double>());
    return out;
}

}  // namespace cfg

inline json load_config_file(const std::string& filename) {
    std::ifstream in(filename);
    if (!in) throw ConfigError("cannot open config file '" + filename + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed JSON in '" + filename + "': " + e.what());
    }
}

/// FNV-1a over the canonical (key-sorted) serialization; key order in the
/// input file does not matter.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t config_hash(const json& j) { return fnv1a(j.dump()); }

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline int config_dimension(const json& root) {
    const json& g = cfg::require(root, "geometry", "");
    const long d = cfg::integer(g, "dimension", "geometry.");
    if (d != 2 && d != 3) throw ConfigError("geometry.dimension must be 2 or 3");
    return static_cast<int>(d);
}

// ---------------------------------------------------------------------------

template <int D>
Piece<D> parse_piece(const json& p, const std::string& path) {
    const json& kind_j = cfg::require(p, "kind", path);
    const std::string kind = kind_j.get<std::string>();
    if constexpr (D == 2) {
        if (kind == "segment") {
            Segment s;
            s.a = cfg::vec<2>(cfg::require(p, "a", path), path + "a");
            s.b = cfg::vec<2>(cfg::require(p, "b", path), path + "b");
            s.inward = cfg::vec<2>(cfg::require(p, "inward", path), path + "inward");
            return s;
        }
        if (kind == "arc") {
            Arc a;
            a.center = cfg::vec<2>(cfg::require(p, "center", path), path + "center");
            a.radius = cfg::number(p, "radius", path);
            const auto angles = cfg::number_list(cfg::require(p, "angles", path), path + "angles");
            if (angles.size() != 2) throw ConfigError("'" + path + "angles' needs [theta0, theta1]");
            a.theta0 = angles[0];
            a.theta1 = angles[1];
            a.normal_toward_center = cfg::flag_or(p, "normal_toward_center", true);
            return a;
        }
        throw ConfigError("unknown 2D piece kind '" + kind + "' at " + path);
    } else {
        if (kind == "facet") {
            Facet f;
            const json& vs = cfg::require(p, "vertices", path);
            if (!vs.is_array() || vs.size() < 3)
                throw ConfigError("'" + path + "vertices' needs >= 3 points");
            for (const auto& v : vs) f.verts.push_back(cfg::vec<3>(v, path + "vertices[]"));
            f.inward = cfg::vec<3>(cfg::require(p, "inward", path), path + "inward");
            if (p.contains("holes")) {
                for (const auto& h : p.at("holes")) {
                    Hole hole;
                    hole.center = cfg::vec<3>(cfg::require(h, "center", path + "holes[]."),
                                              path + "holes[].center");
                    hole.radius = cfg::number(h, "radius", path + "holes[].");
                    f.holes.push_back(hole);
                }
            }
            return f;
        }
        if (kind == "spherical_patch") {
            SphericalPatch sp;
            sp.center = cfg::vec<3>(cfg::require(p, "center", path), path + "center");
            sp.radius = cfg::number(p, "radius", path);
            sp.axis = cfg::vec<3>(cfg::require(p, "axis", path), path + "axis");
            sp.cos_half = cfg::number(p, "cos_half_angle", path);
            sp.normal_toward_center = cfg::flag_or(p, "normal_toward_center", true);
            return sp;
        }
        throw ConfigError("unknown 3D piece kind '" + kind + "' at " + path);
    }
}

template <int D>
Container<D> build_container(const json& root) {
    const json& g = cfg::require(root, "geometry", "");
    if (config_dimension(root) != D) throw ConfigError("geometry.dimension mismatch");
    const json& tube = cfg::require(g, "tube", "geometry.");
    const double len = cfg::number_or(tube, "length", 1.0);
    if (std::fabs(len - 1.0) > 1e-12)
        throw ConfigError("geometry.tube.length must be 1 (the model fixes the tube to [0,1])");
    CrossSection<D> cs;
    const json& csj = cfg::require(tube, "cross_section", "geometry.tube.");
    if constexpr (D == 2) {
        if (!csj.is_number())
            throw ConfigError("geometry.tube.cross_section must be a number (interval length)");
        cs.ell = csj.get<double>();
        if (!(cs.ell > 0)) throw ConfigError("geometry.tube.cross_section must be positive");
    } else {
        if (!csj.is_object())
            throw ConfigError(
                "geometry.tube.cross_section must be {width, height} (rectangular cross-sections "
                "only; a disk would need a cylindrical wall outside the primitive set)");
        cs.a = cfg::number(csj, "width", "geometry.tube.cross_section.");
        cs.b = cfg::number(csj, "height", "geometry.tube.cross_section.");
        if (!(cs.a > 0 && cs.b > 0))
            throw ConfigError("geometry.tube.cross_section sides must be positive");
    }
    auto parse_cap = [&](const char* key) {
        std::vector<Piece<D>> pieces;
        if (g.contains(key)) {
            const json& arr = g.at(key);
            if (!arr.is_array()) throw ConfigError(std::string("geometry.") + key + " must be an array");
            std::string path = std::string("geometry.") + key + "[].";
            for (const auto& p : arr) pieces.push_back(parse_piece<D>(p, path));
        }
        return pieces;
    };
    try {
        return Container<D>(cs, parse_cap("left_cap"), parse_cap("right_cap"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("geometry: ") + e.what());
    }
}

inline SlowState parse_initial(const json& root) {
    const json& init = cfg::require(root, "initial", "");
    SlowState h;
    h.Q = cfg::number(init, "Q", "initial.");
    h.W = cfg::number(init, "W", "initial.");
    h.E1 = cfg::number_list(cfg::require(init, "E1", "initial."), "initial.E1");
    h.E2 = cfg::number_list(cfg::require(init, "E2", "initial."), "initial.E2");
    for (double e : h.E1)
        if (!(e > 0)) throw ConfigError("initial.E1 entries must be positive");
    for (double e : h.E2)
        if (!(e > 0)) throw ConfigError("initial.E2 entries must be positive");
    return h;
}

inline VBounds parse_bounds(const json& root) {
    const json& b = cfg::require(root, "bounds", "");
    VBounds v;
    v.Q_min = cfg::number(b, "Q_min", "bounds.");
    v.Q_max = cfg::number(b, "Q_max", "bounds.");
    v.W_bound = cfg::number(b, "W_bound", "bounds.");
    v.E_floor = cfg::number(b, "E_floor", "bounds.");
    v.E_min = cfg::number(b, "E_min", "bounds.");
    v.E_max = cfg::number(b, "E_max", "bounds.");
    try {
        v.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("bounds: ") + e.what());
    }
    return v;
}

struct RunParams {
    double eps = 0.05;
    std::uint64_t seed = 1;
    double T = 1.0;
    double dtau = 1e-3;
    bool dump_events = false;
};

inline RunParams parse_run(const json& root) {
    const json& r = cfg::require(root, "run", "");
    RunParams p;
    p.eps = cfg::number(r, "eps", "run.");
    if (!(p.eps > 0 && p.eps <= 1)) throw ConfigError("run.eps must lie in (0,1]");
    p.seed = static_cast<std::uint64_t>(cfg::integer(r, "seed", "run."));
    p.T = cfg::number(r, "T", "run.");
    p.dtau = cfg::number_or(r, "dtau", 1e-3);
    if (!(p.T > 0) || !(p.dtau > 0) || p.dtau > p.T)
        throw ConfigError("run: need 0 < dtau <= T");
    p.dump_events = cfg::flag_or(r, "dump_events", false);
    return p;
}

template <int D>
Experiment<D> build_experiment(const json& root) {
    Experiment<D> exp{build_container<D>(root)};
    const json& parts = cfg::require(root, "particles", "");
    exp.n1 = static_cast<int>(cfg::integer(parts, "n1", "particles."));
    exp.n2 = static_cast<int>(cfg::integer(parts, "n2", "particles."));
    exp.h0 = parse_initial(root);
    exp.V = parse_bounds(root);
    exp.C1 = cfg::number_or(cfg::require(root, "bounds", ""), "C1", 0.0);
    const RunParams rp = parse_run(root);
    exp.T = rp.T;
    exp.dtau = rp.dtau;
    exp.seed = rp.seed;
    const json& e = cfg::require(root, "experiment", "");
    exp.eps_grid = cfg::number_list(cfg::require(e, "eps_grid", "experiment."),
                                    "experiment.eps_grid");
    exp.samples = cfg::integer(e, "samples", "experiment.");
    exp.deltas = cfg::number_list(cfg::require(e, "deltas", "experiment."), "experiment.deltas");
    exp.jobs = static_cast<int>(cfg::integer_or(e, "jobs", 1));
    try {
        exp.validate();
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("experiment: ") + err.what());
    }
    return exp;
}

struct BilliardParams {
    int side = 1;
    double Q = 0.5;
    double E1 = 0.5;
    long samples = 1000000;
    long kac_samples = 100000;
    long involution_samples = 10000;
    long df_samples = 10000;
    long neighborhood_samples = 200000;
    std::vector<double> gammas{0.1, 0.05, 0.02, 0.01};
    double flux_horizon = 100000.0;
    int flux_orbits = 32;
    std::uint64_t seed = 7;
};

inline BilliardParams parse_billiard(const json& root) {
    BilliardParams p;
    if (!root.contains("billiard")) return p;
    const json& b = root.at("billiard");
    p.side = static_cast<int>(cfg::integer_or(b, "side", 1));
    if (p.side != 1 && p.side != 2) throw ConfigError("billiard.side must be 1 or 2");
    p.Q = cfg::number_or(b, "Q", 0.5);
    p.E1 = cfg::number_or(b, "E1", 0.5);
    if (!(p.E1 > 0)) throw ConfigError("billiard.E1 must be positive");
    p.samples = cfg::integer_or(b, "samples", p.samples);
    p.kac_samples = cfg::integer_or(b, "kac_samples", p.kac_samples);
    p.involution_samples = cfg::integer_or(b, "involution_samples", p.involution_samples);
    p.df_samples = cfg::integer_or(b, "df_samples", p.df_samples);
    p.neighborhood_samples = cfg::integer_or(b, "neighborhood_samples", p.neighborhood_samples);
    if (b.contains("gammas")) p.gammas = cfg::number_list(b.at("gammas"), "billiard.gammas");
    for (double g : p.gammas)
        if (!(g > 1e-4 && g < 1e-1 + 1e-12))
            throw ConfigError("billiard.gammas entries must lie in (1e-4, 1e-1]");
    p.flux_horizon = cfg::number_or(b, "flux_horizon", p.flux_horizon);
    p.flux_orbits = static_cast<int>(cfg::integer_or(b, "flux_orbits", p.flux_orbits));
    p.seed = static_cast<std::uint64_t>(cfg::integer_or(b, "seed", 7));
    return p;
}

}  // namespace piston
