#pragma once

/// Scenario configuration: JSON schema, validation, canonical serialization.

#include <cstdint>
#include <fstream>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpflab/density.hpp"
#include "fpflab/error.hpp"
#include "fpflab/fpf.hpp"
#include "fpflab/observation.hpp"
#include "fpflab/simulation.hpp"

namespace fpf {

struct GridSpec {
    std::size_t nodes = 1024;
    /// Box half-width in prior standard deviations (see Prior::default_box).
    double half_width = 8.0;

    bool operator==(const GridSpec&) const = default;
};

struct ScenarioConfig {
    std::vector<MixtureComponent> prior;  ///< one component = Gaussian
    std::string observation;
    std::optional<double> true_state;  ///< nullopt: drawn from the prior
    double horizon = 1.0;
    std::size_t steps = 1000;
    std::size_t particles = 1000;
    GainSolverKind gain_solver = GainSolverKind::Galerkin;
    int galerkin_degree = 3;
    FilterMode mode = FilterMode::Algorithmic;
    std::uint64_t seed = 0;
    GridSpec grid;
    HEvaluation h_evaluation = HEvaluation::LeftEndpoint;
    std::size_t gain_stride = 1;
    ParticleScheme scheme = ParticleScheme::EulerMaruyama;
    std::size_t record_stride = 1;
    std::vector<double> snapshots;  ///< times at which densities are dumped
    std::size_t seeds = 1;          ///< seed sweep size (seed, seed+1, ...)

    bool operator==(const ScenarioConfig&) const = default;

    Prior make_prior() const {
        return prior.size() == 1 ? Prior::gaussian(prior[0].mean, prior[0].sd)
                                 : Prior::mixture(prior);
    }

    ObservationModel make_model() const { return observations::by_name(observation); }

    Grid make_grid() const {
        const auto [lo, hi] = make_prior().default_box(grid.half_width);
        return Grid::uniform(lo, hi, grid.nodes);
    }

    GainOptions gain_options() const { return {gain_solver, galerkin_degree, mode, gain_stride}; }
};

// ----------------------------------------------------------------------------
// Text forms
// ----------------------------------------------------------------------------

inline std::string to_string(FilterMode m) {
    return m == FilterMode::Oracle ? "oracle" : "algorithmic";
}

inline std::string solver_to_string(GainSolverKind k, int degree) {
    switch (k) {
        case GainSolverKind::Exact1d: return "exact1d";
        case GainSolverKind::FiniteDifference: return "fd";
        case GainSolverKind::Galerkin: return "galerkin(" + std::to_string(degree) + ")";
    }
    return "?";
}

inline FilterMode parse_mode(const std::string& s) {
    if (s == "oracle") return FilterMode::Oracle;
    if (s == "algorithmic") return FilterMode::Algorithmic;
    throw ConfigError("mode", "expected 'oracle' or 'algorithmic', got '" + s + "'");
}

/// "exact1d", "fd", "galerkin" or "galerkin(<degree>)".
inline std::pair<GainSolverKind, int> parse_solver(const std::string& s, int default_degree = 3) {
    if (s == "exact1d") return {GainSolverKind::Exact1d, default_degree};
    if (s == "fd") return {GainSolverKind::FiniteDifference, default_degree};
    if (s == "galerkin") return {GainSolverKind::Galerkin, default_degree};
    static const std::regex re(R"(galerkin\(\s*(\d+)\s*\))");
    std::smatch m;
    if (std::regex_match(s, m, re)) {
        const int d = std::stoi(m[1].str());
        if (d < 1 || d > 12) throw ConfigError("gain_solver", "galerkin degree must be in 1..12");
        return {GainSolverKind::Galerkin, d};
    }
    throw ConfigError("gain_solver", "expected exact1d, fd or galerkin(<degree>), got '" + s + "'");
}

/// "gaussian(mu,sd)" or "mixture(w,mu,sd; w,mu,sd; ...)".
inline std::vector<MixtureComponent> parse_prior_spec(const std::string& spec) {
    static const std::regex outer(R"(\s*(gaussian|mixture)\s*\((.*)\)\s*)");
    std::smatch m;
    if (!std::regex_match(spec, m, outer)) {
        throw ConfigError("prior", "cannot parse prior '" + spec + "'");
    }
    auto numbers = [&](const std::string& s) {
        std::vector<double> v;
        std::stringstream ss(s);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(tok, &used));
                if (tok.find_first_not_of(" \t", used) != std::string::npos) throw std::exception();
            } catch (const std::exception&) {
                throw ConfigError("prior", "bad number '" + tok + "' in '" + spec + "'");
            }
        }
        return v;
    };
    std::vector<MixtureComponent> comps;
    if (m[1] == "gaussian") {
        const auto v = numbers(m[2].str());
        if (v.size() != 2) throw ConfigError("prior", "gaussian takes (mean, sd)");
        comps.push_back({1.0, v[0], v[1]});
    } else {
        std::stringstream ss(m[2].str());
        std::string part;
        while (std::getline(ss, part, ';')) {
            const auto v = numbers(part);
            if (v.size() != 3) throw ConfigError("prior", "mixture components are (weight, mean, sd)");
            comps.push_back({v[0], v[1], v[2]});
        }
    }
    for (const auto& c : comps) {
        if (!(c.sd > 0.0) || !(c.weight > 0.0) || !std::isfinite(c.mean)) {
            throw ConfigError("prior", "weights and sds must be positive, means finite");
        }
    }
    if (comps.empty()) throw ConfigError("prior", "mixture has no components");
    return comps;
}

inline std::string prior_to_string(const std::vector<MixtureComponent>& comps) {
    auto num = [](double x) { return nlohmann::json(x).dump(); };
    if (comps.size() == 1 && comps[0].weight == 1.0) {
        return "gaussian(" + num(comps[0].mean) + "," + num(comps[0].sd) + ")";
    }
    std::string s = "mixture(";
    for (std::size_t k = 0; k < comps.size(); ++k) {
        if (k) s += ";";
        s += num(comps[k].weight) + "," + num(comps[k].mean) + "," + num(comps[k].sd);
    }
    return s + ")";
}

// ----------------------------------------------------------------------------
// JSON
// ----------------------------------------------------------------------------

namespace detail {

template <class T>
T get_field(const nlohmann::json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(key, std::string("wrong type: ") + e.what());
    }
}

inline std::size_t get_count(const nlohmann::json& j, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ConfigError(key, "expected a non-negative integer");
    }
    return v.get<std::size_t>();
}

inline std::vector<MixtureComponent> prior_from_json(const nlohmann::json& v) {
    if (v.is_string()) return parse_prior_spec(v.get<std::string>());
    if (!v.is_object()) throw ConfigError("prior", "expected a string or an object");
    const std::string type = get_field<std::string>(v, "type");
    std::vector<MixtureComponent> comps;
    if (type == "gaussian") {
        comps.push_back({1.0, get_field<double>(v, "mean"), get_field<double>(v, "sd")});
    } else if (type == "mixture") {
        for (const auto& c : v.at("components")) {
            comps.push_back({get_field<double>(c, "weight"), get_field<double>(c, "mean"),
                             get_field<double>(c, "sd")});
        }
    } else {
        throw ConfigError("prior", "unknown prior type '" + type + "'");
    }
    return parse_prior_spec(prior_to_string(comps));
}

}  // namespace detail

/// Validate and fill defaults. Required keys: prior, observation, T, steps,
/// particles. Unknown keys are rejected.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("<root>", "scenario must be a JSON object");
    static const std::set<std::string> known = {
        "prior",       "observation", "true_state",  "T",           "steps",
        "particles",   "gain_solver", "mode",        "seed",        "grid",
        "h_evaluation", "gain_stride", "scheme", "record_stride", "snapshots", "seeds"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError(key, "unknown key");
    }
    for (const char* key : {"prior", "observation", "T", "steps", "particles"}) {
        if (!j.contains(key)) throw ConfigError(key, "missing required field");
    }

    ScenarioConfig c;
    c.prior = detail::prior_from_json(j.at("prior"));
    c.observation = detail::get_field<std::string>(j, "observation");
    if (!observations::is_known(c.observation)) {
        throw ConfigError("observation", "unknown observation function '" + c.observation + "'");
    }
    if (j.contains("true_state")) {
        const auto& v = j.at("true_state");
        if (v.is_string()) {
            if (v.get<std::string>() != "sample") {
                throw ConfigError("true_state", "expected a number or \"sample\"");
            }
        } else if (v.is_number()) {
            c.true_state = v.get<double>();
        } else {
            throw ConfigError("true_state", "expected a number or \"sample\"");
        }
    }
    c.horizon = detail::get_field<double>(j, "T");
    if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) throw ConfigError("T", "must be > 0");
    c.steps = detail::get_count(j, "steps");
    if (c.steps < 1) throw ConfigError("steps", "must be >= 1");
    c.particles = detail::get_count(j, "particles");
    if (c.particles < 2) throw ConfigError("particles", "must be >= 2");

    if (j.contains("mode")) c.mode = parse_mode(detail::get_field<std::string>(j, "mode"));
    // Galerkin is the algorithmic default, exact1d the oracle default.
    c.gain_solver = c.mode == FilterMode::Oracle ? GainSolverKind::Exact1d : GainSolverKind::Galerkin;
    if (j.contains("gain_solver")) {
        std::tie(c.gain_solver, c.galerkin_degree) =
            parse_solver(detail::get_field<std::string>(j, "gain_solver"));
    }
    if (j.contains("seed")) {
        const auto& v = j.at("seed");
        if (!v.is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
        c.seed = v.get<std::uint64_t>();
    }
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        if (!g.is_object()) throw ConfigError("grid", "expected an object");
        for (const auto& [key, _] : g.items()) {
            if (key != "nodes" && key != "half_width") throw ConfigError("grid." + key, "unknown key");
        }
        if (g.contains("nodes")) c.grid.nodes = detail::get_count(g, "nodes");
        if (g.contains("half_width")) c.grid.half_width = detail::get_field<double>(g, "half_width");
    }
    if (c.grid.nodes < 128) throw ConfigError("grid.nodes", "must be >= 128");
    if (!(c.grid.half_width > 0.0)) throw ConfigError("grid.half_width", "must be > 0");
    if (j.contains("h_evaluation")) {
        const auto s = detail::get_field<std::string>(j, "h_evaluation");
        if (s == "left") c.h_evaluation = HEvaluation::LeftEndpoint;
        else if (s == "midpoint") c.h_evaluation = HEvaluation::Midpoint;
        else throw ConfigError("h_evaluation", "expected 'left' or 'midpoint'");
    }
    if (j.contains("gain_stride")) c.gain_stride = detail::get_count(j, "gain_stride");
    if (c.gain_stride < 1) throw ConfigError("gain_stride", "must be >= 1");
    if (j.contains("scheme")) {
        const auto s = detail::get_field<std::string>(j, "scheme");
        if (s == "euler") c.scheme = ParticleScheme::EulerMaruyama;
        else if (s == "milstein") c.scheme = ParticleScheme::Milstein;
        else throw ConfigError("scheme", "expected 'euler' or 'milstein'");
    }
    if (j.contains("record_stride")) c.record_stride = detail::get_count(j, "record_stride");
    if (c.record_stride < 1) throw ConfigError("record_stride", "must be >= 1");
    if (j.contains("snapshots")) {
        c.snapshots = detail::get_field<std::vector<double>>(j, "snapshots");
        for (double t : c.snapshots) {
            if (!(t >= 0.0 && t <= c.horizon)) throw ConfigError("snapshots", "times must lie in [0, T]");
        }
    }
    if (j.contains("seeds")) c.seeds = detail::get_count(j, "seeds");
    if (c.seeds < 1) throw ConfigError("seeds", "must be >= 1");
    return c;
}

/// Canonical JSON with every field explicit.
inline nlohmann::json scenario_to_json(const ScenarioConfig& c) {
    nlohmann::json j;
    j["prior"] = prior_to_string(c.prior);
    j["observation"] = c.observation;
    if (c.true_state) j["true_state"] = *c.true_state;
    else j["true_state"] = "sample";
    j["T"] = c.horizon;
    j["steps"] = c.steps;
    j["particles"] = c.particles;
    j["gain_solver"] = solver_to_string(c.gain_solver, c.galerkin_degree);
    j["mode"] = to_string(c.mode);
    j["seed"] = c.seed;
    j["grid"] = {{"nodes", c.grid.nodes}, {"half_width", c.grid.half_width}};
    j["h_evaluation"] = c.h_evaluation == HEvaluation::Midpoint ? "midpoint" : "left";
    j["gain_stride"] = c.gain_stride;
    j["scheme"] = c.scheme == ParticleScheme::Milstein ? "milstein" : "euler";
    j["record_stride"] = c.record_stride;
    j["snapshots"] = c.snapshots;
    j["seeds"] = c.seeds;
    return j;
}

inline ScenarioConfig parse_scenario(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    return scenario_from_json(j);
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

/// FNV-1a of the canonical serialization, as 16 hex digits.
inline std::string config_hash(const ScenarioConfig& c) {
    const std::string s = scenario_to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fpf
