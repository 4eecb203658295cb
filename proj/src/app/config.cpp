#include "nelsonlab/app/config.hpp"

#include "nelsonlab/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace nelsonlab::app {

namespace {

using K = KeyType;

std::vector<KeySpec> build_schema() {
    return {
        {"run.seed", K::integer, "20240601", "random seed"},
        {"run.threads", K::integer, "1", "worker threads (overridden by --threads / NELSONLAB_THREADS)"},

        {"model.dispersion", K::choice, "nonrel", "electron dispersion", {"nonrel", "rel", "tabulated"}},
        {"model.mass", K::real, "1", "electron mass M"},
        {"model.table", K::real_list, "", "tabulated Omega(i * table_dp)"},
        {"model.table_dp", K::real, "0.1", "momentum step of model.table"},
        {"model.g", K::real, "0.05", "coupling constant"},
        {"model.kappa0", K::real, "1", "form factor amplitude"},
        {"model.lambda", K::real, "1", "ultraviolet cutoff Lambda"},
        {"model.sigma", K::real, "0.1", "infrared cutoff sigma"},
        {"model.modified", K::boolean, "false", "use the modified boson dispersion"},
        {"model.P", K::real_list, "0,0,0", "total momentum of single-fiber runs"},

        {"grid.kind", K::choice, "radial", "mode grid layout", {"line", "radial"}},
        {"grid.modes", K::integer, "40", "line grid: number of modes (even)"},
        {"grid.kmax", K::real, "1", "grid radius"},
        {"grid.shells", K::integer, "8", "radial grid: number of shells"},
        {"grid.dirs", K::integer, "6", "radial grid: directions per shell (6 or 14)"},

        {"basis.n_max", K::integer, "2", "boson number cap"},
        {"basis.e_cap", K::real, "0", "free energy cap (0: none)"},

        {"solver.tol", K::real, "1e-10", "eigen residual tolerance"},
        {"solver.subspace", K::integer, "60", "Lanczos subspace size"},
        {"solver.max_restarts", K::integer, "400", "Lanczos restart budget"},
        {"solver.dense_below", K::integer, "300", "dense diagonalization up to this dimension"},

        {"algebra.modes", K::integer, "4", "modes of the random grid"},
        {"algebra.n_max", K::integer, "3", "boson number cap"},
        {"algebra.draws", K::integer, "100", "random draws per identity"},
        {"algebra.tol", K::real, "1e-12", "identity tolerance"},
        {"algebra.inject_fault", K::text, "", "perturb the named identity (test fixture)"},

        {"dispersion.p_min", K::real, "0", "first |P| of the scan (along x)"},
        {"dispersion.p_max", K::real, "1", "last |P| of the scan"},
        {"dispersion.points", K::integer, "11", "scan points"},
        {"dispersion.beta", K::real, "0.5", "velocity bound beta for O_beta and g_beta"},
        {"dispersion.margin_tol", K::real, "1e-10", "allowed negative sandwich margin"},
        {"dispersion.soft_tol", K::real, "1e-10", "soft occupancy threshold"},
        {"dispersion.pt_couplings", K::real_list, "0.01,0.02,0.04,0.08", "couplings of the perturbative sweep"},
        {"dispersion.pt_exponent_min", K::real, "3.7", "lower bound of the fitted residual exponent"},
        {"dispersion.pt_exponent_max", K::real, "4.3", "upper bound of the fitted residual exponent"},

        {"mourre.scan", K::boolean, "true", "run the positivity sweep (virial check always runs)"},
        {"mourre.Sigma", K::real, "0.5", "spectral window E <= Sigma"},
        {"mourre.beta", K::real, "0.5", "velocity bound in the positivity target"},
        {"mourre.samples", K::integer, "64", "random window states per coupling"},
        {"mourre.couplings", K::real_list, "0,0.01,0.02,0.04,0.08", "coupling sweep"},
        {"mourre.compare_half_sigma", K::boolean, "true", "repeat the sweep at sigma / 2"},
        {"mourre.positivity_tol", K::real, "1e-10", "allowed negative min_r at g = 0"},
        {"mourre.slope_tol", K::real, "0.2", "allowed |slope - 1|"},
        {"mourre.sigma_rel_tol", K::real, "0.05", "allowed relative change sigma vs sigma / 2"},
        {"mourre.virial_factor", K::real, "10", "virial residual <= factor * budget"},

        {"dynamics.probe", K::choice, "electron", "evolve probe", {"electron", "photon", "phase", "field", "fiber"}},
        {"dynamics.sites", K::integer, "256", "lattice sites L"},
        {"dynamics.spacing", K::real, "1", "lattice spacing a"},
        {"dynamics.P0", K::real, "0.05", "packet center momentum"},
        {"dynamics.width", K::real, "0.15", "packet half-width in momentum"},
        {"dynamics.Sigma", K::real, "0.045", "energy window of the packet"},
        {"dynamics.t0", K::real, "1", "first sample time"},
        {"dynamics.t1", K::real, "200", "last sample time"},
        {"dynamics.ratio", K::real, "1.5", "geometric time ratio"},
        {"dynamics.krylov_dim", K::integer, "30", "Krylov dimension per step"},
        {"dynamics.krylov_tol", K::real, "1e-12", "Krylov error per step"},
        {"dynamics.beta", K::real, "0.3", "cutoff beta"},
        {"dynamics.beta0", K::real, "0.4", "cutoff beta0"},
        {"dynamics.beta1", K::real, "0.5", "cutoff beta1"},
        {"dynamics.beta2", K::real, "0.55", "cutoff beta2"},
        {"dynamics.beta3", K::real, "0.6", "cutoff beta3"},
        {"dynamics.gamma", K::real, "0.7", "cutoff gamma"},
        {"dynamics.lambda", K::real, "1.1", "photon window lower edge"},
        {"dynamics.lambda2", K::real, "1.5", "photon window upper edge"},
        {"dynamics.J", K::real, "1", "phase-space monitor direction"},
        {"dynamics.k0", K::real, "0.8", "boson packet center"},
        {"dynamics.k_width", K::real, "0.15", "boson packet half-width"},
        {"dynamics.threshold", K::real, "1e-3", "final value threshold"},
        {"dynamics.norm_rate", K::real, "1e-9", "allowed norm drift per unit time"},
        {"dynamics.energy_rate", K::real, "1e-8", "allowed energy drift per unit time"},
        {"dynamics.momentum_tol", K::real, "1e-9", "allowed drift of <P> and <P^2>"},
        {"dynamics.refine_check", K::boolean, "false", "repeat the electron probe with 2L sites and spacing a/2"},
        {"dynamics.refine_tol", K::real, "0.1", "allowed relative difference of the refined final value"},
        {"dynamics.plateau_tol", K::real, "0.05", "allowed running-integral increment over the last doubling"},
        {"dynamics.umklapp_margin", K::real, "0.25", "fraction of the Brillouin zone kept free of the packet"},

        {"w.state", K::choice, "dressed", "initial state", {"dressed", "free", "excited"}},
        {"w.window", K::real_list, "", "energy window lo,hi,width (empty: none)"},
        {"w.window_halfwidth", K::real, "0", "window lo/hi = E -/+ halfwidth around the state energy (0: none)"},
        {"w.window_ramp", K::real, "0.5", "ramp width of the automatic window"},
        {"w.tol", K::real, "1e-6", "allowed |final - target|: target 0 (dressed) or 1 (free)"},
        {"w.compare_caps", K::boolean, "false", "excited state: repeat with basis.n_max + 1"},
        {"w.cap_rel_tol", K::real, "0.2", "allowed relative change of the final w across caps"},

        {"wplus.left_cap", K::integer, "1", "left leg boson cap"},
        {"wplus.right_cap", K::integer, "1", "right leg boson cap"},
        {"wplus.joint_cap", K::integer, "1", "joint boson cap"},
        {"wplus.route_inside", K::boolean, "false", "j_inf = 0 routing check"},
        {"wplus.vacuum_tol", K::real, "1e-8", "allowed outer-vacuum component"},
        {"wplus.max_dim", K::integer, "5000", "largest extended dimension"},
    };
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& key, const std::string& v) {
    double x = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(x))
        throw ConfigError(key + ": not a finite number: '" + v + "'");
    return x;
}

long parse_int(const std::string& key, const std::string& v) {
    long x = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key + ": not an integer: '" + v + "'");
    return x;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::string normalize(const KeySpec& s, const std::string& raw) {
    const std::string v = trim(raw);
    switch (s.type) {
    case K::integer: return std::to_string(parse_int(s.name, v));
    case K::real: return format_number(parse_real(s.name, v));
    case K::boolean:
        if (v == "true" || v == "1" || v == "yes") return "true";
        if (v == "false" || v == "0" || v == "no") return "false";
        throw ConfigError(s.name + ": not a boolean: '" + v + "'");
    case K::text: return v;
    case K::real_list: {
        std::string out;
        for (const auto& item : split_list(v)) {
            if (!out.empty()) out += ',';
            out += format_number(parse_real(s.name, item));
        }
        return out;
    }
    case K::choice:
        if (std::find(s.choices.begin(), s.choices.end(), v) == s.choices.end())
            throw ConfigError(s.name + ": unsupported value '" + v + "'");
        return v;
    }
    return v;
}

} // namespace

const std::vector<KeySpec>& config_schema() {
    static const std::vector<KeySpec> schema = build_schema();
    return schema;
}

RunConfig::RunConfig() {
    for (const auto& s : config_schema()) values_[s.name] = normalize(s, s.fallback);
}

const KeySpec& RunConfig::spec(const std::string& key) const {
    for (const auto& s : config_schema())
        if (s.name == key) return s;
    throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[key] = normalize(spec(key), value); }

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (t.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + "malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        std::string key = trim(t.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
        try {
            cfg.set(key, t.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
}

long RunConfig::get_int(const std::string& key) const { return parse_int(key, values_.at(spec(key).name)); }
double RunConfig::get_real(const std::string& key) const { return parse_real(key, values_.at(spec(key).name)); }
bool RunConfig::get_bool(const std::string& key) const { return values_.at(spec(key).name) == "true"; }
const std::string& RunConfig::get_text(const std::string& key) const { return values_.at(spec(key).name); }

std::vector<double> RunConfig::get_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(values_.at(spec(key).name))) out.push_back(parse_real(key, item));
    return out;
}

std::string RunConfig::canonical() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
    return s;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(canonical())); }

} // namespace nelsonlab::app
