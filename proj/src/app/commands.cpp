#include "nelsonlab/app/commands.hpp"

#include "nelsonlab/dynamics.hpp"
#include "nelsonlab/identities.hpp"
#include "nelsonlab/io.hpp"
#include "nelsonlab/mourre.hpp"
#include "nelsonlab/parallel.hpp"
#include "nelsonlab/random.hpp"
#include "nelsonlab/spectral.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

namespace nelsonlab::app {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string num(double v) { return format_number(v); }
std::string num(std::integral auto v) { return format_number(static_cast<long long>(v)); }
std::string flag(bool b) { return b ? "1" : "0"; }

double rel_diff(double a, double b) {
    const double s = std::max(std::abs(a), std::abs(b));
    return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

// Collects verdicts, artifacts and results of one command.
class Session {
public:
    Session(std::string command, const RunConfig& cfg, fs::path out, std::ostream& log)
        : command_(std::move(command)), cfg_(cfg), out_(std::move(out)), log_(log), hash_(cfg.hash()) {}

    const RunConfig& cfg() const { return cfg_; }
    std::ostream& log() { return log_; }
    json& results() { return results_; }

    void csv(const std::string& suffix, const CsvTable& t) {
        const std::string name = command_ + "_" + suffix + ".csv";
        write_csv(out_ / name, t, hash_);
        files_.push_back(name);
    }

    void verdict(const std::string& name, bool pass, json detail = json::object()) {
        json v;
        v["name"] = name;
        v["status"] = pass ? "pass" : "fail";
        v["detail"] = std::move(detail);
        verdicts_.push_back(std::move(v));
        ok_ = ok_ && pass;
        log_ << (pass ? "PASS " : "FAIL ") << command_ << "." << name << "\n";
    }
    void skip(const std::string& name, const std::string& why) {
        json v;
        v["name"] = name;
        v["status"] = "skipped";
        v["detail"] = why;
        verdicts_.push_back(std::move(v));
        log_ << "SKIP " << command_ << "." << name << " (" << why << ")\n";
    }
    void warn(const std::string& msg) {
        warnings_.push_back(msg);
        log_ << "WARN " << command_ << ": " << msg << "\n";
    }

    int finish(double seconds) {
        json m;
        m["command"] = command_;
        m["config_hash"] = hash_;
        json c = json::object();
        for (const auto& [k, v] : cfg_.values()) c[k] = v;
        m["config"] = std::move(c);
        m["files"] = files_;
        m["results"] = results_;
        m["warnings"] = warnings_;
        m["verdicts"] = verdicts_;
        m["passed"] = ok_;
        m["threads"] = worker_threads();
        m["seconds"] = seconds;
        m["timestamp"] = timestamp();
        fs::create_directories(out_);
        std::ofstream f(out_ / (command_ + "_manifest.json"), std::ios::binary);
        f << m.dump(2) << "\n";
        if (!f) throw std::runtime_error("cannot write manifest in " + out_.string());
        log_ << command_ << ": " << (ok_ ? "all verdicts passed" : "verdict failure") << " (hash " << hash_ << ")\n";
        return ok_ ? exit_pass : exit_verdict;
    }

private:
    static std::string timestamp() {
        const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    std::string command_;
    const RunConfig& cfg_;
    fs::path out_;
    std::ostream& log_;
    std::string hash_;
    std::vector<std::string> files_;
    json results_ = json::object();
    json verdicts_ = json::array();
    std::vector<std::string> warnings_;
    bool ok_ = true;
};

// --- config -> model objects

std::shared_ptr<const ModeGrid> make_grid(const RunConfig& c, double sigma) {
    if (c.get_text("grid.kind") == "line") {
        const long m = c.get_int("grid.modes");
        if (m < 2 || m % 2 != 0) throw ConfigError("grid.modes must be an even number >= 2");
        if (!(c.get_real("grid.kmax") > 0.0)) throw ConfigError("grid.kmax must be positive");
        return std::make_shared<ModeGrid>(line_grid(int(m), c.get_real("grid.kmax"), sigma));
    }
    const long shells = c.get_int("grid.shells"), dirs = c.get_int("grid.dirs");
    if (shells < 1) throw ConfigError("grid.shells must be positive");
    if (dirs != 6 && dirs != 14) throw ConfigError("grid.dirs must be 6 or 14");
    if (!(c.get_real("grid.kmax") > 0.0)) throw ConfigError("grid.kmax must be positive");
    return std::make_shared<ModeGrid>(radial_grid(int(shells), c.get_real("grid.kmax"), int(dirs), sigma));
}

Dispersion make_dispersion(const RunConfig& c) {
    const std::string& kind = c.get_text("model.dispersion");
    if (kind == "rel") return Dispersion::relativistic(c.get_real("model.mass"));
    if (kind == "tabulated") {
        auto table = c.get_list("model.table");
        if (table.empty()) throw ConfigError("model.table is required for a tabulated dispersion");
        return Dispersion::tabulated(std::move(table), c.get_real("model.table_dp"));
    }
    return Dispersion::nonrelativistic(c.get_real("model.mass"));
}

ModelSpec make_model(const RunConfig& c, std::optional<double> sigma = std::nullopt,
                     std::shared_ptr<const ModeGrid> grid = nullptr) {
    ModelSpec ms;
    ms.disp = make_dispersion(c);
    ms.ff.kappa0 = c.get_real("model.kappa0");
    ms.ff.lambda = c.get_real("model.lambda");
    ms.ff.sigma = sigma.value_or(c.get_real("model.sigma"));
    ms.grid = grid ? std::move(grid) : make_grid(c, ms.ff.sigma);
    ms.g = c.get_real("model.g");
    ms.use_modified = c.get_bool("model.modified");
    ms.validate();
    return ms;
}

BasisPtr make_basis(const RunConfig& c, std::shared_ptr<const ModeGrid> grid, std::optional<int> n_max = {}) {
    const long n = n_max.value_or(int(c.get_int("basis.n_max")));
    if (n < 0) throw ConfigError("basis.n_max must be >= 0");
    const double cap = c.get_real("basis.e_cap");
    return build_basis(std::move(grid), int(n), cap > 0.0 ? std::optional<double>(cap) : std::nullopt);
}

EigenOptions eigen_options(const RunConfig& c) {
    EigenOptions eo;
    eo.tol = c.get_real("solver.tol");
    eo.subspace = int(c.get_int("solver.subspace"));
    eo.max_restarts = int(c.get_int("solver.max_restarts"));
    const long db = c.get_int("solver.dense_below");
    if (!(eo.tol > 0.0) || eo.subspace < 4 || eo.max_restarts < 1 || db < 0)
        throw ConfigError("solver: tol > 0, subspace >= 4, max_restarts >= 1 and dense_below >= 0 required");
    eo.dense_below = std::size_t(db);
    return eo;
}

Vec3 momentum(const RunConfig& c) {
    const auto p = c.get_list("model.P");
    if (p.empty() || p.size() > 3) throw ConfigError("model.P needs 1 to 3 components");
    Vec3 v{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < p.size(); ++i) v[i] = p[i];
    return v;
}

KrylovOptions krylov_options(const RunConfig& c) {
    KrylovOptions ko;
    ko.max_dim = int(c.get_int("dynamics.krylov_dim"));
    ko.tol = c.get_real("dynamics.krylov_tol");
    return ko;
}

CutoffSet cutoffs(const RunConfig& c) {
    CutoffSet cut{c.get_real("dynamics.beta"),  c.get_real("dynamics.beta0"), c.get_real("dynamics.beta1"),
                  c.get_real("dynamics.beta2"), c.get_real("dynamics.beta3"), c.get_real("dynamics.gamma")};
    cut.validate();
    return cut;
}

std::vector<double> time_grid(const RunConfig& c) {
    return geometric_times(c.get_real("dynamics.t0"), c.get_real("dynamics.t1"), c.get_real("dynamics.ratio"));
}

// Compact bump exp(-1/(1-u^2)), u = (k - k0) / width, on the first coordinate of each mode.
CVec bump_profile(const ModeGrid& grid, double k0, double width) {
    if (!(width > 0.0)) throw ConfigError("dynamics.k_width must be positive");
    CVec h = CVec::Zero(std::ptrdiff_t(grid.size()));
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double u = (grid.points[j][0] - k0) / width;
        if (std::abs(u) < 1.0) h(std::ptrdiff_t(j)) = std::exp(-1.0 / (1.0 - u * u));
    }
    if (h.norm() == 0.0) throw ConfigError("boson profile around dynamics.k0 contains no grid mode");
    return h;
}

void add_track(CsvTable& t, const Track& tr) {
    for (const auto& r : tr.rows)
        t.add({tr.observable, num(r.t), num(r.value), num(r.running), num(r.norm_drift), num(r.energy_drift),
               num(r.momentum_drift)});
}

CsvTable track_csv(const std::vector<const Track*>& tracks) {
    CsvTable t{{"observable", "t", "value", "running", "norm_drift", "energy_drift", "momentum_drift"}, {}};
    for (const Track* tr : tracks) add_track(t, *tr);
    return t;
}

// Norm and energy drift rates, asserted at every output time.
void drift_verdicts(Session& s, const Track& tr) {
    const double nr = s.cfg().get_real("dynamics.norm_rate"), er = s.cfg().get_real("dynamics.energy_rate");
    double worst_n = 0.0, worst_e = 0.0;
    for (const auto& r : tr.rows) {
        const double t = std::max(r.t, 1.0);
        worst_n = std::max(worst_n, r.norm_drift / t);
        worst_e = std::max(worst_e, r.energy_drift / t);
    }
    s.verdict("norm_drift", worst_n <= nr, {{"max_rate", worst_n}, {"allowed", nr}});
    s.verdict("energy_drift", worst_e <= er, {{"max_rate", worst_e}, {"allowed", er}});
}

json track_summary(const Track& tr) {
    json j;
    j["observable"] = tr.observable;
    j["final_t"] = tr.rows.empty() ? 0.0 : tr.rows.back().t;
    j["final_value"] = tr.final_value();
    j["final_running"] = tr.rows.empty() ? 0.0 : tr.rows.back().running;
    j["krylov_steps"] = tr.stats.steps;
    j["matvecs"] = tr.stats.matvecs;
    j["rejected_steps"] = tr.stats.rejected;
    return j;
}

// --- algebra

int cmd_algebra(Session& s) {
    const RunConfig& c = s.cfg();
    AlgebraConfig ac;
    ac.modes = int(c.get_int("algebra.modes"));
    ac.n_max = int(c.get_int("algebra.n_max"));
    ac.draws = int(c.get_int("algebra.draws"));
    ac.seed = std::uint64_t(c.get_int("run.seed"));
    ac.tol = c.get_real("algebra.tol");
    ac.inject_fault = c.get_text("algebra.inject_fault");
    const AlgebraReport rep = run_algebra_suite(ac);

    CsvTable t{{"identity", "max_error", "tol", "guarded", "vacuous", "passed"}, {}};
    int vacuous = 0;
    for (const auto& chk : rep.checks) {
        t.add({chk.name, num(chk.max_error), num(chk.tol), flag(chk.guarded), flag(chk.vacuous), flag(chk.passed)});
        json d{{"max_error", chk.max_error}, {"tol", chk.tol}, {"guarded", chk.guarded}};
        if (chk.vacuous) {
            d["vacuous"] = true;
            ++vacuous;
        }
        s.verdict(chk.name, chk.passed, std::move(d));
    }
    s.csv("identities", t);
    if (vacuous > 0)
        s.log() << "algebra: " << vacuous
                << " guarded identities hold vacuously (sector N <= n_max - 1 is empty at n_max = " << ac.n_max
                << ")\n";
    s.results()["identities"] = rep.checks.size();
    s.results()["vacuous"] = vacuous;
    s.results()["failures"] = rep.failures();
    s.results()["suite_seconds"] = rep.seconds;
    return 0;
}

// --- dispersion

int cmd_dispersion(Session& s) {
    const RunConfig& c = s.cfg();
    const ModelSpec ms = make_model(c);
    const BasisPtr basis = make_basis(c, ms.grid);
    const EigenOptions eo = eigen_options(c);
    const double beta = c.get_real("dispersion.beta");
    const long points = c.get_int("dispersion.points");
    if (points < 1) throw ConfigError("dispersion.points must be positive");
    const double p0 = c.get_real("dispersion.p_min"), p1 = c.get_real("dispersion.p_max");
    std::vector<Vec3> Ps;
    for (long i = 0; i < points; ++i) Ps.push_back({points == 1 ? p0 : p0 + (p1 - p0) * double(i) / double(points - 1), 0, 0});

    const DispersionCurve curve = dispersion_scan(ms, Ps, basis, eo, beta);
    CsvTable t{{"P", "E_g", "E_0", "Omega", "upper_margin", "lower_margin", "gap", "simple", "soft",
                "vacuum_weight", "residual"},
               {}};
    double min_upper = 1e300, min_lower = 1e300, max_soft = 0.0;
    bool simple = true, converged = true;
    for (const auto& p : curve.points) {
        t.add({num(p.P[0]), num(p.e_g), num(p.e_0), num(p.omega), num(p.upper_margin), num(p.lower_margin),
               num(p.gap), flag(p.simple), num(p.soft), num(p.vacuum_weight), num(p.residual)});
        min_upper = std::min(min_upper, p.upper_margin);
        min_lower = std::min(min_lower, p.lower_margin);
        max_soft = std::max(max_soft, p.soft);
        simple = simple && p.simple;
        converged = converged && p.converged;
    }
    s.csv("curve", t);
    if (!converged) throw ConvergenceError("dispersion: ground state solver did not converge at every P");

    auto& r = s.results();
    r["dimension"] = basis->size();
    r["beta"] = curve.beta;
    r["O_beta"] = curve.o_beta;
    r["g_beta"] = curve.g_beta;
    r["C"] = curve.c_constant;
    r["min_upper_margin"] = min_upper;
    r["min_lower_margin"] = min_lower;
    r["max_soft"] = max_soft;

    const double mtol = c.get_real("dispersion.margin_tol");
    s.verdict("sandwich_lower", min_lower >= -mtol, {{"min_margin", min_lower}, {"tol", mtol}});
    s.verdict("sandwich_upper", min_upper >= -mtol, {{"min_margin", min_upper}, {"tol", mtol}});
    s.verdict("simple_ground_state", simple);
    if (std::abs(ms.g) <= 0.5 * curve.g_beta)
        s.verdict("soft_absence", max_soft < c.get_real("dispersion.soft_tol"),
                  {{"max_soft", max_soft}, {"tol", c.get_real("dispersion.soft_tol")}, {"g_beta", curve.g_beta}});
    else
        s.skip("soft_absence", "|g| > g_beta / 2");

    if (ms.g == 0.0) {
        const double o1 = ms.disp.o_beta(1.0);
        double worst_e = 0.0, worst_v = 0.0;
        int checked = 0;
        for (const auto& p : curve.points) {
            if (p.omega > o1) continue;
            ++checked;
            worst_e = std::max(worst_e, std::abs(p.e_g - p.omega));
            worst_v = std::max(worst_v, std::abs(1.0 - p.vacuum_weight));
        }
        if (checked == 0)
            s.skip("free_exactness", "no sample with Omega(P) <= O_1");
        else
            s.verdict("free_exactness", worst_e <= 1e-12 && worst_v <= 1e-12,
                      {{"points", checked}, {"max_energy_error", worst_e}, {"max_vacuum_defect", worst_v}});
    }

    const auto gs = c.get_list("dispersion.pt_couplings");
    if (!gs.empty()) {
        const Vec3 P = momentum(c);
        CsvTable pt{{"g", "E_g", "E_PT", "residual"}, {}};
        std::vector<double> lx, ly;
        for (double g : gs) {
            ModelSpec mg = ms;
            mg.g = g;
            EigenOptions e1 = eo;
            e1.count = 1;
            const double eg = ground_state(build_fiber_H(mg, P, *basis), e1).values(0);
            const double ept = second_order_energy(mg, P);
            const double res = std::abs(eg - ept);
            pt.add({num(g), num(eg), num(ept), num(res)});
            if (g != 0.0 && res > 0.0) {
                lx.push_back(std::log(std::abs(g)));
                ly.push_back(std::log(res));
            }
        }
        s.csv("pt", pt);
        if (lx.size() >= 2) {
            const double n = double(lx.size());
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            for (std::size_t i = 0; i < lx.size(); ++i) {
                sx += lx[i];
                sy += ly[i];
                sxx += lx[i] * lx[i];
                sxy += lx[i] * ly[i];
            }
            const double p = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            const double lo = c.get_real("dispersion.pt_exponent_min"), hi = c.get_real("dispersion.pt_exponent_max");
            r["pt_exponent"] = p;
            s.verdict("pt_exponent", p >= lo && p <= hi, {{"exponent", p}, {"min", lo}, {"max", hi}});
        } else {
            s.skip("pt_exponent", "fewer than two nonzero residuals");
        }
    }
    return 0;
}

// --- mourre

int cmd_mourre(Session& s) {
    const RunConfig& c = s.cfg();
    const Vec3 P = momentum(c);
    const EigenOptions eo = eigen_options(c);
    auto& res = s.results();
    {
        const ModelSpec ms = make_model(c);
        const BasisPtr basis = make_basis(c, ms.grid);
        const ConjugateOp conj = build_conjugate(*ms.grid, ms.use_modified);
        const VirialReport v = virial_check(ms, P, *basis, conj, eo);
        CsvTable t{{"energy", "residual", "matrix_residual", "eigen_residual", "a_norm", "soft", "mesh", "scale",
                    "budget"},
                   {}};
        t.add({num(v.energy), num(v.residual), num(v.matrix_residual), num(v.eigen_residual), num(v.a_norm),
               num(v.soft), num(v.mesh), num(v.scale), num(v.budget())});
        s.csv("virial", t);
        const double factor = c.get_real("mourre.virial_factor");
        json d{{"residual", v.residual}, {"budget", v.budget()}, {"factor", factor}, {"mesh", v.mesh},
               {"scale", v.scale},       {"eigen_residual", v.eigen_residual}};
        res["virial"] = d;
        s.log() << "mourre: virial residual " << v.residual << ", budget " << v.budget() << " (mesh " << v.mesh
                << ", scale " << v.scale << ")\n";
        s.verdict("virial", v.residual <= factor * v.budget(), std::move(d));
    }
    if (!c.get_bool("mourre.scan")) return 0;

    const double Sigma = c.get_real("mourre.Sigma"), beta = c.get_real("mourre.beta");
    const long samples = c.get_int("mourre.samples");
    if (samples < 1) throw ConfigError("mourre.samples must be positive");
    const auto couplings = c.get_list("mourre.couplings");
    if (couplings.empty()) throw ConfigError("mourre.couplings is empty");
    std::vector<double> sigmas{c.get_real("model.sigma")};
    if (c.get_bool("mourre.compare_half_sigma")) sigmas.push_back(0.5 * sigmas[0]);
    const auto seed = std::uint64_t(c.get_int("run.seed"));

    CsvTable sweep{{"sigma", "g", "sub_dim", "window_dim", "below_threshold", "threshold", "grad_norm", "min_r",
                    "deficit", "sample_deficit"},
                   {}};
    CsvTable samp{{"sigma", "g", "index", "r", "field", "number"}, {}};
    std::vector<std::vector<MourreReport>> reports;
    std::vector<MourreFit> fits;
    json jsweeps = json::array();
    for (double sigma : sigmas) {
        ModelSpec ms = make_model(c, sigma);
        const BasisPtr basis = make_basis(c, ms.grid);
        const ConjugateOp conj = build_conjugate(*ms.grid, ms.use_modified);
        std::vector<MourreReport> sw;
        for (double g : couplings) {
            ms.g = g;
            sw.push_back(mourre_scan(ms, P, Sigma, beta, *basis, conj, int(samples), seed));
        }
        const MourreFit fit = fit_deficit(sw);
        json js;
        js["sigma"] = sigma;
        js["mesh"] = conj.mesh;
        js["n_max"] = basis->n_max();
        js["dimension"] = basis->size();
        js["slope"] = fit.slope;
        js["fitted_C"] = fit.C;
        json per = json::array();
        for (const auto& r : sw) {
            sweep.add({num(sigma), num(r.g), num(r.sub_dim), num(r.window_dim), num(r.below_threshold),
                       num(r.threshold), num(r.grad_norm), num(r.min_r), num(r.deficit), num(r.sample_deficit)});
            json jr;
            jr["g"] = r.g;
            jr["min_r"] = r.min_r;
            jr["deficit"] = r.deficit;
            jr["window_dim"] = r.window_dim;
            json rs = json::array();
            for (std::size_t i = 0; i < r.samples.size(); ++i) {
                const auto& x = r.samples[i];
                samp.add({num(sigma), num(r.g), num(i), num(x.r), num(x.field), num(x.number)});
                rs.push_back(json::array({x.r, x.field, x.number}));
            }
            jr["samples_r_field_number"] = std::move(rs);
            per.push_back(std::move(jr));
        }
        js["reports"] = std::move(per);
        jsweeps.push_back(std::move(js));
        s.log() << "mourre: sigma " << sigma << " slope " << fit.slope << " C " << fit.C << "\n";
        reports.push_back(std::move(sw));
        fits.push_back(fit);
    }
    s.csv("sweep", sweep);
    s.csv("samples", samp);
    res["sweeps"] = std::move(jsweeps);

    const double ptol = c.get_real("mourre.positivity_tol");
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
        const std::string tag = k == 0 ? "" : "_half_sigma";
        const auto it = std::find_if(reports[k].begin(), reports[k].end(), [](const auto& r) { return r.g == 0.0; });
        if (it == reports[k].end())
            s.skip("positivity" + tag, "g = 0 not in mourre.couplings");
        else
            s.verdict("positivity" + tag, it->min_r >= -ptol, {{"min_r", it->min_r}, {"tol", ptol}});
        const double stol = c.get_real("mourre.slope_tol");
        const bool fitted = std::count_if(reports[k].begin(), reports[k].end(),
                                          [](const auto& r) { return r.g != 0.0 && r.deficit > 0.0; }) >= 2;
        if (!fitted)
            s.skip("deficit_slope" + tag, "fewer than two nonzero couplings");
        else
            s.verdict("deficit_slope" + tag, std::abs(fits[k].slope - 1.0) <= stol,
                      {{"slope", fits[k].slope}, {"tol", stol}});
    }
    if (sigmas.size() == 2) {
        const double tol = c.get_real("mourre.sigma_rel_tol");
        double worst_r = 0.0;
        for (std::size_t i = 0; i < couplings.size(); ++i)
            worst_r = std::max(worst_r, rel_diff(reports[0][i].min_r, reports[1][i].min_r));
        const double dc = rel_diff(fits[0].C, fits[1].C);
        s.verdict("sigma_stability", worst_r <= tol && dc <= tol,
                  {{"min_r_rel_diff", worst_r}, {"C_rel_diff", dc}, {"C_sigma", fits[0].C},
                   {"C_half_sigma", fits[1].C}, {"tol", tol}});
    }
    return 0;
}

// --- evolve

struct LatticeSetup {
    ModelSpec ms;
    LatticeModel lm;
    DressedPacket packet;
};

LatticeSetup lattice_setup(const RunConfig& c, long sites, double a) {
    const long modes = c.get_int("grid.modes");
    if (modes < 2 || modes % 2 != 0) throw ConfigError("grid.modes must be an even number >= 2");
    if (!(a > 0.0) || sites < 2 || sites % 2 != 0)
        throw ConfigError("dynamics.sites must be even and dynamics.spacing positive");
    const double sigma = c.get_real("model.sigma");
    // bosons on odd multiples of 2 pi / (L a), so the boson lattice is offset from k = 0
    auto grid = std::make_shared<ModeGrid>(line_grid_spacing(int(modes), 4.0 * std::numbers::pi / (double(sites) * a), sigma));
    LatticeSetup s;
    s.ms = make_model(c, sigma, grid);
    s.ms.brillouin = 2.0 * std::numbers::pi / a;
    s.lm = make_lattice_model(s.ms, int(sites), a, make_basis(c, grid));

    const double P0 = c.get_real("dynamics.P0"), w = c.get_real("dynamics.width");
    const double kmax = std::abs(grid->points.back()[0]);
    const double reach = std::abs(P0) + w + s.lm.bosons->n_max() * kmax;
    const double limit = (1.0 - c.get_real("dynamics.umklapp_margin")) * std::numbers::pi / a;
    if (reach > limit)
        throw ConfigError("packet momenta plus boson momenta reach " + num(reach) + ", beyond the umklapp margin " +
                          num(limit));
    s.packet = dressed_packet(s.ms, s.lm, P0, w);
    return s;
}

// Packet energies below Sigma, and the dispersion speed there below beta.
json packet_preconditions(const RunConfig& c, const LatticeSetup& ls) {
    const double Sigma = c.get_real("dynamics.Sigma"), beta = c.get_real("dynamics.beta");
    if (ls.packet.max_energy > Sigma)
        throw ConfigError("packet energy " + num(ls.packet.max_energy) + " exceeds dynamics.Sigma " + num(Sigma));
    const double speed = grad_bound_formula(ls.ms.disp, ls.packet.max_energy + ls.ms.g * ls.ms.g * ls.ms.c_constant());
    if (speed > beta)
        throw ConfigError("dispersion speed " + num(speed) + " on the packet exceeds dynamics.beta " + num(beta));
    return {{"max_energy", ls.packet.max_energy}, {"min_energy", ls.packet.min_energy}, {"momenta", ls.packet.momenta},
            {"speed_bound", speed}, {"dimension", ls.lm.dim()}};
}

void momentum_verdict(Session& s, const Track& tr) {
    double worst = 0.0;
    for (const auto& r : tr.rows) worst = std::max(worst, r.momentum_drift);
    const double tol = s.cfg().get_real("dynamics.momentum_tol");
    s.verdict("momentum_conservation", worst <= tol, {{"max_drift", worst}, {"tol", tol}});
}

void plateau_verdict(Session& s, const Track& tr) {
    if (tr.rows.size() < 2) {
        s.skip("plateau", "fewer than two output times");
        return;
    }
    const auto& last = tr.rows.back();
    const TrackRow* half = &tr.rows.front();
    for (const auto& r : tr.rows)
        if (r.t <= 0.5 * last.t) half = &r;
    const double inc = last.running - half->running;
    const double tol = s.cfg().get_real("dynamics.plateau_tol");
    const bool ok = inc <= tol * std::abs(last.running) || std::abs(last.running) < 1e-14;
    s.verdict("plateau", ok, {{"running", last.running}, {"increment", inc}, {"from_t", half->t}, {"tol", tol}});
}

int evolve_electron(Session& s) {
    const RunConfig& c = s.cfg();
    const long L = c.get_int("dynamics.sites");
    const double a = c.get_real("dynamics.spacing");
    const CutoffSet cut = cutoffs(c);
    const auto times = time_grid(c);
    const KrylovOptions ko = krylov_options(c);
    const LatticeSetup ls = lattice_setup(c, L, a);
    s.results()["packet"] = packet_preconditions(c, ls);
    // F(|x|/t) must be resolvable on the ring |x| <= L a / 2
    if (cut.beta1 * times.back() > 0.5 * double(L) * a)
        throw ConfigError("beta1 * t1 exceeds the half ring length; F(|x|/t) would vanish by periodicity");

    const Track tr = electron_velocity_probe(ls.ms, ls.lm, ls.packet.psi, times, cut, ko);
    std::vector<const Track*> tracks{&tr};
    const double thr = c.get_real("dynamics.threshold");
    s.results()["track"] = track_summary(tr);
    s.verdict("final_below_threshold", tr.final_value() < thr, {{"final", tr.final_value()}, {"threshold", thr}});
    s.verdict("tail_decreasing", tr.tail_decreasing(1e-12));
    drift_verdicts(s, tr);
    momentum_verdict(s, tr);

    Track fine;
    if (c.get_bool("dynamics.refine_check")) {
        const LatticeSetup lf = lattice_setup(c, 2 * L, 0.5 * a);
        s.results()["refined_packet"] = packet_preconditions(c, lf);
        fine = electron_velocity_probe(lf.ms, lf.lm, lf.packet.psi, times, cut, ko);
        fine.observable += "_refined";
        tracks.push_back(&fine);
        const double rd = rel_diff(tr.final_value(), fine.final_value());
        const double tol = c.get_real("dynamics.refine_tol");
        s.results()["refined_track"] = track_summary(fine);
        s.verdict("resolution_agreement", rd <= tol,
                  {{"coarse", tr.final_value()}, {"refined", fine.final_value()}, {"rel_diff", rd}, {"tol", tol}});
    }
    s.csv("track", track_csv(tracks));
    return 0;
}

int evolve_fiber(Session& s) {
    const RunConfig& c = s.cfg();
    const ModelSpec ms = make_model(c);
    const BasisPtr basis = make_basis(c, ms.grid);
    const Vec3 P = momentum(c);
    const SparseOperator H = build_fiber_H(ms, P, *basis);
    const SparseOperator N = number_op(*basis);
    Rng rng(std::uint64_t(c.get_int("run.seed")));
    CVec psi0 = rng.cvec(H.rows());
    psi0.normalize();

    const std::size_t dim = basis->size();
    const bool dense_ref = dim <= 400;
    std::optional<SpectralResult> spec;
    CVec coeff;
    if (dense_ref) {
        spec = dense_spectrum(H.dense());
        coeff = spec->vectors.adjoint() * psi0;
    }
    const RVec diag = fiber_diagonal(ms, P, *basis);
    double dense_err = 0.0, phase_err = 0.0;
    CsvTable ref{{"t", "dense_mismatch", "phase_mismatch"}, {}};
    auto observe = [&](double t, const CVec& psi) {
        double de = 0.0, pe = 0.0;
        if (dense_ref) {
            CVec ev(coeff.size());
            for (std::ptrdiff_t i = 0; i < coeff.size(); ++i)
                ev(i) = std::exp(cplx(0.0, -spec->values(i) * t)) * coeff(i);
            de = (spec->vectors * ev - psi).norm();
            dense_err = std::max(dense_err, de);
        }
        if (ms.g == 0.0) {
            CVec ex(psi0.size());
            for (std::ptrdiff_t i = 0; i < psi0.size(); ++i) ex(i) = std::exp(cplx(0.0, -diag(i) * t)) * psi0(i);
            pe = (ex - psi).norm();
            phase_err = std::max(phase_err, pe);
        }
        ref.add({num(t), num(de), num(pe)});
        return psi.dot(N.apply(psi)).real();
    };
    const Track tr = evolve_track(H, psi0, time_grid(c), observe, krylov_options(c), "number");
    s.csv("track", track_csv({&tr}));
    s.csv("reference", ref);
    s.results()["dimension"] = dim;
    s.results()["track"] = track_summary(tr);
    drift_verdicts(s, tr);
    if (dense_ref)
        s.verdict("dense_reference", dense_err <= 1e-8, {{"max_mismatch", dense_err}, {"tol", 1e-8}});
    else
        s.skip("dense_reference", "dimension above 400");
    if (ms.g == 0.0) s.verdict("phase_exactness", phase_err <= 1e-8, {{"max_mismatch", phase_err}, {"tol", 1e-8}});
    return 0;
}

int evolve_boson(Session& s, const std::string& probe) {
    const RunConfig& c = s.cfg();
    const long L = c.get_int("dynamics.sites");
    const double a = c.get_real("dynamics.spacing");
    const CutoffSet cut = cutoffs(c);
    const auto times = time_grid(c);
    const KrylovOptions ko = krylov_options(c);
    const LatticeSetup ls = lattice_setup(c, L, a);
    s.results()["packet"] = packet_preconditions(c, ls);
    const SparseOperator H = build_full_H(ls.ms, ls.lm);
    const ModeGrid& grid = *ls.ms.grid;
    // boson modes are spaced 4 pi / (L a): boson positions live on a ring of length L a / 2
    const double reach = (probe == "photon" ? std::max(1.0, c.get_real("dynamics.lambda2")) : 1.0) * times.back();
    if (reach > 0.25 * double(L) * a)
        throw ConfigError("boson front " + num(reach) + " passes half the boson ring (L a / 4 = " +
                          num(0.25 * double(L) * a) + "); reduce dynamics.t1");

    if (probe == "photon") {
        const double lam = c.get_real("dynamics.lambda"), lam2 = c.get_real("dynamics.lambda2");
        if (!(lam > std::max(1.0, cut.beta)))
            s.warn("photon window starts below max(1, beta); the velocity estimate is not claimed there");
        const Track tr = photon_velocity_probe(H, *ls.lm.bosons, ls.lm.L, a, build_position_op(grid), ls.packet.psi,
                                               times, lam, lam2, &cut, ko);
        s.csv("track", track_csv({&tr}));
        s.results()["track"] = track_summary(tr);
        drift_verdicts(s, tr);
        plateau_verdict(s, tr);
        return 0;
    }
    if (probe == "phase") {
        const ConjugateOp conj = build_conjugate(grid, ls.ms.use_modified);
        const Track tr = phase_space_probe(H, *ls.lm.bosons, ls.lm.L, a, conj.y, conj.speed, c.get_real("dynamics.J"),
                                           ls.packet.psi, times, &cut, ko);
        s.csv("track", track_csv({&tr}));
        s.results()["track"] = track_summary(tr);
        drift_verdicts(s, tr);
        plateau_verdict(s, tr);
        return 0;
    }
    // field
    const CVec h = bump_profile(grid, c.get_real("dynamics.k0"), c.get_real("dynamics.k_width"));
    for (std::size_t j = 0; j < grid.size(); ++j)
        if (h(std::ptrdiff_t(j)) != 0.0 && grid.abs_k(j) <= 2.0 * ls.ms.ff.sigma)
            throw ConfigError("boson profile reaches the soft zone |k| <= 2 sigma");
    const FieldProbe fp =
        asymptotic_field_probe(H, *ls.lm.bosons, ls.lm.L, ls.ms.boson_energy(), h, ls.packet.psi, times, ko);
    s.csv("track", track_csv({&fp.cauchy, &fp.vacuum}));
    s.results()["cauchy"] = track_summary(fp.cauchy);
    s.results()["vacuum"] = track_summary(fp.vacuum);
    drift_verdicts(s, fp.cauchy);
    if (ls.ms.g == 0.0) {
        double worst = 0.0;
        for (const auto& r : fp.cauchy.rows) worst = std::max(worst, r.value);
        s.verdict("free_field", worst <= 1e-8, {{"max_cauchy", worst}, {"tol", 1e-8}});
    } else {
        // the last interval ends at t1 and is shorter than the others
        Track full = fp.cauchy;
        const double ratio = c.get_real("dynamics.ratio");
        if (times.size() >= 2 && times.back() < ratio * times[times.size() - 2] * (1.0 - 1e-9) && !full.rows.empty())
            full.rows.pop_back();
        s.verdict("cauchy_decreasing", full.tail_decreasing(1e-10), {{"final", full.final_value()}});
    }
    return 0;
}

int cmd_evolve(Session& s) {
    const std::string& probe = s.cfg().get_text("dynamics.probe");
    s.results()["probe"] = probe;
    if (probe == "electron") return evolve_electron(s);
    if (probe == "fiber") return evolve_fiber(s);
    return evolve_boson(s, probe);
}

// --- w and wplus

struct FiberState {
    ModelSpec ms;
    BasisPtr basis;
    Vec3 P{};
    SparseOperator H;
    CVec psi;
    double energy = 0.0;
};

FiberState fiber_state(const RunConfig& c, int n_max) {
    if (c.get_text("grid.kind") != "line") throw ConfigError("w and wplus need grid.kind = line");
    FiberState f;
    f.ms = make_model(c);
    f.basis = make_basis(c, f.ms.grid, n_max);
    f.P = momentum(c);
    const std::string& state = c.get_text("w.state");
    EigenOptions eo = eigen_options(c);
    eo.count = 1;
    if (state == "free") {
        ModelSpec m0 = f.ms;
        m0.g = 0.0;
        f.H = build_fiber_H(m0, f.P, *f.basis);
        const CVec h = bump_profile(*f.ms.grid, c.get_real("dynamics.k0"), c.get_real("dynamics.k_width"));
        f.psi = creation_op(*f.basis, h).apply(FockVector::vacuum(f.basis).amps);
    } else {
        f.H = build_fiber_H(f.ms, f.P, *f.basis);
        const CVec g0 = ground_state(f.H, eo).vectors.col(0);
        if (state == "dressed") {
            f.psi = g0;
        } else {
            const CVec h = bump_profile(*f.ms.grid, c.get_real("dynamics.k0"), c.get_real("dynamics.k_width"));
            f.psi = interacting_projector(*f.basis, f.ms.ff.sigma).apply(creation_op(*f.basis, h).apply(g0));
            f.psi -= g0 * g0.dot(f.psi);
        }
    }
    if (f.psi.norm() == 0.0) throw ConfigError("w: initial state vanishes on the truncated basis");
    f.psi.normalize();
    f.energy = f.psi.dot(f.H.apply(f.psi)).real();
    return f;
}

EnergyWindow energy_window(const RunConfig& c, double energy) {
    const auto w = c.get_list("w.window");
    const double half = c.get_real("w.window_halfwidth"), ramp = c.get_real("w.window_ramp");
    if (!w.empty()) {
        if (w.size() != 2 || !(w[0] < w[1])) throw ConfigError("w.window needs two increasing energies");
        return {w[0], w[1], ramp};
    }
    if (half > 0.0) return {energy - half, energy + half, ramp};
    return {};
}

void check_w_preconditions(Session& s, const CutoffSet& cut, const std::vector<double>& times,
                           const ModeGrid& grid) {
    const RunConfig& c = s.cfg();
    if (!c.get_bool("model.modified")) throw ConfigError("w requires model.modified = true");
    const bool admissible = cut.beta < 1.0 / 3.0 && cut.gamma > cut.beta && cut.gamma < 1.0 - 2.0 * cut.beta;
    if (!admissible) {
        if (c.get_text("w.state") == "excited")
            throw ConfigError("positivity runs need beta < 1/3 and gamma in (beta, 1 - 2 beta)");
        s.warn("gamma outside (beta, 1 - 2 beta); plain estimation only");
    }
    // the spectrum of y spans about pi / spacing; chi(|y|/t) must switch on inside it
    if (cut.beta3 * times.back() * grid.spacing > 0.5)
        throw ConfigError("beta3 * t1 * grid spacing exceeds 0.5; |y|/t cannot reach the cutoff on this grid");
}

int cmd_w(Session& s) {
    const RunConfig& c = s.cfg();
    const CutoffSet cut = cutoffs(c);
    const auto times = time_grid(c);
    const KrylovOptions ko = krylov_options(c);
    const int n_max = int(c.get_int("basis.n_max"));
    const FiberState f = fiber_state(c, n_max);
    check_w_preconditions(s, cut, times, *f.ms.grid);
    const CMat y = build_position_op(*f.ms.grid);
    const std::string& state = c.get_text("w.state");

    const Track tr = W_estimate(f.H, *f.basis, y, energy_window(c, f.energy), cut, f.psi, times, ko);
    std::vector<const Track*> tracks{&tr};
    s.results()["state"] = state;
    s.results()["energy"] = f.energy;
    s.results()["dimension"] = f.basis->size();
    s.results()["track"] = track_summary(tr);
    drift_verdicts(s, tr);

    const double tol = c.get_real("w.tol");
    Track other;
    if (state == "dressed") {
        s.verdict("limit_zero", std::abs(tr.final_value()) <= tol, {{"final", tr.final_value()}, {"tol", tol}});
    } else if (state == "free") {
        s.verdict("limit_one", std::abs(tr.final_value() - 1.0) <= tol, {{"final", tr.final_value()}, {"tol", tol}});
    } else {
        s.verdict("positive", tr.final_value() > 0.0, {{"final", tr.final_value()}});
        if (c.get_bool("w.compare_caps")) {
            const FiberState f2 = fiber_state(c, n_max + 1);
            other = W_estimate(f2.H, *f2.basis, y, energy_window(c, f2.energy), cut, f2.psi, times, ko);
            other.observable += "_cap" + std::to_string(n_max + 1);
            tracks.push_back(&other);
            const double rd = rel_diff(tr.final_value(), other.final_value());
            const double ctol = c.get_real("w.cap_rel_tol");
            s.results()["track_next_cap"] = track_summary(other);
            s.verdict("cap_stability", rd <= ctol,
                      {{"final", tr.final_value()}, {"final_next_cap", other.final_value()}, {"rel_diff", rd},
                       {"tol", ctol}, {"dimension_next_cap", f2.basis->size()}});
        }
    }
    s.csv("track", track_csv(tracks));
    return 0;
}

int cmd_wplus(Session& s) {
    const RunConfig& c = s.cfg();
    const CutoffSet cut = cutoffs(c);
    const auto times = time_grid(c);
    const FiberState f = fiber_state(c, int(c.get_int("basis.n_max")));
    check_w_preconditions(s, cut, times, *f.ms.grid);
    const int lc = int(c.get_int("wplus.left_cap")), rc = int(c.get_int("wplus.right_cap")),
              jc = int(c.get_int("wplus.joint_cap"));
    if (lc < 0 || rc < 0 || jc < 0) throw ConfigError("wplus caps must be >= 0");
    const TensorBasis tb(make_basis(c, f.ms.grid, lc), make_basis(c, f.ms.grid, rc), jc);
    const long max_dim = c.get_int("wplus.max_dim");
    if (long(tb.size()) > max_dim)
        throw ConfigError("extended dimension " + num(tb.size()) + " exceeds wplus.max_dim " + num(max_dim));
    const bool inside = c.get_bool("wplus.route_inside");
    const EnergyWindow win = energy_window(c, f.energy);
    const WPlusProbe wp = W_plus_probe(f.ms, f.P, *f.basis, tb, build_position_op(*f.ms.grid), win, win, cut, f.psi,
                                       times, krylov_options(c), inside);
    s.csv("track", track_csv({&wp.total, &wp.outer_vacuum}));
    s.results()["extended_dimension"] = tb.size();
    s.results()["total"] = track_summary(wp.total);
    s.results()["outer_vacuum"] = track_summary(wp.outer_vacuum);

    double worst = 0.0;
    for (std::size_t i = 0; i < wp.total.rows.size(); ++i) {
        const double o = wp.outer_vacuum.rows[i].value, t = wp.total.rows[i].value;
        worst = std::max(worst, inside ? std::abs(t - o) : o);
    }
    const double tol = c.get_real("wplus.vacuum_tol") * f.psi.norm();
    if (inside)
        s.verdict("routing_identity", worst <= 1e-12 * std::max(1.0, wp.total.rows.front().value),
                  {{"max_difference", worst}});
    else
        s.verdict("outer_vacuum", worst <= tol, {{"max_outer_vacuum", worst}, {"tol", tol}});
    if (c.get_text("w.state") == "dressed") s.verdict("total_decreasing", wp.total.tail_decreasing(1e-10));
    return 0;
}

// --- report

int cmd_report(Session& s, const fs::path& out) {
    std::vector<fs::path> manifests;
    if (fs::exists(out))
        for (const auto& e : fs::directory_iterator(out)) {
            const std::string n = e.path().filename().string();
            if (n.size() > 14 && n.ends_with("_manifest.json") && n != "report_manifest.json") manifests.push_back(e.path());
        }
    if (manifests.empty()) throw ConfigError("report: no manifests found in " + out.string());
    std::sort(manifests.begin(), manifests.end());
    CsvTable t{{"command", "config_hash", "passed", "verdicts", "failed"}, {}};
    json runs = json::array();
    for (const auto& p : manifests) {
        std::ifstream in(p);
        json m;
        try {
            m = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("report: cannot parse " + p.string() + ": " + e.what());
        }
        std::string failed;
        int count = 0;
        for (const auto& v : m.value("verdicts", json::array())) {
            ++count;
            if (v.value("status", "") == "fail") failed += (failed.empty() ? "" : ";") + v.value("name", "");
        }
        const bool passed = m.value("passed", false);
        const std::string cmd = m.value("command", p.stem().string());
        t.add({cmd, m.value("config_hash", ""), flag(passed), num(count), failed});
        runs.push_back({{"command", cmd}, {"passed", passed}, {"failed", failed}});
        s.verdict(cmd, passed, {{"failed", failed}});
    }
    s.csv("summary", t);
    s.results()["runs"] = std::move(runs);
    return 0;
}

} // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"algebra", "dispersion", "mourre", "evolve", "w", "wplus", "report"};
    return names;
}

int run_command(const std::string& command, const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    Session s(command, cfg, out, log);
    if (command == "algebra") cmd_algebra(s);
    else if (command == "dispersion") cmd_dispersion(s);
    else if (command == "mourre") cmd_mourre(s);
    else if (command == "evolve") cmd_evolve(s);
    else if (command == "w") cmd_w(s);
    else if (command == "wplus") cmd_wplus(s);
    else if (command == "report") cmd_report(s, out);
    else throw ConfigError("unknown command '" + command + "'");
    return s.finish(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Truncated Fock-space experiments for an electron coupled to a boson field", "nelsonlab"};
    std::string config_path, out_dir = "out";
    std::optional<long> seed;
    std::optional<int> threads;
    app.add_option("--config", config_path, "run configuration file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "overrides run.seed");
    app.add_option("--threads", threads, "worker threads (overrides NELSONLAB_THREADS and run.threads)");
    app.require_subcommand(1, 1);
    const char* help[] = {"randomized second-quantization identity checks",
                          "fiber ground-state energies, spectral bounds and perturbation theory",
                          "virial check and positive-commutator sweep",
                          "time evolution probes (electron, photon, phase, field, fiber)",
                          "asymptotic boson counter w(t)",
                          "split-space asymptotic observable and its outer vacuum component",
                          "summary of the manifests in the output directory"};
    for (std::size_t i = 0; i < command_names().size(); ++i)
        app.add_subcommand(command_names()[i], help[i])->fallthrough();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, e2;
        const int code = app.exit(e, o, e2);
        out << o.str();
        err << e2.str();
        return code == 0 ? exit_pass : exit_config;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        if (seed) cfg.set("run.seed", std::to_string(*seed));
        int n = int(cfg.get_int("run.threads"));
        if (const char* env = std::getenv("NELSONLAB_THREADS"); env && *env) {
            try {
                n = std::stoi(env);
            } catch (const std::exception&) {
                throw ConfigError(std::string("NELSONLAB_THREADS is not an integer: ") + env);
            }
        }
        if (threads) n = *threads;
        if (n < 1) throw ConfigError("thread count must be >= 1");
        set_worker_threads(n);
        return run_command(app.get_subcommands().front()->get_name(), cfg, out_dir, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const ConvergenceError& e) {
        err << "no convergence: " << e.what() << "\n";
        return exit_convergence;
    }
}

} // namespace nelsonlab::app
