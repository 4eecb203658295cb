// Acceptance suite: one PASS/FAIL line per criterion, driven through the same
// command layer as the CLI. Tolerances live in the configs under configs/.
#include "nelsonlab/app/commands.hpp"
#include "nelsonlab/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace nelsonlab;
using namespace nelsonlab::app;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

const fs::path config_dir = NELSONLAB_CONFIG_DIR;
const fs::path out_root = NELSONLAB_ACCEPTANCE_DIR;

struct Outcome {
    int code = -1;
    json manifest;
    fs::path dir;
    std::string error;

    const json* verdict(const std::string& name) const {
        if (!manifest.contains("verdicts")) return nullptr;
        for (const auto& v : manifest["verdicts"])
            if (v["name"] == name) return &v;
        return nullptr;
    }
    bool passed(const std::string& name) const {
        const json* v = verdict(name);
        return v && (*v)["status"] == "pass";
    }
    double detail(const std::string& name, const std::string& key) const {
        const json* v = verdict(name);
        return v && (*v)["detail"].contains(key) ? (*v)["detail"][key].get<double>() : -1.0;
    }
    double result(const std::string& key) const {
        return manifest.contains("results") && manifest["results"].contains(key) ? manifest["results"][key].get<double>()
                                                                                 : -1.0;
    }
    double seconds() const { return manifest.value("seconds", 1e300); }
    std::string setting(const std::string& key) const {
        return manifest.contains("config") && manifest["config"].contains(key) ? manifest["config"][key].get<std::string>()
                                                                               : "";
    }
};

Outcome run(const std::string& command, const std::string& config, const std::string& tag) {
    Outcome o;
    o.dir = out_root / tag;
    fs::remove_all(o.dir);
    std::ostringstream log;
    try {
        const RunConfig cfg = config.empty() ? RunConfig{} : RunConfig::load(config_dir / config);
        o.code = run_command(command, cfg, o.dir, log);
        std::ifstream in(o.dir / (command + "_manifest.json"));
        o.manifest = json::parse(in);
    } catch (const ConfigError& e) {
        o.code = exit_config;
        o.error = e.what();
    } catch (const ConvergenceError& e) {
        o.code = exit_convergence;
        o.error = e.what();
    }
    return o;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

int failures = 0;

void report(int id, bool ok, const std::string& title, const std::string& detail) {
    failures += !ok;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " | " << detail << std::endl;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main() {
    fs::create_directories(out_root);

    {
        const Outcome o = run("algebra", "", "algebra");
        const bool sized = o.setting("algebra.modes") == "4" && o.setting("algebra.n_max") == "3" &&
                           o.setting("algebra.draws") == "100" && o.setting("algebra.tol") == "1e-12";
        double worst = 0.0;
        std::size_t count = 0;
        if (o.manifest.contains("verdicts"))
            for (const auto& v : o.manifest["verdicts"]) {
                worst = std::max(worst, v["detail"].value("max_error", 0.0));
                ++count;
            }
        report(1, o.code == exit_pass && sized && o.seconds() < 10.0, "algebra identities on guarded sectors",
               std::to_string(count) + " identities, worst error " + fmt(worst) + ", " +
                   fmt(o.seconds()) + " s (limit 10 s)");
    }

    {
        const Outcome a = run("dispersion", "free_nonrel.ini", "free_nonrel");
        const Outcome b = run("dispersion", "free_rel.ini", "free_rel");
        const bool ok = a.passed("free_exactness") && b.passed("free_exactness") &&
                        a.detail("free_exactness", "points") == 20 && b.detail("free_exactness", "points") == 20;
        report(2, ok, "free fiber ground state equals (Omega(P), vacuum)",
               "nonrel max |E-Omega| " + fmt(a.detail("free_exactness", "max_energy_error")) + ", rel " +
                   fmt(b.detail("free_exactness", "max_energy_error")) + ", vacuum defect " +
                   fmt(std::max(a.detail("free_exactness", "max_vacuum_defect"),
                                b.detail("free_exactness", "max_vacuum_defect"))) +
                   " over 20 + 20 momenta (tol 1e-12)");
    }

    {
        const Outcome o = run("dispersion", "pt.ini", "pt");
        const double dim = o.result("dimension");
        const bool ok = o.passed("pt_exponent") && dim <= 2e4 && o.seconds() < 120.0;
        report(3, ok, "perturbative residual scales like g^p, p in [3.7, 4.3]",
               "p = " + fmt(o.detail("pt_exponent", "exponent")) + ", dimension " + fmt(dim) + ", " +
                   fmt(o.seconds()) + " s (limit 120 s)");
    }

    {
        const Outcome o = run("dispersion", "", "dispersion_default");
        report(4, o.passed("sandwich_lower") && o.passed("sandwich_upper"), "sandwich bound on the default scan",
               "min lower margin " + fmt(o.result("min_lower_margin")) + ", min upper margin " +
                   fmt(o.result("min_upper_margin")) + " (tol -1e-10)");
        report(5, o.passed("soft_absence"), "soft-boson occupancy for |g| <= g_beta / 2",
               "max soft " + fmt(o.result("max_soft")) + " (tol 1e-10), g_beta " + fmt(o.result("g_beta")) +
                   ", C " + fmt(o.result("C")));
    }

    {
        const Outcome o = run("mourre", "virial.ini", "virial");
        report(6, o.passed("virial"), "virial residual within 10 (eigen residual + mesh^2 scale)",
               "residual " + fmt(o.detail("virial", "residual")) + ", budget " + fmt(o.detail("virial", "budget")) +
                   ", mesh " + fmt(o.detail("virial", "mesh")) + ", scale " + fmt(o.detail("virial", "scale")));
    }

    {
        const Outcome o = run("mourre", "mourre_sweep.ini", "mourre_sweep");
        const bool ok = o.passed("positivity") && o.passed("positivity_half_sigma") && o.passed("deficit_slope") &&
                        o.passed("deficit_slope_half_sigma") && o.passed("sigma_stability");
        report(7, ok, "Mourre positivity, linear deficit, sigma vs sigma/2 within 5%",
               "min_r(g=0) " + fmt(o.detail("positivity", "min_r")) + ", slopes " +
                   fmt(o.detail("deficit_slope", "slope")) + " / " +
                   fmt(o.detail("deficit_slope_half_sigma", "slope")) + ", C " +
                   fmt(o.detail("sigma_stability", "C_sigma")) + " vs " +
                   fmt(o.detail("sigma_stability", "C_half_sigma")) + " (rel diff " +
                   fmt(o.detail("sigma_stability", "C_rel_diff")) + "), min_r rel diff " +
                   fmt(o.detail("sigma_stability", "min_r_rel_diff")));
    }

    {
        const Outcome a = run("evolve", "evolve_fiber.ini", "evolve_fiber");
        const Outcome b = run("evolve", "evolve_free.ini", "evolve_free");
        bool ok = a.result("dimension") <= 400 && b.passed("phase_exactness");
        for (const Outcome* o : {&a, &b})
            ok = ok && o->passed("norm_drift") && o->passed("energy_drift") && o->passed("dense_reference");
        report(8, ok, "norm and energy drift, Krylov vs dense propagation",
               "dimension " + fmt(a.result("dimension")) + ", norm rate " +
                   fmt(a.detail("norm_drift", "max_rate")) + ", energy rate " +
                   fmt(a.detail("energy_drift", "max_rate")) + ", dense mismatch " +
                   fmt(a.detail("dense_reference", "max_mismatch")) + ", free phase mismatch " +
                   fmt(b.detail("phase_exactness", "max_mismatch")));
    }

    {
        const Outcome o = run("evolve", "electron.ini", "electron");
        const bool ok = o.passed("final_below_threshold") && o.passed("tail_decreasing") &&
                        o.passed("resolution_agreement") && o.passed("momentum_conservation");
        report(9, ok, "electron maximal velocity",
               "final <F> " + fmt(o.detail("final_below_threshold", "final")) + " (limit 1e-3), refined " +
                   fmt(o.detail("resolution_agreement", "refined")) + ", rel diff " +
                   fmt(o.detail("resolution_agreement", "rel_diff")) + " (limit 0.1)" +
                   (o.error.empty() ? "" : ", error: " + o.error));
    }

    {
        const Outcome d = run("w", "w_dressed.ini", "w_dressed");
        const Outcome f = run("w", "w_free.ini", "w_free");
        const Outcome e = run("w", "w_excited.ini", "w_excited");
        const bool ok = d.passed("limit_zero") && f.passed("limit_one") && e.passed("positive") &&
                        e.passed("cap_stability");
        report(10, ok, "asymptotic boson counter w(t)",
               "dressed " + fmt(d.detail("limit_zero", "final")) + " (limit 1e-6), free " +
                   fmt(f.detail("limit_one", "final")) + " (1 +- 0.05), excited " +
                   fmt(e.detail("cap_stability", "final")) + " / " +
                   fmt(e.detail("cap_stability", "final_next_cap")) + " across caps (rel diff " +
                   fmt(e.detail("cap_stability", "rel_diff")) + ", limit 0.2)");
    }

    {
        struct Rerun {
            const char* command;
            const char* config;
            const char* tag;
        };
        const Rerun runs[] = {{"algebra", "", "algebra"},
                              {"dispersion", "pt.ini", "pt"},
                              {"mourre", "mourre_sweep.ini", "mourre_sweep"},
                              {"evolve", "electron.ini", "electron"},
                              {"w", "w_dressed.ini", "w_dressed"}};
        int files = 0, mismatches = 0;
        for (const auto& r : runs) {
            const Outcome again = run(r.command, r.config, std::string(r.tag) + "_rerun");
            if (!again.manifest.contains("files")) {
                ++mismatches;
                continue;
            }
            for (const auto& f : again.manifest["files"]) {
                const std::string name = f.get<std::string>();
                ++files;
                const std::string a = slurp(out_root / r.tag / name), b = slurp(again.dir / name);
                if (a.empty() || csv_body(a) != csv_body(b) || a.rfind("# config_hash: ", 0) != 0) ++mismatches;
            }
        }
        report(11, files > 0 && mismatches == 0, "reruns give byte-identical CSV bodies",
               std::to_string(files) + " files compared, " + std::to_string(mismatches) + " differ");
    }

    std::cout << (failures == 0 ? "all criteria passed" : "failed criteria: " + std::to_string(failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
