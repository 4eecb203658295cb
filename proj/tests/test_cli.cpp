#include "nelsonlab/app/commands.hpp"
#include "nelsonlab/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nelsonlab;
using namespace nelsonlab::app;
namespace fs = std::filesystem;

namespace {

const fs::path root = NELSONLAB_TEST_DIR;

fs::path write_config(const std::string& name, const std::string& text) {
    fs::create_directories(root);
    const fs::path p = root / name;
    std::ofstream(p) << text;
    return p;
}

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream o, e;
    const int code = cli_main(args, o, e);
    return {code, o.str(), e.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config parsing: sections, comments and normalization") {
    const RunConfig c = RunConfig::parse("# comment\n[model]\ng = 1e-1 ; trailing\n\n[basis]\nn_max = 3\n");
    CHECK(c.get_real("model.g") == 0.1);
    CHECK(c.get_text("model.g") == "0.1");
    CHECK(c.get_int("basis.n_max") == 3);
    CHECK(RunConfig().hash() == RunConfig().hash());
    CHECK(c.hash() != RunConfig().hash());
    CHECK(c.hash().size() == 16);
    const std::string canon = RunConfig().canonical();
    CHECK(canon.find("model.g = 0.05\n") != std::string::npos);
}

TEST_CASE("config errors name the offending line") {
    CHECK_THROWS_WITH_AS(RunConfig::parse("[model]\nfoo = 1\n", "x.ini"), doctest::Contains("x.ini:2"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("model.g = 1\nmodel.g = 2\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("basis.n_max = two\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("model.dispersion = quantum\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("model.modified = maybe\n"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("no equals sign\n"), ConfigError);
}

TEST_CASE("exit codes") {
    CHECK(run({"--help"}).code == exit_pass);
    CHECK(run({}).code == exit_config);
    CHECK(run({"nonsense"}).code == exit_config);
    CHECK(run({"--config", (root / "missing.ini").string(), "algebra"}).code == exit_config);

    const auto bad = write_config("bad.ini", "[model]\nfoo = 1\n");
    const Run r = run({"--config", bad.string(), "--out", (root / "bad").string(), "algebra"});
    CHECK(r.code == exit_config);
    CHECK(r.err.find("model.foo") != std::string::npos);

    const auto nc = write_config("nc.ini", "[solver]\ndense_below = 0\nsubspace = 4\nmax_restarts = 1\ntol = 1e-15\n"
                                           "[dispersion]\npoints = 1\npt_couplings =\n");
    CHECK(run({"--config", nc.string(), "--out", (root / "nc").string(), "dispersion"}).code == exit_convergence);
}

TEST_CASE("algebra: injected fault is named, n_max = 0 is vacuous") {
    const auto fault = write_config("fault.ini", "[algebra]\ninject_fault = ccr\ndraws = 5\n");
    const Run f = run({"--config", fault.string(), "--out", (root / "fault").string(), "algebra"});
    CHECK(f.code == exit_verdict);
    CHECK(f.out.find("FAIL algebra.ccr\n") != std::string::npos);

    const auto zero = write_config("zero.ini", "[algebra]\nn_max = 0\ndraws = 5\n");
    const Run z = run({"--config", zero.string(), "--out", (root / "zero").string(), "algebra"});
    CHECK(z.code == exit_pass);
    CHECK(z.out.find("vacuous") != std::string::npos);
}

TEST_CASE("artifacts carry the config hash and reruns are byte-identical") {
    const auto cfg = write_config("det.ini", "[model]\ng = 0.05\nmodified = true\n[grid]\nkind = line\nmodes = 12\n"
                                             "[dynamics]\nprobe = fiber\nt1 = 20\n");
    const RunConfig rc = RunConfig::load(cfg);
    for (const char* dir : {"det1", "det2"}) {
        const Run r = run({"--config", cfg.string(), "--out", (root / dir).string(), "--threads", "2", "evolve"});
        REQUIRE(r.code == exit_pass);
    }
    for (const char* f : {"evolve_track.csv", "evolve_reference.csv"}) {
        const std::string a = slurp(root / "det1" / f), b = slurp(root / "det2" / f);
        CHECK(a.rfind("# config_hash: " + rc.hash() + "\n", 0) == 0);
        CHECK(a == b);
    }
    const std::string manifest = slurp(root / "det1" / "evolve_manifest.json");
    CHECK(manifest.find("\"config_hash\": \"" + rc.hash() + "\"") != std::string::npos);
    CHECK(manifest.find("\"dynamics.probe\": \"fiber\"") != std::string::npos);
}

TEST_CASE("seed flag overrides run.seed and changes the hash") {
    const auto cfg = write_config("seed.ini", "[algebra]\ndraws = 2\n");
    REQUIRE(run({"--config", cfg.string(), "--out", (root / "s1").string(), "--seed", "5", "algebra"}).code == 0);
    const std::string m = slurp(root / "s1" / "algebra_manifest.json");
    CHECK(m.find("\"run.seed\": \"5\"") != std::string::npos);
}

TEST_CASE("report aggregates manifests") {
    const auto cfg = write_config("rep.ini", "[algebra]\ndraws = 2\n");
    const fs::path dir = root / "rep";
    fs::remove_all(dir);
    REQUIRE(run({"--config", cfg.string(), "--out", dir.string(), "algebra"}).code == 0);
    const Run r = run({"--out", dir.string(), "report"});
    CHECK(r.code == exit_pass);
    CHECK(slurp(dir / "report_summary.csv").find("\nalgebra,") != std::string::npos);
    CHECK(run({"--out", (root / "empty_dir").string(), "report"}).code == exit_config);
}
