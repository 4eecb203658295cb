#include "nelsonlab/model.hpp"
#include "nelsonlab/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace nelsonlab;

TEST_CASE("smooth step is monotone with exact plateaus") {
    double prev = 0.0;
    for (int i = -10; i <= 110; ++i) {
        const double x = 0.01 * i;
        const double v = smooth_step(x, 0.0, 1.0);
        CHECK(v >= prev);
        prev = v;
        if (x <= 0.0) CHECK(v == 0.0);
        if (x >= 1.0) CHECK(v == 1.0);
        CHECK(v + smooth_step(1.0 - x, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
    }
    // derivative against a central difference
    for (double x : {0.2, 0.5, 0.8}) {
        const double h = 1e-6;
        const double fd = (smooth_step(x + h, 0.0, 1.0) - smooth_step(x - h, 0.0, 1.0)) / (2 * h);
        CHECK(smooth_step_derivative(x, 0.0, 1.0) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("built-in dispersions") {
    const Dispersion nr = Dispersion::nonrelativistic(2.0);
    CHECK(nr.value(1.0) == doctest::Approx(0.25));
    CHECK(nr.radial_derivative(1.0) == doctest::Approx(0.5));
    CHECK(nr.hessian_bound() == doctest::Approx(0.5));
    CHECK(nr.o_beta(0.5) == doctest::Approx(0.25));

    const Dispersion rel = Dispersion::relativistic(1.0);
    CHECK(rel.value(0.0) == doctest::Approx(1.0));
    CHECK(rel.o_beta(0.5) == doctest::Approx(1.1547005383792517));
    CHECK(std::isinf(rel.o_beta(1.0)));
    for (double p = 0.0; p < 5.0; p += 0.25) CHECK(std::abs(rel.radial_derivative(p)) < 1.0);

    CHECK_THROWS_AS(Dispersion::nonrelativistic(0.0), ConfigError);
}

TEST_CASE("tabulated dispersion reproduces a smooth table") {
    std::vector<double> t;
    for (int i = 0; i < 40; ++i) t.push_back(0.5 * (0.1 * i) * (0.1 * i));
    const Dispersion d = Dispersion::tabulated(t, 0.1);
    for (double p : {0.05, 0.73, 2.5}) {
        CHECK(d.value(p) == doctest::Approx(0.5 * p * p).epsilon(1e-6));
        CHECK(d.radial_derivative(p) == doctest::Approx(p).epsilon(1e-4));
    }
    CHECK_THROWS_AS(Dispersion::tabulated({1.0, 0.5, 0.2, 0.1}, 0.1).o_beta(0.5), ConfigError);
}

TEST_CASE("g_beta formula, frozen values") {
    CHECK(g_beta_formula(1.0, 0.25, 0.5, 0.125) == doctest::Approx(0.2222222222222222).epsilon(1e-15));
    CHECK(g_beta_formula(1.0, 0.01, 0.5, 0.125) == doctest::Approx(0.6172839506172839).epsilon(1e-15));
    CHECK(g_beta_formula(0.5, 2.0, 0.3, 0.0225) == doctest::Approx(0.161516275236918).epsilon(1e-14));
    CHECK(g_beta_formula(1.0, 1e-4, 0.1, 0.005) == 1.0);
}

TEST_CASE("form factor support and infrared switch") {
    FormFactor ff{1.0, 1.0, 0.1};
    CHECK(ff.kappa(1.0) == 0.0);
    CHECK(ff.kappa(0.0) == doctest::Approx(std::exp(-1.0)));
    CHECK(ff.kappa_sigma(0.1) == 0.0);
    CHECK(ff.kappa_sigma(0.05) == 0.0);
    CHECK(ff.kappa_sigma(0.2) == ff.kappa(0.2));
}

TEST_CASE("model validation") {
    ModelSpec ms;
    CHECK_THROWS_AS(ms.validate(), ConfigError);
    ms.grid = std::make_shared<ModeGrid>(line_grid(10, 1.0, 0.1));
    ms.ff.sigma = 0.1;
    CHECK_NOTHROW(ms.validate());
    ms.ff.lambda = 0.15;
    CHECK_THROWS_AS(ms.validate(), ConfigError);
}

TEST_CASE("free boson dispersion is subadditive on the grid") {
    const ModeGrid g = line_grid(40, 1.0, 0.1);
    CHECK(subadditivity_violation(g) <= 1e-12);
}

namespace {

ModelSpec lattice_spec(int L, double a, int modes) {
    ModelSpec ms;
    ms.ff.sigma = 0.1;
    ms.grid = std::make_shared<ModeGrid>(line_grid_spacing(modes, 4.0 * std::numbers::pi / (L * a), 0.1));
    ms.g = 0.3;
    ms.brillouin = 2.0 * std::numbers::pi / a;
    return ms;
}

} // namespace

TEST_CASE("full lattice Hamiltonian decomposes into fibers") {
    const int L = 8;
    const ModelSpec ms = lattice_spec(L, 1.0, 4);
    const BasisPtr b = build_basis(ms.grid, 2);
    const LatticeModel lm = make_lattice_model(ms, L, 1.0, b);
    const SparseOperator H = build_full_H(ms, lm);
    CHECK(H.hermitian);
    const CMat Hd = H.dense();

    const CMat Ptot = total_momentum_op(lm).dense();
    CHECK((Hd * Ptot - Ptot * Hd).norm() < 1e-13);

    for (int c = -L / 2; c < L / 2; ++c) {
        const auto idx = momentum_block(lm, c);
        REQUIRE(idx.size() == b->size());
        CMat blk(std::ptrdiff_t(idx.size()), std::ptrdiff_t(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < idx.size(); ++j)
                blk(std::ptrdiff_t(i), std::ptrdiff_t(j)) = Hd(std::ptrdiff_t(idx[i]), std::ptrdiff_t(idx[j]));
        const RVec e_full = dense_spectrum(blk).values;
        const RVec e_fiber = dense_spectrum(build_fiber_H(ms, {c * lm.dk(), 0.0, 0.0}, *b).dense()).values;
        CHECK((e_full - e_fiber).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("lattice rejects bosons off the dual lattice") {
    ModelSpec ms = lattice_spec(8, 1.0, 4);
    ms.grid = std::make_shared<ModeGrid>(line_grid(4, 1.0, 0.1));
    CHECK_THROWS_AS(make_lattice_model(ms, 8, 1.0, build_basis(ms.grid, 1)), ConfigError);
}

TEST_CASE("interaction decays in position space") {
    const DecayReport rep = interaction_decay_report(FormFactor{1.0, 1.0, 0.1}, {2.0, 4.0, 8.0, 16.0});
    REQUIRE(rep.rows.size() == 4);
    for (std::size_t i = 1; i < rep.rows.size(); ++i) CHECK(rep.rows[i].tail < rep.rows[i - 1].tail);
    CHECK(rep.rows[0].tail <= rep.norm);
}
