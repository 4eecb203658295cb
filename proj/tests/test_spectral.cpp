#include "nelsonlab/random.hpp"
#include "nelsonlab/spectral.hpp"

#include <doctest.h>

#include <cmath>

using namespace nelsonlab;

namespace {

ModelSpec line_model(int modes, double sigma, double g, int dim = 1) {
    ModelSpec ms;
    ms.ff.sigma = sigma;
    ms.grid = dim == 1 ? std::make_shared<ModeGrid>(line_grid(modes, 1.0, sigma))
                       : std::make_shared<ModeGrid>(radial_grid(modes, 1.0, 6, sigma));
    ms.g = g;
    return ms;
}

// Independent evaluation of the second-order energy, straight from the mode sum.
double pt_oracle(const ModelSpec& ms, double P) {
    const ModeGrid& g = *ms.grid;
    const double om = ms.disp.value(P);
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double k = g.points[j][0];
        const double kap = ms.ff.kappa_sigma(std::abs(k));
        s += g.weights[j] * kap * kap / (ms.disp.value(P - k) + std::abs(k) - om);
    }
    return om - 0.5 * ms.g * ms.g * s;
}

} // namespace

TEST_CASE("Lanczos agrees with the dense solver") {
    const ModelSpec ms = line_model(30, 0.1, 0.2);
    const BasisPtr b = build_basis(ms.grid, 2);
    const SparseOperator H = build_fiber_H(ms, {0.3, 0.0, 0.0}, *b);
    EigenOptions lanczos;
    lanczos.dense_below = 0;
    lanczos.count = 3;
    lanczos.tol = 1e-11;
    const SpectralResult it = ground_state(H, lanczos);
    const SpectralResult dn = dense_spectrum(H.dense());
    CHECK(it.method != dn.method);
    for (int i = 0; i < 3; ++i) CHECK(it.values(i) == doctest::Approx(dn.values(i)).epsilon(1e-10));
    CHECK(it.residuals.maxCoeff() <= 1e-11 * std::max(1.0, std::abs(it.values(2))));
    CHECK(std::abs(it.vectors.col(0).dot(dn.vectors.col(0))) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("free fiber ground state is the vacuum with energy Omega(P)") {
    const ModelSpec ms = line_model(20, 0.1, 0.0);
    const BasisPtr b = build_basis(ms.grid, 2);
    for (double P : {0.0, 0.4, 0.9}) {
        const SpectralResult r = ground_state(build_fiber_H(ms, {P, 0.0, 0.0}, *b), EigenOptions{});
        CHECK(std::abs(r.values(0) - ms.disp.value(P)) <= 1e-12);
        CHECK(std::abs(r.vectors(0, 0) - 1.0) <= 1e-12);
        CHECK(soft_boson_occupancy(*b, r.vectors.col(0), 0.1) == 0.0);
    }
}

TEST_CASE("second-order energy matches the mode-sum oracle") {
    ModelSpec ms = line_model(100, 0.2, 0.05);
    for (double P : {0.0, 0.2})
        CHECK(second_order_energy(ms, {P, 0.0, 0.0}) == doctest::Approx(pt_oracle(ms, P)).epsilon(1e-13));
}

TEST_CASE("perturbative residual scales like g^4") {
    ModelSpec ms = line_model(60, 0.2, 0.0);
    const BasisPtr b = build_basis(ms.grid, 2);
    std::vector<double> res;
    for (double g : {0.02, 0.04, 0.08}) {
        ms.g = g;
        const double e = ground_state(build_fiber_H(ms, {0.0, 0.0, 0.0}, *b), EigenOptions{}).values(0);
        res.push_back(std::abs(e - pt_oracle(ms, 0.0)));
    }
    for (std::size_t i = 1; i < res.size(); ++i) {
        const double p = std::log(res[i] / res[i - 1]) / std::log(2.0);
        CHECK(p > 3.7);
        CHECK(p < 4.3);
    }
}

TEST_CASE("sandwich and soft-boson bounds on a small radial grid") {
    const ModelSpec ms = line_model(4, 0.1, 0.05, 3);
    const BasisPtr b = build_basis(ms.grid, 2);
    std::vector<Vec3> Ps{{0.0, 0.0, 0.0}, {0.3, 0.0, 0.0}, {0.6, 0.0, 0.0}};
    const DispersionCurve c = dispersion_scan(ms, Ps, b, EigenOptions{}, 0.5);
    REQUIRE(c.points.size() == 3);
    CHECK(std::abs(ms.g) <= 0.5 * c.g_beta);
    for (const auto& p : c.points) {
        CHECK(p.upper_margin >= -1e-10);
        CHECK(p.lower_margin >= -1e-10);
        CHECK(p.soft < 1e-10);
        CHECK(p.simple);
    }
}

TEST_CASE("phase convention makes the vacuum amplitude nonnegative") {
    Rng rng(1);
    CVec v = rng.cvec(5);
    fix_phase(v);
    CHECK(v(0).imag() == 0.0);
    CHECK(v(0).real() >= 0.0);
}

TEST_CASE("gradient bound formula") {
    CHECK(grad_bound_formula(Dispersion::nonrelativistic(1.0), 0.08) == doctest::Approx(0.4));
    CHECK(grad_bound_formula(Dispersion::relativistic(1.0), 0.5) == 0.0);
    CHECK(grad_bound_formula(Dispersion::relativistic(1.0), 2.0) == doctest::Approx(std::sqrt(0.75)));
}
