#include "nelsonlab/dynamics.hpp"
#include "nelsonlab/mourre.hpp"
#include "nelsonlab/random.hpp"
#include "nelsonlab/spectral.hpp"

#include <doctest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

using namespace nelsonlab;

namespace {

SparseOperator random_sparse_hermitian(int n, std::uint64_t seed) {
    Rng rng(seed);
    CMat h = CMat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        h(i, i) = rng.uniform(-2.0, 2.0);
        for (int k = 1; k <= 3 && i + k < n; ++k) {
            const cplx v = 0.5 * rng.cnormal();
            h(i, i + k) = v;
            h(i + k, i) = std::conj(v);
        }
    }
    SparseOperator op;
    op.m = h.sparseView();
    op.hermitian = true;
    return op;
}

} // namespace

TEST_CASE("Krylov propagation matches the dense matrix exponential") {
    const SparseOperator H = random_sparse_hermitian(60, 9);
    Rng rng(2);
    CVec psi0 = rng.cvec(60);
    psi0.normalize();
    const CMat Hd = H.dense();
    for (double t : {0.3, 5.0, -7.5, 40.0}) {
        KrylovPropagator prop(H, KrylovOptions{});
        CVec psi = psi0;
        prop.advance(psi, t);
        const CMat U = (cplx(0.0, -t) * Hd).exp();
        CHECK((psi - U * psi0).norm() <= 1e-9);
        CHECK(std::abs(psi.norm() - 1.0) <= 1e-12);
    }
}

TEST_CASE("Chebyshev functional calculus matches the dense path") {
    const SparseOperator H = random_sparse_hermitian(80, 4);
    Rng rng(6);
    const CVec v = rng.cvec(80);
    auto f = [](double x) { return std::exp(-x * x); };
    const CVec dense = apply_function(H, v, f, 2000);
    const CVec cheb = apply_function(H, v, f, 0, 1e-12);
    CHECK((dense - cheb).norm() <= 1e-9 * v.norm());
}

TEST_CASE("geometric time grid") {
    const auto t = geometric_times(1.0, 100.0, 1.5);
    CHECK(t.front() == 1.0);
    CHECK(t.back() == 100.0);
    for (std::size_t i = 1; i + 1 < t.size(); ++i) CHECK(t[i] / t[i - 1] == doctest::Approx(1.5));
    CHECK_THROWS_AS(geometric_times(0.0, 1.0, 2.0), ConfigError);
    CHECK_THROWS_AS(geometric_times(1.0, 2.0, 1.0), ConfigError);
}

TEST_CASE("cutoff set: j0 chi vanishes and j0^2 + jinf^2 = 1") {
    const CutoffSet c;
    CHECK_NOTHROW(c.validate());
    for (int i = 0; i <= 200; ++i) {
        const double s = 0.005 * i;
        CHECK(c.j0(s) * c.chi(s) == 0.0);
        CHECK(c.j0(s) * c.j0(s) + c.jinf(s) * c.jinf(s) == doctest::Approx(1.0).epsilon(1e-15));
        if (s <= c.beta0) CHECK(c.F(s) == 0.0);
    }
    CutoffSet bad;
    bad.beta2 = 0.2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("energy window") {
    const EnergyWindow w{0.0, 1.0, 0.5};
    CHECK(w(0.5) == 1.0);
    CHECK(w(-0.5) == 0.0);
    CHECK(w(1.6) == 0.0);
    CHECK(w(1.2) > 0.0);
    CHECK(w(1.2) < 1.0);
    CHECK(EnergyWindow{}.trivial());
}

TEST_CASE("position functional calculus") {
    const CMat y = build_position_op(line_grid(16, 1.0, 0.1));
    const PositionCalculus pc(y);
    CHECK((pc.apply([](double) { return 1.0; }) - CMat::Identity(16, 16)).norm() < 1e-12);
    CHECK((pc.apply([](double e) { return e; }) - y).norm() < 1e-12);
}

TEST_CASE("track trend helper") {
    Track tr;
    for (double v : {5.0, 4.0, 3.0, 2.0, 1.0}) tr.rows.push_back(TrackRow{0.0, v});
    CHECK(tr.tail_decreasing(0.0));
    tr.rows.push_back(TrackRow{0.0, 1.5});
    CHECK_FALSE(tr.tail_decreasing(0.1));
    CHECK(tr.tail_decreasing(1.0));
}

TEST_CASE("free fiber evolution conserves norm and energy") {
    ModelSpec ms;
    ms.ff.sigma = 0.1;
    ms.grid = std::make_shared<ModeGrid>(line_grid(12, 1.0, 0.1));
    ms.g = 0.1;
    const BasisPtr b = build_basis(ms.grid, 2);
    const SparseOperator H = build_fiber_H(ms, {0.2, 0.0, 0.0}, *b);
    Rng rng(3);
    CVec psi = rng.cvec(H.rows());
    psi.normalize();
    const Track tr = evolve_track(H, psi, geometric_times(1.0, 50.0, 2.0),
                                  [](double, const CVec& v) { return v.norm(); }, KrylovOptions{}, "norm");
    for (const auto& r : tr.rows) {
        CHECK(r.norm_drift <= 1e-9 * r.t);
        CHECK(r.energy_drift <= 1e-8 * r.t);
    }
}

TEST_CASE("w(t) is identically zero on the vacuum") {
    ModelSpec ms;
    ms.ff.sigma = 0.2;
    ms.grid = std::make_shared<ModeGrid>(line_grid(40, 2.0, 0.2));
    ms.use_modified = true;
    const BasisPtr b = build_basis(ms.grid, 1);
    const SparseOperator H = build_fiber_H(ms, {0.0, 0.0, 0.0}, *b);
    const CVec vac = FockVector::vacuum(b).amps;
    const Track tr = W_estimate(H, *b, build_position_op(*ms.grid), EnergyWindow{}, CutoffSet{}, vac,
                                geometric_times(1.0, 10.0, 2.0), KrylovOptions{});
    for (const auto& r : tr.rows) CHECK(r.value == 0.0);
}

TEST_CASE("routing everything inside puts the whole W+ image on the outer vacuum") {
    ModelSpec ms;
    ms.ff.sigma = 0.2;
    ms.grid = std::make_shared<ModeGrid>(line_grid(16, 2.0, 0.2));
    ms.use_modified = true;
    ms.g = 0.05;
    const BasisPtr b = build_basis(ms.grid, 1);
    const TensorBasis tb(b, b, 1);
    const SparseOperator H = build_fiber_H(ms, {0.0, 0.0, 0.0}, *b);
    Rng rng(12);
    CVec psi = rng.cvec(H.rows());
    psi.normalize();
    const CMat y = build_position_op(*ms.grid);
    const auto times = geometric_times(1.0, 4.0, 2.0);
    const WPlusProbe in = W_plus_probe(ms, {0.0, 0.0, 0.0}, *b, tb, y, EnergyWindow{}, EnergyWindow{}, CutoffSet{},
                                       psi, times, KrylovOptions{}, true);
    for (std::size_t i = 0; i < in.total.rows.size(); ++i)
        CHECK(in.total.rows[i].value == doctest::Approx(in.outer_vacuum.rows[i].value).epsilon(1e-12));
    const WPlusProbe split = W_plus_probe(ms, {0.0, 0.0, 0.0}, *b, tb, y, EnergyWindow{}, EnergyWindow{},
                                          CutoffSet{}, psi, times, KrylovOptions{}, false);
    for (const auto& r : split.outer_vacuum.rows) CHECK(r.value <= 1e-12);
}
