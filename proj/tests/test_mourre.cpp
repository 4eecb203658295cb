#include "nelsonlab/mourre.hpp"

#include <doctest.h>

#include <cmath>

using namespace nelsonlab;

namespace {

ModelSpec radial_model(double g, int shells = 6, double sigma = 0.1) {
    ModelSpec ms;
    ms.disp = Dispersion::nonrelativistic(4.0);
    ms.ff.sigma = sigma;
    ms.ff.lambda = 0.576;
    ms.grid = std::make_shared<ModeGrid>(radial_grid(shells, 0.576, 6, sigma));
    ms.g = g;
    return ms;
}

} // namespace

TEST_CASE("position and dilation matrices are exactly Hermitian") {
    for (const ModeGrid& g : {line_grid(20, 1.0, 0.1), radial_grid(4, 1.0, 6, 0.1)}) {
        const ConjugateOp c = build_conjugate(g, false);
        CHECK((c.y - c.y.adjoint()).norm() == 0.0);
        CHECK((c.a - c.a.adjoint()).norm() == 0.0);
        CHECK(c.mesh > 0.0);
    }
    const ModeGrid line = line_grid(20, 1.0, 0.1);
    const ConjugateOp c = build_conjugate(line, false);
    for (std::size_t j = 0; j < line.size(); ++j)
        CHECK(std::abs(c.speed(std::ptrdiff_t(j))) == doctest::Approx(1.0));
}

TEST_CASE("second-quantized conjugate and commutator are Hermitian") {
    const ModelSpec ms = radial_model(0.05, 3);
    const BasisPtr b = build_basis(ms.grid, 2);
    const ConjugateOp c = build_conjugate(*ms.grid, false);
    CHECK(conjugate_A(*b, c).hermitian);
    const CMat K = commutator_iHA(ms, {0.1, 0.0, 0.0}, *b, c).dense();
    CHECK((K - K.adjoint()).norm() < 1e-14);
}

TEST_CASE("virial residual vanishes for the free vacuum") {
    const ModelSpec ms = radial_model(0.0, 3);
    const BasisPtr b = build_basis(ms.grid, 2);
    const ConjugateOp c = build_conjugate(*ms.grid, false);
    const VirialReport v = virial_check(ms, {0.0, 0.0, 0.0}, *b, c, EigenOptions{});
    CHECK(v.residual <= 1e-14);
    CHECK(v.matrix_residual <= 1e-14);
    CHECK(commutator_field_term(ms, *b, c).dense().norm() == 0.0);
}

TEST_CASE("virial residual within budget for a dressed state") {
    const ModelSpec ms = radial_model(0.05, 4);
    const BasisPtr b = build_basis(ms.grid, 2);
    const ConjugateOp c = build_conjugate(*ms.grid, false);
    const VirialReport v = virial_check(ms, {0.1, 0.0, 0.0}, *b, c, EigenOptions{});
    CHECK(v.matrix_residual <= 2.0 * v.eigen_residual * v.a_norm + 1e-14);
    CHECK(v.residual <= 10.0 * v.budget());
}

TEST_CASE("positive commutator at g = 0 and linear deficit in g") {
    ModelSpec ms = radial_model(0.0);
    const BasisPtr b = build_basis(ms.grid, 2);
    const ConjugateOp c = build_conjugate(*ms.grid, false);
    std::vector<MourreReport> sweep;
    for (double g : {0.0, 0.02, 0.04}) {
        ms.g = g;
        sweep.push_back(mourre_scan(ms, {0.0, 0.0, 0.0}, 0.5, 0.5, *b, c, 16, 3));
    }
    CHECK(sweep[0].min_r >= -1e-10);
    CHECK(sweep[0].deficit == 0.0);
    CHECK(sweep[0].samples.size() == 16);
    const MourreFit f = fit_deficit(sweep);
    CHECK(f.slope == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("empty spectral window is a configuration error") {
    const ModelSpec ms = radial_model(0.0, 3);
    const BasisPtr b = build_basis(ms.grid, 2);
    const ConjugateOp c = build_conjugate(*ms.grid, false);
    CHECK_THROWS_AS(mourre_scan(ms, {0.0, 0.0, 0.0}, 1e-6, 0.5, *b, c, 4, 1), ConfigError);
}

TEST_CASE("deficit fit on synthetic reports") {
    std::vector<MourreReport> sw(4);
    const double gs[] = {0.0, 0.01, 0.02, 0.04};
    for (int i = 0; i < 4; ++i) {
        sw[std::size_t(i)].g = gs[i];
        sw[std::size_t(i)].deficit = 0.3 * gs[i];
    }
    const MourreFit f = fit_deficit(sw);
    CHECK(f.slope == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.C == doctest::Approx(0.3).epsilon(1e-12));
}
