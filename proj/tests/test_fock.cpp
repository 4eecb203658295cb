#include "nelsonlab/fock.hpp"
#include "nelsonlab/identities.hpp"
#include "nelsonlab/random.hpp"

#include <doctest.h>

using namespace nelsonlab;

namespace {

std::shared_ptr<const ModeGrid> small_grid(int modes = 4, std::uint64_t seed = 3) {
    return std::make_shared<const ModeGrid>(random_grid(modes, seed));
}

double max_abs(const SpMat& m) {
    double e = 0.0;
    for (Eigen::Index r = 0; r < m.outerSize(); ++r)
        for (SpMat::InnerIterator it(m, r); it; ++it) e = std::max(e, std::abs(it.value()));
    return e;
}

long binom(int n, int k) {
    long r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

} // namespace

TEST_CASE("basis size is the number of multisets") {
    for (int M : {1, 3, 5})
        for (int n : {0, 1, 2, 3}) CHECK(build_basis(small_grid(M), n)->size() == std::size_t(binom(M + n, n)));
}

TEST_CASE("basis starts at the vacuum and is graded by N") {
    const auto b = build_basis(small_grid(), 3);
    CHECK(b->total(0) == 0);
    for (std::size_t i = 1; i < b->size(); ++i) CHECK(b->total(i - 1) <= b->total(i));
    for (std::size_t i = 0; i < b->size(); ++i) CHECK(b->find(b->tuple(i)) == std::ptrdiff_t(i));
    CHECK(b->find_occupation({4, 0, 0, 0}) == -1);
}

TEST_CASE("energy cap removes expensive states") {
    const auto g = small_grid();
    const auto full = build_basis(g, 2);
    const auto capped = build_basis(g, 2, 1.0);
    CHECK(capped->size() < full->size());
    for (std::size_t i = 0; i < capped->size(); ++i) CHECK(capped->energy(i) <= 1.0 + 1e-12);
}

TEST_CASE("annihilation is the exact adjoint of creation") {
    const auto b = build_basis(small_grid(), 3);
    Rng rng(11);
    const CVec h = rng.cvec(4);
    const SpMat d = annihilation_op(*b, h).m - creation_op(*b, h).adjoint().m;
    CHECK(max_abs(d) == 0.0);
    CHECK(field_op(*b, h).hermitian);
}

TEST_CASE("canonical commutation relation on the guarded sector") {
    const auto g = small_grid();
    const auto b = build_basis(g, 3);
    Rng rng(5);
    const CVec f = rng.cvec(4), h = rng.cvec(4);
    const SparseOperator a = annihilation_op(*b, f), c = creation_op(*b, h);
    const CMat comm = (a * c - c * a).dense();
    const cplx expect = weighted_inner(*g, f, h);
    for (std::size_t i = 0; i < b->size(); ++i) {
        if (b->total(i) > 2) continue;
        for (std::size_t k = 0; k < b->size(); ++k) {
            const cplx want = i == k ? expect : cplx(0.0);
            CHECK(std::abs(comm(std::ptrdiff_t(k), std::ptrdiff_t(i)) - want) < 1e-12);
        }
    }
}

TEST_CASE("dGamma of the identity is the number operator") {
    const auto b = build_basis(small_grid(), 3);
    const SparseOperator n = number_op(*b);
    const SparseOperator d = dGamma(*b, CMat::Identity(4, 4));
    CHECK(max_abs(n.m - d.m) < 1e-14);
    for (std::size_t i = 0; i < b->size(); ++i) CHECK(n.m.coeff(std::ptrdiff_t(i), std::ptrdiff_t(i)).real() == doctest::Approx(b->total(i)));
}

TEST_CASE("Gamma of a unitary is unitary and preserves N") {
    const auto g = small_grid();
    const auto b = build_basis(g, 3);
    Rng rng(8);
    const CMat u = rng.isometry(4, 4);
    // unitary in orthonormal coordinates, mapped back to samples
    const CMat us = from_orthonormal(*g, u, *g);
    const CMat G = Gamma(*b, us).dense();
    CHECK((G.adjoint() * G - CMat::Identity(G.rows(), G.cols())).norm() < 1e-12);
    const CMat N = number_op(*b).dense();
    CHECK((G * N - N * G).norm() < 1e-12);
}

TEST_CASE("one-body density reproduces dGamma expectations") {
    const auto g = small_grid();
    const auto b = build_basis(g, 2);
    Rng rng(2);
    CVec psi = rng.cvec(std::ptrdiff_t(b->size()));
    psi.normalize();
    const CMat bt = rng.hermitian(4);
    const CMat rho = one_body_density(*b, psi);
    cplx s = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) s += bt(i, j) * rho(i, j);
    const cplx direct = psi.dot(dGamma_orthonormal(*b, bt).apply(psi));
    CHECK(std::abs(s - direct) < 1e-12);
    CHECK((apply_dGamma_orthonormal(*b, bt, psi) - dGamma_orthonormal(*b, bt).apply(psi)).norm() < 1e-12);
}

TEST_CASE("interacting projector keeps exactly the states without soft modes") {
    auto g = std::make_shared<ModeGrid>(line_grid(8, 1.0, 0.3));
    const auto b = build_basis(g, 2);
    const SparseOperator p = interacting_projector(*b, 0.3);
    for (std::size_t i = 0; i < b->size(); ++i) {
        bool soft = false;
        for (auto q = b->begin(i); q != b->end(i); ++q) soft = soft || g->abs_k(*q) <= 0.3;
        CHECK(p.m.coeff(std::ptrdiff_t(i), std::ptrdiff_t(i)).real() == (soft ? 0.0 : 1.0));
    }
}

TEST_CASE("line grid is symmetric and avoids k = 0") {
    const ModeGrid g = line_grid(10, 2.0, 0.1);
    REQUIRE(g.size() == 10);
    CHECK(g.spacing == doctest::Approx(0.4));
    for (std::size_t j = 0; j < 10; ++j) {
        CHECK(g.points[j][0] == doctest::Approx(-g.points[9 - j][0]));
        CHECK(g.abs_k(j) > 0.0);
    }
}

TEST_CASE("modified dispersion is bounded below and equals |k| above sigma") {
    const double s = 0.2;
    for (double r = 0.0; r < 1.0; r += 0.01) {
        CHECK(modified_dispersion(r, s) >= s / 2 - 1e-15);
        CHECK(modified_dispersion(r, s) >= r - 1e-15);
        if (r >= s) CHECK(modified_dispersion(r, s) == doctest::Approx(r).epsilon(1e-14));
    }
}
