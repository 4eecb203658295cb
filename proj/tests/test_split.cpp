#include "nelsonlab/identities.hpp"
#include "nelsonlab/random.hpp"
#include "nelsonlab/split.hpp"

#include <doctest.h>

#include <cmath>

using namespace nelsonlab;

namespace {

struct Fixture {
    std::shared_ptr<const ModeGrid> grid = std::make_shared<const ModeGrid>(random_grid(3, 17));
    BasisPtr basis = build_basis(grid, 3);
    TensorBasis tb{basis, basis, 3};
};

// (a*(h))^n Omega
CVec power_state(const OccupationBasis& b, const BasisPtr& bp, const CVec& h, int n) {
    const SparseOperator c = creation_op(b, h);
    CVec v = FockVector::vacuum(bp).amps;
    for (int i = 0; i < n; ++i) v = c.apply(v);
    return v;
}

CVec product(const TensorBasis& tb, const CVec& l, const CVec& r) {
    CVec out(std::ptrdiff_t(tb.size()));
    for (std::size_t i = 0; i < tb.size(); ++i) {
        const auto [a, b] = tb.pair(i);
        out(std::ptrdiff_t(i)) = l(std::ptrdiff_t(a)) * r(std::ptrdiff_t(b));
    }
    return out;
}

} // namespace

TEST_CASE("tensor basis respects the caps") {
    Fixture f;
    for (std::size_t i = 0; i < f.tb.size(); ++i) {
        const auto [l, r] = f.tb.pair(i);
        CHECK(f.basis->total(l) + f.basis->total(r) <= 3);
        CHECK(f.tb.find(l, r) == std::ptrdiff_t(i));
    }
}

TEST_CASE("U is unitary between F(h + h) and the tensor basis") {
    Fixture f;
    const auto g2 = std::make_shared<const ModeGrid>(direct_sum(*f.grid, *f.grid));
    const auto b2 = build_basis(g2, 3);
    const CMat U = tensor_iso_U(*b2, f.tb).dense();
    REQUIRE(U.rows() == U.cols());
    CHECK((U.adjoint() * U - CMat::Identity(U.rows(), U.cols())).norm() < 1e-12);
}

// Gamma-breve(j) (a*(h))^n Omega = sum_k C(n, k) (a*(h/sqrt2))^k Omega x (a*(h/sqrt2))^(n-k) Omega
// for j0 = jinf = 1/sqrt2, since a*(j h) splits into two commuting creators.
TEST_CASE("binomial expansion of a split tensor power") {
    Fixture f;
    SplitPair sp;
    sp.j0 = CMat::Identity(3, 3) / std::sqrt(2.0);
    sp.jinf = sp.j0;
    sp.classify(*f.grid);
    CHECK(sp.isometric);
    CHECK_FALSE(sp.partition);

    Rng rng(4);
    const CVec h = rng.cvec(3);
    const SparseOperator G = breve_gamma(sp, *f.basis, f.tb);
    for (int n = 0; n <= 3; ++n) {
        const CVec lhs = G.apply(power_state(*f.basis, f.basis, h, n));
        CVec rhs = CVec::Zero(lhs.size());
        double c = 1.0;
        for (int k = 0; k <= n; ++k) {
            rhs += c * product(f.tb, power_state(*f.basis, f.basis, h / std::sqrt(2.0), k),
                               power_state(*f.basis, f.basis, h / std::sqrt(2.0), n - k));
            c = c * (n - k) / (k + 1);
        }
        CHECK((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
    }
}

TEST_CASE("isometric split gives an isometric Gamma-breve") {
    Fixture f;
    SplitPair sp;
    const double c = std::cos(0.7), s = std::sin(0.7);
    sp.j0 = c * CMat::Identity(3, 3);
    sp.jinf = s * CMat::Identity(3, 3);
    const CMat G = breve_gamma(sp, *f.basis, f.tb).dense();
    CHECK((G.adjoint() * G - CMat::Identity(G.cols(), G.cols())).norm() < 1e-12);
}

TEST_CASE("identification undoes a partition of unity") {
    Fixture f;
    SplitPair sp;
    RVec c(3);
    c << 0.2, 0.5, 0.9;
    sp.j0 = c.cast<cplx>().asDiagonal();
    sp.jinf = (RVec::Ones(3) - c).cast<cplx>().asDiagonal();
    sp.classify(*f.grid);
    CHECK(sp.partition);
    const IdentResult I = scattering_ident(f.tb, *f.basis);
    CHECK(I.overflow == 0);
    const CMat prod = (I.op * breve_gamma(sp, *f.basis, f.tb)).dense();
    CHECK((prod - CMat::Identity(prod.rows(), prod.cols())).norm() < 1e-12);
}

TEST_CASE("right vacuum projector is an orthogonal projection") {
    Fixture f;
    const CMat P = right_vacuum_projector(f.tb).dense();
    CHECK((P * P - P).norm() < 1e-15);
    CHECK((P.adjoint() - P).norm() == 0.0);
    for (std::size_t i = 0; i < f.tb.size(); ++i) {
        const bool vac = f.basis->total(f.tb.pair(i).second) == 0;
        CHECK(P(std::ptrdiff_t(i), std::ptrdiff_t(i)).real() == (vac ? 1.0 : 0.0));
    }
}

TEST_CASE("number operators on the two legs add up") {
    Fixture f;
    const auto g2 = std::make_shared<const ModeGrid>(direct_sum(*f.grid, *f.grid));
    const auto b2 = build_basis(g2, 3);
    const SparseOperator U = tensor_iso_U(*b2, f.tb);
    const SparseOperator N = number_op(*f.basis);
    const CMat lhs = (left_op(f.tb, N) + right_op(f.tb, N)).dense();
    const CMat rhs = (U * number_op(*b2) * U.adjoint()).dense();
    CHECK((lhs - rhs).norm() < 1e-12);
}

TEST_CASE("algebra suite passes on the default configuration and names injected faults") {
    AlgebraConfig cfg;
    cfg.draws = 5;
    const AlgebraReport ok = run_algebra_suite(cfg);
    CHECK(ok.passed());
    cfg.inject_fault = "geq2";
    const AlgebraReport bad = run_algebra_suite(cfg);
    REQUIRE(bad.failures().size() == 1);
    CHECK(bad.failures()[0] == "geq2");
}

TEST_CASE("n_max = 0 leaves the guarded identities vacuous") {
    AlgebraConfig cfg;
    cfg.n_max = 0;
    cfg.draws = 3;
    const AlgebraReport rep = run_algebra_suite(cfg);
    CHECK(rep.passed());
    int vacuous = 0;
    for (const auto& c : rep.checks) vacuous += c.vacuous;
    CHECK(vacuous > 0);
}
