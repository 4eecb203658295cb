#include "nelsonlab/spectral.hpp"

#include "nelsonlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace nelsonlab {

namespace {

bool is_real(const SpMat& m) {
    for (Eigen::Index r = 0; r < m.outerSize(); ++r)
        for (SpMat::InnerIterator it(m, r); it; ++it)
            if (it.value().imag() != 0.0) return false;
    return true;
}

void finish(SpectralResult& r, const SparseOperator& H) {
    r.residuals.resize(r.values.size());
    for (Eigen::Index i = 0; i < r.values.size(); ++i) {
        fix_phase(r.vectors.col(i));
        r.residuals(i) = (H.apply(r.vectors.col(i)) - r.values(i) * r.vectors.col(i)).norm();
    }
    if (r.values.size() > 1) {
        r.gap = r.values(1) - r.values(0);
        r.simple = r.gap > 1e-8 * (1.0 + std::abs(r.values(0)));
    }
}

SpectralResult dense_lowest(const SparseOperator& H, int count) {
    const auto n = H.rows();
    SpectralResult r;
    r.method = "dense";
    const int k = int(std::min<Eigen::Index>(count, n));
    if (is_real(H.m)) {
        const Eigen::MatrixXd A = Eigen::MatrixXd(H.m.real());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
        r.values = es.eigenvalues().head(k);
        r.vectors = es.eigenvectors().leftCols(k).cast<cplx>();
    } else {
        Eigen::SelfAdjointEigenSolver<CMat> es(H.dense());
        r.values = es.eigenvalues().head(k);
        r.vectors = es.eigenvectors().leftCols(k);
    }
    return r;
}

// Two passes of classical Gram-Schmidt against the first `cols` columns of V.
double orthogonalize(const CMat& V, Eigen::Index cols, CVec& w) {
    for (int pass = 0; pass < 2; ++pass) {
        if (cols == 0) break;
        const CVec c = V.leftCols(cols).adjoint() * w;
        w.noalias() -= V.leftCols(cols) * c;
    }
    return w.norm();
}

SpectralResult lanczos(const SparseOperator& H, const EigenOptions& opt, CVec start) {
    const auto n = H.rows();
    const int k = int(std::min<Eigen::Index>(opt.count, n));
    const auto m = std::min<Eigen::Index>(n, std::max(opt.subspace, 2 * k + 20));
    const auto keep = std::min<Eigen::Index>(m - 2, std::max(2 * k, k + 8));
    std::mt19937_64 eng(opt.seed ^ 0x5bd1e995ULL);
    auto fresh = [&] {
        CVec v(n);
        for (auto& x : v) x = cplx(double(eng() >> 11) * 0x1.0p-52 - 1.0, 0.0);
        return v;
    };

    CMat V(n, m), W(n, m);
    start /= start.norm();
    V.col(0) = start;
    W.col(0) = H.apply(start);
    Eigen::Index cur = 1;
    SpectralResult r;
    r.method = "lanczos";
    r.tol = opt.tol;
    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        while (cur < m) {
            CVec w = W.col(cur - 1);
            const double scale = std::max(1.0, w.norm());
            double nw = orthogonalize(V, cur, w);
            if (nw < 1e-12 * scale) {
                // invariant subspace: continue from a fresh direction
                w = fresh();
                nw = orthogonalize(V, cur, w);
                if (nw < 1e-12) break;
            }
            V.col(cur) = w / nw;
            W.col(cur) = H.apply(V.col(cur));
            ++cur;
        }
        CMat T = V.leftCols(cur).adjoint() * W.leftCols(cur);
        T = 0.5 * (T + T.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<CMat> es(T);
        const int kk = int(std::min<Eigen::Index>(k, cur));
        r.values = es.eigenvalues().head(kk);
        r.vectors = V.leftCols(cur) * es.eigenvectors().leftCols(kk);
        const CMat HY = W.leftCols(cur) * es.eigenvectors().leftCols(kk);
        bool ok = true;
        for (int i = 0; i < kk; ++i) {
            const double res = (HY.col(i) - r.values(i) * r.vectors.col(i)).norm();
            ok = ok && res <= opt.tol * std::max(1.0, std::abs(r.values(i)));
        }
        r.iterations = restart + 1;
        if (ok || cur == n) return r;

        // restart from the leading Ritz vectors plus the next Krylov direction
        CVec f = W.col(cur - 1);
        double nf = orthogonalize(V, cur, f);
        if (nf < 1e-12 * std::max(1.0, f.norm())) {
            f = fresh();
            nf = orthogonalize(V, cur, f);
        }
        const Eigen::Index p = std::min(keep, cur);
        const CMat S = es.eigenvectors().leftCols(p);
        const CMat Vn = V.leftCols(cur) * S;
        const CMat Wn = W.leftCols(cur) * S;
        V.leftCols(p) = Vn;
        W.leftCols(p) = Wn;
        // re-orthonormalize the kept block against rounding drift
        for (Eigen::Index c = 0; c < p; ++c) {
            CVec v = V.col(c);
            const double nv = orthogonalize(V, c, v);
            if (std::abs(nv - 1.0) > 1e-10) {
                V.col(c) = v / nv;
                W.col(c) = H.apply(V.col(c));
            }
        }
        f /= nf;
        orthogonalize(V, p, f);
        f.normalize();
        V.col(p) = f;
        W.col(p) = H.apply(f);
        cur = p + 1;
    }
    r.converged = false;
    return r;
}

} // namespace

void fix_phase(Eigen::Ref<CVec> v) {
    if (v.size() == 0) return;
    Eigen::Index idx = 0;
    if (std::abs(v(0)) < 1e-12 * v.norm()) v.cwiseAbs().maxCoeff(&idx);
    const double a = std::abs(v(idx));
    if (a == 0.0) return;
    v *= std::conj(v(idx)) / a;
    v(idx) = cplx(v(idx).real(), 0.0);
}

SpectralResult ground_state(const SparseOperator& H, const EigenOptions& opt) {
    const auto n = H.rows();
    CVec start = CVec::Zero(n);
    if (n > 0) start(0) = 1.0;
    std::mt19937_64 eng(opt.seed);
    for (auto& x : start) x += cplx(1e-3 * (double(eng() >> 11) * 0x1.0p-52 - 1.0), 0.0);
    return ground_state(H, opt, start);
}

SpectralResult ground_state(const SparseOperator& H, const EigenOptions& opt, const CVec& start) {
    if (H.rows() != H.cols() || H.rows() == 0) throw std::invalid_argument("ground_state: empty or non-square operator");
    if (!H.hermitian) throw std::invalid_argument("ground_state: operator is not flagged Hermitian");
    SpectralResult r = std::size_t(H.rows()) <= opt.dense_below ? dense_lowest(H, opt.count) : lanczos(H, opt, start);
    r.tol = opt.tol;
    finish(r, H);
    if (!r.converged) {
        throw ConvergenceError("Lanczos did not converge: dim " + std::to_string(H.rows()) + ", residual " +
                               std::to_string(r.residuals.maxCoeff()) + " after " + std::to_string(r.iterations) +
                               " restarts");
    }
    return r;
}

SpectralResult dense_spectrum(const CMat& H) {
    SpectralResult r;
    r.method = "dense";
    if (H.imag().isZero(0.0)) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H.real());
        r.values = es.eigenvalues();
        r.vectors = es.eigenvectors().cast<cplx>();
    } else {
        Eigen::SelfAdjointEigenSolver<CMat> es(H);
        r.values = es.eigenvalues();
        r.vectors = es.eigenvectors();
    }
    r.residuals = RVec::Zero(r.values.size());
    for (Eigen::Index i = 0; i < r.values.size(); ++i) {
        fix_phase(r.vectors.col(i));
        r.residuals(i) = (H * r.vectors.col(i) - r.values(i) * r.vectors.col(i)).norm();
    }
    if (r.values.size() > 1) {
        r.gap = r.values(1) - r.values(0);
        r.simple = r.gap > 1e-8 * (1.0 + std::abs(r.values(0)));
    }
    return r;
}

double soft_boson_occupancy(const OccupationBasis& basis, const CVec& psi, double sigma) {
    double s = 0.0;
    const auto& g = basis.grid();
    for (std::size_t i = 0; i < basis.size(); ++i) {
        bool soft = false;
        for (auto p = basis.begin(i); p != basis.end(i); ++p) soft = soft || g.omega_free[*p] <= sigma;
        if (soft) s += std::norm(psi(std::ptrdiff_t(i)));
    }
    return s / std::max(psi.squaredNorm(), std::numeric_limits<double>::min());
}

double second_order_energy(const ModelSpec& ms, const Vec3& P) {
    const auto& g = *ms.grid;
    const RVec w = ms.boson_energy();
    const double om = ms.disp.value(ms.fold(P));
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double k = ms.ff.kappa_sigma(g.abs_k(j));
        if (k == 0.0) continue;
        const Vec3& q = g.points[j];
        const double den = ms.disp.value(ms.fold({P[0] - q[0], P[1] - q[1], P[2] - q[2]})) + w(std::ptrdiff_t(j)) - om;
        s += g.weights[j] * k * k / den;
    }
    return om - 0.5 * ms.g * ms.g * s;
}

FiberSolver::FiberSolver(ModelSpec ms, BasisPtr basis, EigenOptions opt)
    : ms_(std::move(ms)), basis_(std::move(basis)), opt_(opt) {}

SpectralResult FiberSolver::solve(const Vec3& P) {
    {
        std::lock_guard<std::mutex> lk(mu_);
        auto it = cache_.find(P);
        if (it != cache_.end()) return it->second;
    }
    SpectralResult r = ground_state(build_fiber_H(ms_, P, *basis_), opt_);
    std::lock_guard<std::mutex> lk(mu_);
    return cache_.emplace(P, std::move(r)).first->second;
}

DispersionCurve dispersion_scan(const ModelSpec& ms, const std::vector<Vec3>& Ps, BasisPtr basis,
                                const EigenOptions& opt, double beta) {
    DispersionCurve c;
    c.beta = beta;
    c.o_beta = ms.disp.o_beta(beta);
    c.g_beta = g_beta(ms, beta);
    c.c_constant = ms.c_constant();
    c.points.resize(Ps.size());
    EigenOptions o2 = opt;
    o2.count = std::max(2, opt.count);
    ModelSpec other = ms;
    other.use_modified = !ms.use_modified;
    parallel_for(Ps.size(), [&](std::size_t i) {
        DispersionPoint& pt = c.points[i];
        pt.P = Ps[i];
        pt.omega = ms.disp.value(ms.fold(pt.P));
        pt.e_0 = free_ground_energy(ms, pt.P, *basis);
        try {
            const SpectralResult r = ground_state(build_fiber_H(ms, pt.P, *basis), o2);
            pt.e_g = r.values(0);
            pt.gap = r.gap;
            pt.simple = r.simple;
            pt.residual = r.residuals(0);
            pt.soft = soft_boson_occupancy(*basis, r.vectors.col(0), ms.ff.sigma);
            pt.vacuum_weight = std::norm(r.vectors(0, 0));
            pt.e_other = ground_state(build_fiber_H(other, pt.P, *basis), opt).values(0);
        } catch (const ConvergenceError&) {
            pt.converged = false;
            return;
        }
        pt.upper_margin = pt.omega - pt.e_g;
        double lower = std::numeric_limits<double>::infinity();
        const double g2c = ms.g * ms.g * c.c_constant;
        for (double alpha : {std::abs(ms.g), 0.5, 1.0}) {
            const double lb = alpha > 0.0 ? (1.0 - alpha) * pt.e_0 - g2c / alpha : pt.e_0;
            lower = std::min(lower, pt.e_g - lb);
        }
        pt.lower_margin = lower;
    });
    return c;
}

double lipschitz_gap(FiberSolver& solver, const Vec3& P, double eps) {
    const auto& g = *solver.model().grid;
    const double e = solver.energy(P);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < g.size(); ++j) {
        if (g.abs_k(j) < eps) continue;
        const Vec3& k = g.points[j];
        best = std::min(best, solver.energy({P[0] - k[0], P[1] - k[1], P[2] - k[2]}) + g.abs_k(j) - e);
    }
    return best;
}

double delta_gap(FiberSolver& solver, const Vec3& P) {
    const auto& g = *solver.model().grid;
    const double e = solver.energy(P);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < g.size(); ++j) {
        const Vec3& k = g.points[j];
        best = std::min(best, solver.energy({P[0] - k[0], P[1] - k[1], P[2] - k[2]}) + g.omega_mod[j] - e);
    }
    return best;
}

double grad_bound_formula(const Dispersion& disp, double energy) {
    switch (disp.kind()) {
    case DispersionKind::nonrel: return std::sqrt(std::max(0.0, 2.0 / disp.mass() * energy));
    case DispersionKind::rel: {
        const double m = disp.mass();
        return energy <= m ? 0.0 : std::sqrt(1.0 - m * m / (energy * energy));
    }
    case DispersionKind::tabulated: break;
    }
    throw ConfigError("gradient bound has no closed form for a tabulated dispersion");
}

GradBoundReport grad_bound_check(const ModelSpec& ms, const Vec3& P, double Sigma, const OccupationBasis& basis) {
    GradBoundReport rep;
    rep.bound = grad_bound_formula(ms.disp, Sigma + ms.g * ms.g * ms.c_constant());
    const SparseOperator H = build_fiber_H(ms, P, basis);
    const SpectralResult s = dense_spectrum(H.dense());
    while (rep.states < std::size_t(s.values.size()) && s.values(std::ptrdiff_t(rep.states)) <= Sigma) ++rep.states;
    if (rep.states == 0) return rep;
    RVec g2(std::ptrdiff_t(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const Vec3 k = boson_momentum(basis, i);
        const Vec3 gr = ms.disp.gradient(ms.fold({P[0] - k[0], P[1] - k[1], P[2] - k[2]}));
        g2(std::ptrdiff_t(i)) = gr[0] * gr[0] + gr[1] * gr[1] + gr[2] * gr[2];
    }
    const CMat V = s.vectors.leftCols(std::ptrdiff_t(rep.states));
    const CMat C = V.adjoint() * g2.cast<cplx>().asDiagonal() * V;
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (C + C.adjoint()), Eigen::EigenvaluesOnly);
    rep.measured = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    return rep;
}

NumberEnergyReport number_energy_report(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis,
                                        double margin) {
    ModelSpec mod = ms;
    mod.use_modified = true;
    const CMat H = build_fiber_H(mod, P, basis).dense();
    const auto n = H.rows();
    const CMat N = number_op(basis).dense();
    NumberEnergyReport rep;
    const CMat R = (N + CMat::Identity(n, n)) * (H + cplx(0.0, 1.0) * CMat::Identity(n, n)).inverse();
    Eigen::SelfAdjointEigenSolver<CMat> rs(R.adjoint() * R, Eigen::EigenvaluesOnly);
    rep.resolvent_norm = std::sqrt(std::max(0.0, rs.eigenvalues().maxCoeff()));
    rep.a = 2.0 / ms.ff.sigma * (1.0 + margin);
    const CMat X = N - rep.a * H;
    Eigen::SelfAdjointEigenSolver<CMat> xs(0.5 * (X + X.adjoint()), Eigen::EigenvaluesOnly);
    rep.b = xs.eigenvalues().maxCoeff();
    return rep;
}

} // namespace nelsonlab
