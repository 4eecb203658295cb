#include "nelsonlab/mourre.hpp"

#include "nelsonlab/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nelsonlab {

namespace {

// Exact Hermitian copy: upper triangle wins, diagonal made real.
CMat exact_hermitian(const CMat& x) {
    CMat h = 0.5 * (x + x.adjoint());
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        h(i, i) = cplx(h(i, i).real(), 0.0);
        for (Eigen::Index j = i + 1; j < h.cols(); ++j) h(j, i) = std::conj(h(i, j));
    }
    return h;
}

// i d/dx on a uniform chain of n nodes with spacing h, placed at `idx` in the full matrix.
void add_chain_derivative(CMat& y, const std::vector<std::size_t>& idx, double h) {
    const std::size_t n = idx.size();
    if (n < 2) return;
    const cplx c(0.0, 1.0);
    for (std::size_t s = 0; s < n; ++s) {
        const auto r = std::ptrdiff_t(idx[s]);
        if (s == 0) {
            y(r, std::ptrdiff_t(idx[1])) += c / h;
            y(r, r) -= c / h;
        } else if (s == n - 1) {
            y(r, r) += c / h;
            y(r, std::ptrdiff_t(idx[n - 2])) -= c / h;
        } else {
            y(r, std::ptrdiff_t(idx[s + 1])) += c / (2.0 * h);
            y(r, std::ptrdiff_t(idx[s - 1])) -= c / (2.0 * h);
        }
    }
}

double expect(const SparseOperator& op, const CVec& v) { return v.dot(op.apply(v)).real(); }

} // namespace

CMat build_position_op(const ModeGrid& grid) {
    const auto M = std::ptrdiff_t(grid.size());
    CMat y = CMat::Zero(M, M);
    if (grid.kind == GridKind::line) {
        std::vector<std::size_t> order(grid.size());
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return grid.points[a][0] < grid.points[b][0]; });
        add_chain_derivative(y, order, grid.spacing);
        // the line grid has uniform weights, so samples and orthonormal coordinates agree
    } else if (grid.kind == GridKind::radial) {
        for (int d = 0; d < grid.n_rays; ++d) {
            std::vector<std::size_t> ray(std::size_t(grid.n_shells));
            for (std::size_t j = 0; j < grid.size(); ++j)
                if (grid.ray[j] == d) ray[std::size_t(grid.radial_index[j])] = j;
            add_chain_derivative(y, ray, grid.spacing);
        }
    } else {
        throw ConfigError("position operator needs a line or radial grid");
    }
    return exact_hermitian(y);
}

ConjugateOp build_conjugate(const ModeGrid& grid, bool modified) {
    ConjugateOp c;
    c.modified = modified;
    c.mesh = grid.spacing;
    c.y = build_position_op(grid);
    const auto M = std::ptrdiff_t(grid.size());
    c.speed.resize(M);
    for (std::ptrdiff_t j = 0; j < M; ++j) {
        const Vec3& k = grid.points[std::size_t(j)];
        const double r = grid.abs_k(std::size_t(j));
        const double d = modified ? modified_dispersion_derivative(r, grid.sigma) : 1.0;
        c.grad.push_back({d * k[0] / r, d * k[1] / r, d * k[2] / r});
        c.speed(j) = grid.kind == GridKind::line ? c.grad.back()[0] : d;
    }
    const CMat G = c.speed.cast<cplx>().asDiagonal();
    c.a = exact_hermitian(0.5 * (G * c.y + c.y * G));
    return c;
}

SparseOperator conjugate_A(const OccupationBasis& basis, const ConjugateOp& conj) {
    return dGamma_orthonormal(basis, conj.a);
}

SparseOperator commutator_field_term(const ModelSpec& ms, const OccupationBasis& basis, const ConjugateOp& conj) {
    const ModeGrid& g = *ms.grid;
    const CVec ak = g.from_orthonormal(cplx(0.0, 1.0) * (conj.a * g.to_orthonormal(ms.coupling())));
    return cplx(-ms.g, 0.0) * field_op(basis, ak);
}

SparseOperator commutator_iHA(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis,
                              const ConjugateOp& conj) {
    RVec d(std::ptrdiff_t(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const Vec3 k = boson_momentum(basis, i);
        const Vec3 gO = ms.disp.gradient(ms.fold({P[0] - k[0], P[1] - k[1], P[2] - k[2]}));
        double s = 0.0;
        for (auto p = basis.begin(i); p != basis.end(i); ++p) {
            const Vec3& gw = conj.grad[*p];
            s += gw[0] * gw[0] + gw[1] * gw[1] + gw[2] * gw[2];
            s -= gO[0] * gw[0] + gO[1] * gw[1] + gO[2] * gw[2];
        }
        d(std::ptrdiff_t(i)) = s;
    }
    SparseOperator c = diagonal_op(d);
    if (ms.g != 0.0) c = c + commutator_field_term(ms, basis, conj);
    return c;
}

SparseOperator matrix_commutator(const SparseOperator& H, const SparseOperator& A) {
    return cplx(0.0, 1.0) * (H * A - A * H);
}

VirialReport virial_of(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis, const ConjugateOp& conj,
                       const CVec& psi_in) {
    const CVec psi = psi_in / psi_in.norm();
    const SparseOperator H = build_fiber_H(ms, P, basis);
    const SparseOperator A = conjugate_A(basis, conj);
    VirialReport r;
    r.energy = expect(H, psi);
    r.eigen_residual = (H.apply(psi) - r.energy * psi).norm();
    r.residual = std::abs(expect(commutator_iHA(ms, P, basis, conj), psi));
    r.matrix_residual = std::abs(psi.dot(matrix_commutator(H, A).apply(psi)));
    r.a_norm = A.apply(psi).norm();
    r.soft = soft_boson_occupancy(basis, psi, ms.ff.sigma);
    r.mesh = conj.mesh;
    const CMat rho = one_body_density(basis, psi);
    const CMat y2 = conj.y * conj.y;
    const double y2e = std::abs(y2.cwiseProduct(rho).sum());
    double gmax = 0.0;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (std::norm(psi(std::ptrdiff_t(i))) == 0.0) continue;
        const Vec3 k = boson_momentum(basis, i);
        gmax = std::max(gmax, norm3(ms.disp.gradient(ms.fold({P[0] - k[0], P[1] - k[1], P[2] - k[2]}))));
    }
    r.scale = (1.0 + gmax) * y2e;
    return r;
}

VirialReport virial_check(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis, const ConjugateOp& conj,
                          const EigenOptions& opt) {
    const SpectralResult s = ground_state(build_fiber_H(ms, P, basis), opt);
    return virial_of(ms, P, basis, conj, s.vectors.col(0));
}

MourreReport mourre_scan(const ModelSpec& ms, const Vec3& P, double Sigma, double beta, const OccupationBasis& basis,
                         const ConjugateOp& conj, int n_samples, std::uint64_t seed) {
    MourreReport rep;
    rep.g = ms.g;
    rep.Sigma = Sigma;
    rep.beta = beta;
    // Ran Gamma(chi_i): states without soft bosons; H, N and [iH, A] all leave it invariant.
    std::vector<std::ptrdiff_t> sub;
    const ModeGrid& grid = *ms.grid;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        bool soft = false;
        for (auto p = basis.begin(i); p != basis.end(i); ++p) soft = soft || grid.abs_k(*p) <= ms.ff.sigma;
        if (!soft) sub.push_back(std::ptrdiff_t(i));
    }
    rep.sub_dim = sub.size();
    const auto n = std::ptrdiff_t(sub.size());
    auto restrict = [&](const SparseOperator& op) {
        const CMat full = op.dense();
        CMat r(n, n);
        for (std::ptrdiff_t a = 0; a < n; ++a)
            for (std::ptrdiff_t b = 0; b < n; ++b) r(a, b) = full(sub[std::size_t(a)], sub[std::size_t(b)]);
        return r;
    };
    if (sub.size() > 5000) throw ConfigError("mourre: interacting sub-basis too large for dense projection");
    const CMat H = restrict(build_fiber_H(ms, P, basis));
    const CMat C = restrict(commutator_iHA(ms, P, basis, conj));
    const CMat F = ms.g != 0.0 ? restrict(commutator_field_term(ms, basis, conj)) : CMat::Zero(n, n);
    RVec Nd(n), g2(n);
    for (std::ptrdiff_t a = 0; a < n; ++a) {
        const auto i = std::size_t(sub[std::size_t(a)]);
        Nd(a) = basis.total(i);
        const Vec3 k = boson_momentum(basis, i);
        const Vec3 gO = ms.disp.gradient(ms.fold({P[0] - k[0], P[1] - k[1], P[2] - k[2]}));
        g2(a) = gO[0] * gO[0] + gO[1] * gO[1] + gO[2] * gO[2];
    }
    const SpectralResult s = dense_spectrum(H);
    std::size_t w = 0;
    while (w < std::size_t(n) && s.values(std::ptrdiff_t(w)) <= Sigma) ++w;
    rep.window_dim = w;
    if (w > 0) {
        const CMat V = s.vectors.leftCols(std::ptrdiff_t(w));
        const CMat Cg = V.adjoint() * g2.cast<cplx>().asDiagonal() * V;
        Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (Cg + Cg.adjoint()), Eigen::EigenvaluesOnly);
        rep.grad_norm = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    }
    // free one-boson threshold over interacting modes, measured from Omega(P)
    double thr = std::numeric_limits<double>::infinity();
    const RVec om = ms.boson_energy();
    const double oP = ms.disp.value(ms.fold(P));
    for (std::size_t j = 0; j < grid.size(); ++j) {
        if (grid.abs_k(j) <= ms.ff.sigma) continue;
        const Vec3& k = grid.points[j];
        thr = std::min(thr, ms.disp.value(ms.fold({P[0] - k[0], P[1] - k[1], P[2] - k[2]})) + om(std::ptrdiff_t(j)) - oP);
    }
    rep.threshold = s.values(0) + thr;
    while (rep.below_threshold < std::size_t(n) &&
           s.values(std::ptrdiff_t(rep.below_threshold)) < s.values(0) + 0.5 * thr)
        ++rep.below_threshold;

    if (w < 2) throw ConfigError("mourre: spectral window holds no excited state on Ran Gamma(chi_i)");
    const CMat V = s.vectors.middleCols(1, std::ptrdiff_t(w) - 1);
    if (ms.g != 0.0) {
        const CMat Fw = V.adjoint() * F * V;
        Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (Fw + Fw.adjoint()), Eigen::EigenvaluesOnly);
        rep.deficit = es.eigenvalues().cwiseAbs().maxCoeff();
    }
    Rng rng(seed);
    rep.min_r = std::numeric_limits<double>::infinity();
    for (int t = 0; t < n_samples; ++t) {
        CVec z = rng.cvec(V.cols());
        CVec phi = V * z;
        phi /= phi.norm();
        MourreSample smp;
        smp.number = (phi.adjoint() * Nd.cast<cplx>().asDiagonal() * phi)(0).real();
        smp.r = phi.dot(C * phi).real() - (1.0 - beta) * smp.number;
        smp.field = std::abs(phi.dot(F * phi).real());
        rep.min_r = std::min(rep.min_r, smp.r);
        rep.sample_deficit = std::max(rep.sample_deficit, smp.field);
        rep.samples.push_back(smp);
    }
    return rep;
}

MourreFit fit_deficit(const std::vector<MourreReport>& sweep) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& r : sweep) {
        if (r.g == 0.0 || !(r.deficit > 0.0)) continue;
        const double x = std::log(std::abs(r.g)), y = std::log(r.deficit);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    MourreFit f;
    if (n < 2) return f;
    f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    // deficit ~ C |g| at unit slope: average of deficit / |g| in log space
    double lc = 0.0;
    for (const auto& r : sweep)
        if (r.g != 0.0 && r.deficit > 0.0) lc += std::log(r.deficit / std::abs(r.g));
    f.C = std::exp(lc / n);
    return f;
}

} // namespace nelsonlab
