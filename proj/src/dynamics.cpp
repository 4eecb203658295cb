#include "nelsonlab/dynamics.hpp"

#include "nelsonlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nelsonlab {

namespace {

// Lanczos basis with full (twice iterated Gram-Schmidt) reorthogonalization.
struct Lanczos {
    std::vector<CVec> V;
    std::vector<double> alpha, beta; // beta[j] couples V[j] and V[j + 1]
    bool breakdown = false;
};

Lanczos lanczos(const SparseOperator& H, const CVec& v, int m, double scale, long* matvecs) {
    Lanczos L;
    const double nv = v.norm();
    L.V.push_back(v / nv);
    for (int j = 0; j < m; ++j) {
        CVec w = H.apply(L.V[std::size_t(j)]);
        if (matvecs) ++*matvecs;
        const double a = L.V[std::size_t(j)].dot(w).real();
        L.alpha.push_back(a);
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : L.V) w -= q * q.dot(w);
        const double b = w.norm();
        if (b <= 1e-13 * std::max(1.0, scale)) {
            L.breakdown = true;
            break;
        }
        if (j + 1 == m) {
            L.beta.push_back(b);
            break;
        }
        L.beta.push_back(b);
        L.V.push_back(w / b);
    }
    return L;
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tridiag_eig(const Lanczos& L, std::size_t k) {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(std::ptrdiff_t(k), std::ptrdiff_t(k));
    for (std::size_t i = 0; i < k; ++i) {
        T(std::ptrdiff_t(i), std::ptrdiff_t(i)) = L.alpha[i];
        if (i + 1 < k) {
            T(std::ptrdiff_t(i), std::ptrdiff_t(i + 1)) = L.beta[i];
            T(std::ptrdiff_t(i + 1), std::ptrdiff_t(i)) = L.beta[i];
        }
    }
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(T);
}

double op_scale(const SparseOperator& H) {
    double s = 0.0;
    for (int r = 0; r < H.m.outerSize(); ++r) {
        double row = 0.0;
        for (SpMat::InnerIterator it(H.m, r); it; ++it) row += std::abs(it.value());
        s = std::max(s, row);
    }
    return s;
}

double trapezoid_log(double t0, double t1, double v0, double v1) {
    return 0.5 * (v0 + v1) * std::log(t1 / t0);
}

// Tr(bt rho) for the one-body density of psi.
double dgamma_expectation(const OccupationBasis& basis, const CMat& bt, const CVec& psi) {
    const CMat rho = one_body_density(basis, psi);
    return (bt.array() * rho.array()).sum().real();
}

// Rows e of the (n_el x D) matrix view of a product vector, transformed to electron positions.
CMat electron_positions(int L, const CVec& psi, std::size_t D) {
    using RowMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> P(psi.data(), L, std::ptrdiff_t(D));
    CMat phase(L, L);
    const double n = 1.0 / std::sqrt(double(L));
    for (int s = 0; s < L; ++s)
        for (int e = 0; e < L; ++e) {
            const double th = 2.0 * M_PI * double(e - L / 2) * double(s - L / 2) / double(L);
            phase(s, e) = n * cplx(std::cos(th), std::sin(th));
        }
    return phase * P;
}

} // namespace

KrylovPropagator::KrylovPropagator(SparseOperator H, KrylovOptions opt) : H_(std::move(H)), opt_(opt) {
    if (!H_.hermitian) throw std::invalid_argument("KrylovPropagator: Hamiltonian must be Hermitian");
    if (opt_.max_dim < 2) throw ConfigError("krylov dimension must be at least 2");
    if (!(opt_.tol > 0.0)) throw ConfigError("krylov tolerance must be positive");
    scale_ = op_scale(H_);
    dt_guess_ = scale_ > 0.0 ? double(opt_.max_dim) / (2.0 * scale_) : 1.0;
}

bool KrylovPropagator::try_step(const CVec& psi, double dt, CVec& out, double& suggested) {
    const double nv = psi.norm();
    const Lanczos L = lanczos(H_, psi, opt_.max_dim, scale_, &stats_.matvecs);
    const std::size_t k = L.alpha.size();
    const auto es = tridiag_eig(L, k);
    const Eigen::MatrixXd& Q = es.eigenvectors();
    CVec c = CVec::Zero(std::ptrdiff_t(k));
    for (std::size_t i = 0; i < k; ++i) {
        const cplx ph = std::exp(cplx(0.0, -es.eigenvalues()(std::ptrdiff_t(i)) * dt));
        c += Q.col(std::ptrdiff_t(i)).cast<cplx>() * (ph * Q(0, std::ptrdiff_t(i)));
    }
    const double err = L.breakdown ? 0.0 : L.beta.back() * std::abs(c(std::ptrdiff_t(k - 1))) * nv;
    const double target = opt_.tol * std::max(nv, 1e-300);
    if (err > target) {
        suggested = std::abs(dt) * std::clamp(0.9 * std::pow(target / err, 1.0 / double(k)), 0.1, 0.5);
        return false;
    }
    out = CVec::Zero(psi.size());
    for (std::size_t i = 0; i < k; ++i) out += L.V[i] * (nv * c(std::ptrdiff_t(i)));
    suggested = err == 0.0 ? 2.0 * std::abs(dt)
                           : std::abs(dt) * std::clamp(0.9 * std::pow(target / err, 1.0 / double(k)), 1.0, 2.0);
    return true;
}

void KrylovPropagator::advance(CVec& psi, double t) {
    if (t == 0.0 || psi.norm() == 0.0) return;
    const double sign = t > 0 ? 1.0 : -1.0;
    double left = std::abs(t);
    CVec next;
    while (left > 0.0) {
        double dt = std::min(left, dt_guess_);
        if (opt_.max_step > 0.0) dt = std::min(dt, opt_.max_step);
        double suggested = dt;
        int tries = 0;
        while (!try_step(psi, sign * dt, next, suggested)) {
            ++stats_.rejected;
            dt = suggested;
            if (++tries > 60 || dt < 1e-14) throw ConvergenceError("krylov propagator: step size underflow");
        }
        psi = next;
        ++stats_.steps;
        left -= dt;
        if (left < 1e-15 * std::abs(t)) left = 0.0;
        dt_guess_ = std::max(suggested, 1e-12);
    }
}

CVec apply_function(const SparseOperator& H, const CVec& v, const std::function<double(double)>& f,
                    std::size_t dense_below, double tol) {
    const double nv = v.norm();
    if (nv == 0.0) return v;
    if (std::size_t(H.rows()) <= dense_below) {
        Eigen::SelfAdjointEigenSolver<CMat> es(H.dense());
        const CMat& U = es.eigenvectors();
        CVec c = U.adjoint() * v;
        for (std::ptrdiff_t i = 0; i < c.size(); ++i) c(i) *= f(es.eigenvalues()(i));
        return U * c;
    }
    // Chebyshev expansion on the Gershgorin interval; memory stays at three vectors.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int r = 0; r < H.m.outerSize(); ++r) {
        double c = 0.0, rad = 0.0;
        for (SpMat::InnerIterator it(H.m, r); it; ++it) {
            if (it.col() == r) c = it.value().real();
            else rad += std::abs(it.value());
        }
        lo = std::min(lo, c - rad);
        hi = std::max(hi, c + rad);
    }
    const double half = 0.5 * (hi - lo) * (1.0 + 1e-12) + 1e-300, mid = 0.5 * (hi + lo);
    std::vector<double> coef;
    for (int N = 256;; N *= 2) {
        std::vector<double> fx(static_cast<std::size_t>(N)), th(static_cast<std::size_t>(N));
        for (int j = 0; j < N; ++j) {
            th[std::size_t(j)] = M_PI * (j + 0.5) / N;
            fx[std::size_t(j)] = f(mid + half * std::cos(th[std::size_t(j)]));
        }
        coef.assign(std::size_t(N), 0.0);
        for (int j = 0; j < N; ++j) {
            const cplx z = std::polar(1.0, th[std::size_t(j)]);
            cplx w = 1.0;
            for (int k = 0; k < N; ++k, w *= z) coef[std::size_t(k)] += fx[std::size_t(j)] * w.real();
        }
        for (int k = 0; k < N; ++k) coef[std::size_t(k)] *= (k == 0 ? 1.0 : 2.0) / N;
        double tail = 0.0;
        for (int k = N / 2; k < N; ++k) tail += std::abs(coef[std::size_t(k)]);
        if (tail <= tol) break;
        if (N >= (1 << 16))
            throw ConvergenceError("apply_function: Chebyshev expansion did not converge on [" + std::to_string(lo) +
                                   ", " + std::to_string(hi) + "], tail " + std::to_string(tail));
    }
    std::size_t K = coef.size();
    double acc = 0.0;
    while (K > 1 && acc + std::abs(coef[K - 1]) <= 0.1 * tol) acc += std::abs(coef[--K]);
    auto scaled = [&](const CVec& x) { return CVec((H.apply(x) - mid * x) / half); };
    CVec t0 = v, t1 = scaled(v);
    CVec out = coef[0] * t0;
    if (K > 1) out += coef[1] * t1;
    for (std::size_t k = 2; k < K; ++k) {
        CVec t2 = 2.0 * scaled(t1) - t0;
        out += coef[k] * t2;
        t0 = std::move(t1);
        t1 = std::move(t2);
    }
    return out;
}

std::vector<double> geometric_times(double t0, double t1, double ratio) {
    if (!(t0 > 0.0) || !(t1 >= t0)) throw ConfigError("time grid needs 0 < t0 <= t1");
    if (!(ratio > 1.0)) throw ConfigError("time grid ratio must exceed 1");
    std::vector<double> t;
    for (double s = t0; s < t1 * (1.0 - 1e-12); s *= ratio) t.push_back(s);
    t.push_back(t1);
    return t;
}

void CutoffSet::validate() const {
    if (!(0.0 <= beta && beta < beta0 && beta0 < beta1 && beta1 < beta2 && beta2 < beta3 && beta3 < gamma))
        throw ConfigError("cutoffs must satisfy beta < beta0 < beta1 < beta2 < beta3 < gamma");
}

double CutoffSet::jinf(double s) const {
    const double a = j0(s);
    return std::sqrt(std::max(0.0, 1.0 - a * a));
}

double EnergyWindow::operator()(double e) const {
    if (trivial()) return 1.0;
    if (width <= 0.0) return (e >= lo && e <= hi) ? 1.0 : 0.0;
    return smooth_step(e, lo - width, lo) * (1.0 - smooth_step(e, hi, hi + width));
}

PositionCalculus::PositionCalculus(const CMat& y) {
    Eigen::SelfAdjointEigenSolver<CMat> es(y);
    U_ = es.eigenvectors();
    eta_ = es.eigenvalues();
}

CMat PositionCalculus::apply(const std::function<double(double)>& f) const {
    RVec d(eta_.size());
    for (std::ptrdiff_t i = 0; i < eta_.size(); ++i) d(i) = f(eta_(i));
    return U_ * d.cast<cplx>().asDiagonal() * U_.adjoint();
}

bool Track::tail_decreasing(double slack) const {
    for (std::size_t i = rows.size() / 2 + 1; i < rows.size(); ++i)
        if (rows[i].value > rows[i - 1].value + slack) return false;
    return true;
}

Track evolve_track(const SparseOperator& H, const CVec& psi0, const std::vector<double>& times,
                   const std::function<double(double, const CVec&)>& observe, const KrylovOptions& opt,
                   const std::string& name, const SparseOperator* momentum) {
    KrylovPropagator prop(H, opt);
    Track tr;
    tr.observable = name;
    CVec psi = psi0;
    const double n0 = psi0.norm();
    const double e0 = psi0.dot(H.apply(psi0)).real();
    auto moments = [&](const CVec& v) {
        const CVec pv = momentum->apply(v);
        return std::pair<double, double>{v.dot(pv).real(), pv.squaredNorm()};
    };
    std::pair<double, double> p0{0.0, 0.0};
    if (momentum) p0 = moments(psi0);
    double t = 0.0;
    for (double tn : times) {
        prop.advance(psi, tn - t);
        t = tn;
        TrackRow row;
        row.t = t;
        row.value = observe(t, psi);
        row.norm_drift = std::abs(psi.norm() - n0);
        row.energy_drift = std::abs(psi.dot(H.apply(psi)).real() - e0);
        if (momentum) {
            const auto p = moments(psi);
            row.momentum_drift = std::max(std::abs(p.first - p0.first), std::abs(p.second - p0.second));
        }
        if (!tr.rows.empty()) {
            const auto& p = tr.rows.back();
            row.running = p.running + trapezoid_log(p.t, row.t, p.value, row.value);
        }
        tr.rows.push_back(row);
    }
    tr.stats = prop.stats();
    return tr;
}

RVec electron_position_density(const LatticeModel& lm, const CVec& psi) {
    const CMat X = electron_positions(lm.L, psi, lm.bosons->size());
    return X.rowwise().squaredNorm();
}

DressedPacket dressed_packet(const ModelSpec& ms, const LatticeModel& lm, double P0, double half_width) {
    if (!(half_width > 0.0)) throw ConfigError("packet half-width must be positive");
    const OccupationBasis& B = *lm.bosons;
    const std::size_t D = B.size();
    DressedPacket out;
    out.psi = CVec::Zero(std::ptrdiff_t(lm.dim()));
    out.max_energy = -1e300;
    out.min_energy = 1e300;
    EigenOptions eo;
    eo.count = 1;
    for (int c = -lm.L / 2; c < lm.L / 2; ++c) {
        const double P = c * lm.dk();
        const double u = (P - P0) / half_width;
        if (std::abs(u) >= 1.0) continue;
        const double f = std::exp(-1.0 / (1.0 - u * u));
        const auto gs = ground_state(build_fiber_H(ms, {P, 0.0, 0.0}, B), eo);
        out.max_energy = std::max(out.max_energy, gs.values(0));
        out.min_energy = std::min(out.min_energy, gs.values(0));
        ++out.momenta;
        for (std::size_t b = 0; b < D; ++b) {
            long m = c;
            for (auto p = B.begin(b); p != B.end(b); ++p) m -= lm.mode_q[*p];
            const int e = lm.wrap(int(m % lm.L)) + lm.L / 2;
            out.psi(std::ptrdiff_t(lm.index(e, b))) += f * gs.vectors(std::ptrdiff_t(b), 0);
        }
    }
    if (out.momenta == 0) throw ConfigError("packet support contains no lattice momentum");
    out.psi.normalize();
    return out;
}

Track electron_velocity_probe(const ModelSpec& ms, const LatticeModel& lm, const CVec& psi0,
                              const std::vector<double>& times, const CutoffSet& cut, const KrylovOptions& opt) {
    cut.validate();
    const SparseOperator H = build_full_H(ms, lm);
    auto observe = [&](double t, const CVec& psi) {
        const RVec dens = electron_position_density(lm, psi);
        double s = 0.0;
        for (int i = 0; i < lm.L; ++i) s += cut.F(std::abs(lm.a * (i - lm.L / 2)) / t) * dens(i);
        return s;
    };
    const SparseOperator P = total_momentum_op(lm);
    return evolve_track(H, psi0, times, observe, opt, "F(|x|/t)", &P);
}

namespace {

// <dGamma(b_t) F(|x|/t)> along the evolution, b_t in orthonormal coordinates.
Track one_body_track(const SparseOperator& H, const OccupationBasis& bosons, int n_el, double a,
                     const CutoffSet* electron_cut, const CVec& psi0, const std::vector<double>& times,
                     const KrylovOptions& opt, const std::string& name,
                     const std::function<CMat(double)>& op_at) {
    const std::size_t D = bosons.size();
    if (std::size_t(psi0.size()) != D * std::size_t(n_el)) throw std::invalid_argument(name + " probe: state size");
    auto observe = [&](double t, const CVec& psi) {
        const CMat b = op_at(t);
        if (n_el == 1) return dgamma_expectation(bosons, b, psi);
        const CMat X = electron_positions(n_el, psi, D);
        double s = 0.0;
        for (int i = 0; i < n_el; ++i) {
            const double F = electron_cut ? electron_cut->F(std::abs(a * (i - n_el / 2)) / t) : 1.0;
            if (F == 0.0) continue;
            const CVec slice = X.row(i).transpose();
            s += F * dgamma_expectation(bosons, b, slice);
        }
        return s;
    };
    return evolve_track(H, psi0, times, observe, opt, name);
}

} // namespace

Track photon_velocity_probe(const SparseOperator& H, const OccupationBasis& bosons, int n_el, double a,
                            const CMat& y, const CVec& psi0, const std::vector<double>& times, double lam,
                            double lam2, const CutoffSet* electron_cut, const KrylovOptions& opt) {
    if (!(lam < lam2)) throw ConfigError("photon window needs lambda < lambda'");
    const PositionCalculus pc(y);
    const EnergyWindow win{lam, lam2, 0.1 * (lam2 - lam)};
    return one_body_track(H, bosons, n_el, a, electron_cut, psi0, times, opt, "pe1", [&](double t) {
        return pc.apply([&](double e) { return win(std::abs(e) / t); });
    });
}

Track phase_space_probe(const SparseOperator& H, const OccupationBasis& bosons, int n_el, double a,
                        const CMat& y, const RVec& speed, double J, const CVec& psi0,
                        const std::vector<double>& times, const CutoffSet* electron_cut, const KrylovOptions& opt) {
    if (speed.size() != y.rows()) throw std::invalid_argument("pe3 probe: speed size");
    return one_body_track(H, bosons, n_el, a, electron_cut, psi0, times, opt, "pe3", [&](double t) {
        CMat b = -y / t;
        b.diagonal() += speed.cast<cplx>();
        b *= 2.0 * J;
        b = 0.5 * (b + b.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<CMat> es(b);
        return CMat(es.eigenvectors() * es.eigenvalues().cwiseAbs().cast<cplx>().asDiagonal() *
                    es.eigenvectors().adjoint());
    });
}

namespace {

CVec apply_per_slice(const SparseOperator& A, const CVec& psi, int n_el) {
    const auto D = A.cols();
    CVec out(psi.size());
    for (int e = 0; e < n_el; ++e) out.segment(e * D, D) = A.m * psi.segment(e * D, D);
    return out;
}

CVec rotate(const RVec& omega, const CVec& h, double t) {
    CVec out = h;
    for (std::ptrdiff_t j = 0; j < h.size(); ++j) out(j) *= std::exp(cplx(0.0, -omega(j) * t));
    return out;
}

} // namespace

FieldProbe asymptotic_field_probe(const SparseOperator& H, const OccupationBasis& bosons, int n_el,
                                  const RVec& omega, const CVec& h, const CVec& phi,
                                  const std::vector<double>& times, const KrylovOptions& opt) {
    if (std::size_t(phi.size()) != bosons.size() * std::size_t(n_el))
        throw std::invalid_argument("field probe: state size");
    KrylovPropagator fwd(H, opt), back(H, opt);
    FieldProbe out;
    out.cauchy.observable = "cauchy";
    out.vacuum.observable = "vacuum";
    CVec psi = phi;
    CVec prevX;
    double t = 0.0;
    const double e0 = phi.dot(H.apply(phi)).real();
    for (double tn : times) {
        fwd.advance(psi, tn - t);
        t = tn;
        const CVec ht = rotate(omega, h, t);
        CVec X = apply_per_slice(creation_op(bosons, ht), psi, n_el);
        back.advance(X, -t);
        TrackRow vr;
        vr.t = t;
        vr.value = apply_per_slice(annihilation_op(bosons, ht), psi, n_el).norm();
        vr.norm_drift = std::abs(psi.norm() - phi.norm());
        vr.energy_drift = std::abs(psi.dot(H.apply(psi)).real() - e0);
        out.vacuum.rows.push_back(vr);
        if (prevX.size()) {
            TrackRow cr;
            cr.t = out.vacuum.rows[out.vacuum.rows.size() - 2].t;
            cr.value = (X - prevX).norm();
            cr.norm_drift = vr.norm_drift;
            cr.energy_drift = vr.energy_drift;
            out.cauchy.rows.push_back(cr);
        }
        prevX = std::move(X);
    }
    out.vacuum.stats = fwd.stats();
    out.cauchy.stats = back.stats();
    return out;
}

Track W_estimate(const SparseOperator& H, const OccupationBasis& basis, const CMat& y, const EnergyWindow& f,
                 const CutoffSet& cut, const CVec& psi0, const std::vector<double>& times, const KrylovOptions& opt) {
    cut.validate();
    const CVec fpsi = f.trivial() ? psi0 : apply_function(H, psi0, f);
    const PositionCalculus pc(y);
    auto observe = [&](double t, const CVec& psi) {
        const CMat chi = pc.apply([&](double e) { return cut.chi(std::abs(e) / t); });
        return dgamma_expectation(basis, chi, psi);
    };
    return evolve_track(H, fpsi, times, observe, opt, "w");
}

SparseOperator extended_fiber_H(const ModelSpec& ms, const Vec3& P, const TensorBasis& tb) {
    const OccupationBasis& L = tb.left();
    const OccupationBasis& R = tb.right();
    const RVec w = ms.boson_energy();
    RVec d(std::ptrdiff_t(tb.size()));
    for (std::size_t i = 0; i < tb.size(); ++i) {
        const auto [l, r] = tb.pair(i);
        const Vec3 kl = boson_momentum(L, l), kr = boson_momentum(R, r);
        double e = ms.disp.value(ms.fold({P[0] - kl[0] - kr[0], P[1] - kl[1] - kr[1], P[2] - kl[2] - kr[2]}));
        for (auto p = L.begin(l); p != L.end(l); ++p) e += w(*p);
        for (auto p = R.begin(r); p != R.end(r); ++p) e += w(*p);
        d(std::ptrdiff_t(i)) = e;
    }
    SparseOperator h = diagonal_op(d);
    if (ms.g != 0.0) h = h + cplx(ms.g, 0.0) * left_op(tb, field_op(L, ms.coupling()));
    h.hermitian = is_exactly_hermitian(h.m);
    return h;
}

WPlusProbe W_plus_probe(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis, const TensorBasis& tb,
                        const CMat& y, const EnergyWindow& f, const EnergyWindow& f_ext, const CutoffSet& cut,
                        const CVec& psi0, const std::vector<double>& times, const KrylovOptions& opt,
                        bool route_all_inside) {
    cut.validate();
    const SparseOperator H = build_fiber_H(ms, P, basis);
    const SparseOperator Hx = extended_fiber_H(ms, P, tb);
    if (!Hx.hermitian) throw std::logic_error("extended fiber Hamiltonian is not Hermitian");
    const SparseOperator Pvac = right_vacuum_projector(tb);
    const PositionCalculus pc(y);
    const CVec fpsi = f.trivial() ? psi0 : apply_function(H, psi0, f);

    KrylovPropagator prop(H, opt);
    WPlusProbe out;
    out.total.observable = "wplus";
    out.outer_vacuum.observable = "wplus_outer_vacuum";
    CVec psi = fpsi;
    double t = 0.0;
    const double n0 = fpsi.norm();
    for (double tn : times) {
        prop.advance(psi, tn - t);
        t = tn;
        const CMat chi = pc.apply([&](double e) { return cut.chi(std::abs(e) / t); });
        CMat j0, jinf;
        if (route_all_inside) {
            j0 = CMat::Identity(y.rows(), y.cols());
            jinf = CMat::Zero(y.rows(), y.cols());
        } else {
            j0 = pc.apply([&](double e) { return cut.j0(std::abs(e) / t); });
            jinf = pc.apply([&](double e) { return cut.jinf(std::abs(e) / t); });
        }
        const CVec v = apply_dGamma_orthonormal(basis, chi, psi);
        CVec u = breve_gamma_orthonormal(j0, jinf, basis, tb).apply(v);
        if (!f_ext.trivial()) u = apply_function(Hx, u, f_ext);
        TrackRow a, b;
        a.t = b.t = t;
        a.value = u.norm();
        b.value = Pvac.apply(u).norm();
        a.norm_drift = b.norm_drift = std::abs(psi.norm() - n0);
        out.total.rows.push_back(a);
        out.outer_vacuum.rows.push_back(b);
    }
    out.total.stats = out.outer_vacuum.stats = prop.stats();
    return out;
}

} // namespace nelsonlab
