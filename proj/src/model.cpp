#include "nelsonlab/model.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace nelsonlab {

struct TabulatedSpline {
    boost::math::interpolators::cardinal_cubic_b_spline<double> s;
};

Dispersion Dispersion::nonrelativistic(double mass) {
    if (!(mass > 0.0)) throw ConfigError("model.mass must be positive");
    Dispersion d;
    d.kind_ = DispersionKind::nonrel;
    d.mass_ = mass;
    return d;
}

Dispersion Dispersion::relativistic(double mass) {
    if (!(mass > 0.0)) throw ConfigError("model.mass must be positive");
    Dispersion d;
    d.kind_ = DispersionKind::rel;
    d.mass_ = mass;
    return d;
}

Dispersion Dispersion::tabulated(std::vector<double> values, double dp) {
    if (values.size() < 4) throw ConfigError("tabulated dispersion needs at least 4 samples");
    if (!(dp > 0.0)) throw ConfigError("tabulated dispersion spacing must be positive");
    for (double v : values)
        if (!std::isfinite(v) || v < 0.0) throw ConfigError("tabulated dispersion must be finite and >= 0");
    Dispersion d;
    d.kind_ = DispersionKind::tabulated;
    d.mass_ = 0.0;
    d.dp_ = dp;
    d.table_ = std::move(values);
    const double right = (d.table_.back() - d.table_[d.table_.size() - 2]) / dp;
    d.spline_ = std::make_shared<const TabulatedSpline>(TabulatedSpline{
        boost::math::interpolators::cardinal_cubic_b_spline<double>(d.table_.begin(), d.table_.end(), 0.0, dp,
                                                                     0.0, right)});
    return d;
}

double Dispersion::p_max() const {
    return kind_ == DispersionKind::tabulated ? dp_ * double(table_.size() - 1)
                                              : std::numeric_limits<double>::infinity();
}

double Dispersion::value(double p) const {
    p = std::abs(p);
    switch (kind_) {
    case DispersionKind::nonrel: return p * p / (2.0 * mass_);
    case DispersionKind::rel: return std::sqrt(p * p + mass_ * mass_);
    case DispersionKind::tabulated:
        if (p > p_max()) throw std::domain_error("tabulated dispersion evaluated outside its table");
        return spline_->s(p);
    }
    return 0.0;
}

double Dispersion::radial_derivative(double p) const {
    p = std::abs(p);
    switch (kind_) {
    case DispersionKind::nonrel: return p / mass_;
    case DispersionKind::rel: return p / std::sqrt(p * p + mass_ * mass_);
    case DispersionKind::tabulated:
        if (p > p_max()) throw std::domain_error("tabulated dispersion evaluated outside its table");
        return spline_->s.prime(p);
    }
    return 0.0;
}

Vec3 Dispersion::gradient(const Vec3& p) const {
    const double r = norm3(p);
    if (r == 0.0) return {0.0, 0.0, 0.0};
    const double d = radial_derivative(r) / r;
    return {d * p[0], d * p[1], d * p[2]};
}

double Dispersion::infimum() const {
    if (kind_ == DispersionKind::tabulated) {
        double m = std::numeric_limits<double>::infinity();
        const int n = 20 * int(table_.size());
        for (int i = 0; i <= n; ++i) m = std::min(m, value(p_max() * i / n));
        return m;
    }
    return value(0.0);
}

double Dispersion::hessian_bound() const {
    if (kind_ != DispersionKind::tabulated) return 1.0 / mass_;
    double b = 0.0;
    const int n = 20 * int(table_.size());
    for (int i = 0; i <= n; ++i) {
        const double p = p_max() * i / n;
        b = std::max(b, std::abs(spline_->s.double_prime(p)));
        if (p > 0.0) b = std::max(b, std::abs(radial_derivative(p)) / p);
    }
    return b;
}

double Dispersion::o_beta(double beta) const {
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    switch (kind_) {
    case DispersionKind::nonrel: return mass_ * beta * beta / 2.0;
    case DispersionKind::rel:
        return beta >= 1.0 ? std::numeric_limits<double>::infinity() : mass_ / std::sqrt(1.0 - beta * beta);
    case DispersionKind::tabulated: break;
    }
    // Tabulated: Omega must be non-decreasing in |p|; O_beta = Omega(p*) where p* is the
    // first momentum at which the slope exceeds beta.
    const int n = 50 * int(table_.size());
    const double h = p_max() / n;
    double prev = value(0.0);
    for (int i = 1; i <= n; ++i) {
        const double v = value(i * h);
        if (v < prev - 1e-12 * (1.0 + std::abs(prev)))
            throw ConfigError("unsupported dispersion: tabulated Omega is not non-decreasing in |p|");
        prev = v;
    }
    if (radial_derivative(0.0) > beta) return value(0.0);
    double lo = 0.0;
    for (int i = 1; i <= n; ++i) {
        const double p = i * h;
        if (radial_derivative(p) > beta) {
            double a = lo, b = p;
            for (int it = 0; it < 60; ++it) {
                const double m = 0.5 * (a + b);
                (radial_derivative(m) > beta ? b : a) = m;
            }
            return value(a);
        }
        lo = p;
    }
    return value(p_max());
}

double FormFactor::kappa(double k) const {
    const double s = std::abs(k) / lambda;
    if (s >= 1.0) return 0.0;
    return kappa0 * std::exp(-1.0 / (1.0 - s * s));
}

void ModelSpec::validate() const {
    if (!grid) throw ConfigError("model has no mode grid");
    if (!(ff.sigma > 0.0)) throw ConfigError("ff.sigma must be positive");
    if (!(ff.lambda > 2.0 * ff.sigma)) throw ConfigError("ff.lambda must exceed 2 * ff.sigma");
    if (std::abs(grid->sigma - ff.sigma) > 1e-15 * ff.sigma)
        throw ConfigError("mode grid sigma differs from ff.sigma");
    for (std::size_t j = 0; j < grid->size(); ++j) {
        if (!(grid->weights[j] > 0.0)) throw ConfigError("mode grid has a non-positive weight");
        if (grid->omega_free[j] == 0.0) throw ConfigError("mode grid has a node at k = 0");
    }
}

CVec ModelSpec::coupling() const {
    CVec c(std::ptrdiff_t(grid->size()));
    for (std::size_t j = 0; j < grid->size(); ++j) c(std::ptrdiff_t(j)) = ff.kappa_sigma(grid->abs_k(j));
    return c;
}

RVec ModelSpec::boson_energy() const {
    const auto& w = use_modified ? grid->omega_mod : grid->omega_free;
    return Eigen::Map<const RVec>(w.data(), std::ptrdiff_t(w.size()));
}

double ModelSpec::c_constant() const {
    double c = 0.0;
    for (std::size_t j = 0; j < grid->size(); ++j) {
        const double k = ff.kappa(grid->abs_k(j));
        c += grid->weights[j] * k * k / grid->abs_k(j);
    }
    return c;
}

Vec3 ModelSpec::fold(const Vec3& p) const {
    if (!brillouin) return p;
    const double K = *brillouin;
    Vec3 q = p;
    for (auto& x : q) x -= K * std::floor(x / K + 0.5);
    return q;
}

double g_beta_formula(double B, double C, double beta, double o_beta) {
    if (!(beta < 1.0)) return 0.0;
    const double a = std::pow(1.0 - beta, 1.5) / (3.0 * std::sqrt(B * C));
    const double b = std::pow(1.0 - beta, 2.0) / (3.0 * B * (C + o_beta));
    return std::min({1.0, a, b});
}

double g_beta(const ModelSpec& ms, double beta) {
    return g_beta_formula(ms.disp.hessian_bound(), ms.c_constant(), beta, ms.disp.o_beta(beta));
}

Vec3 boson_momentum(const OccupationBasis& basis, std::size_t i) {
    Vec3 k{0.0, 0.0, 0.0};
    const auto& pts = basis.grid().points;
    for (auto p = basis.begin(i); p != basis.end(i); ++p)
        for (int d = 0; d < 3; ++d) k[d] += pts[*p][d];
    return k;
}

RVec fiber_electron_energy(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis) {
    RVec e(std::ptrdiff_t(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const Vec3 k = boson_momentum(basis, i);
        e(std::ptrdiff_t(i)) = ms.disp.value(ms.fold({P[0] - k[0], P[1] - k[1], P[2] - k[2]}));
    }
    return e;
}

RVec fiber_diagonal(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis) {
    RVec d = fiber_electron_energy(ms, P, basis);
    const RVec w = ms.boson_energy();
    for (std::size_t i = 0; i < basis.size(); ++i) {
        double s = 0.0;
        for (auto p = basis.begin(i); p != basis.end(i); ++p) s += w(*p);
        d(std::ptrdiff_t(i)) += s;
    }
    return d;
}

SparseOperator build_fiber_H(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis) {
    if (&basis.grid() != ms.grid.get() && basis.modes() != ms.grid->size())
        throw std::invalid_argument("fiber Hamiltonian: basis grid does not match the model");
    SparseOperator h = diagonal_op(fiber_diagonal(ms, P, basis));
    if (ms.g != 0.0) h = h + cplx(ms.g, 0.0) * field_op(basis, ms.coupling());
    return h;
}

double free_ground_energy(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis) {
    return fiber_diagonal(ms, P, basis).minCoeff();
}

double LatticeModel::dk() const { return 2.0 * M_PI / (double(L) * a); }
double LatticeModel::electron_p(int e) const { return electron_m(e) * dk(); }

int LatticeModel::wrap(int m) const {
    int r = ((m + L / 2) % L + L) % L;
    return r - L / 2;
}

int LatticeModel::total_class(std::size_t idx) const {
    const std::size_t D = bosons->size();
    const int e = int(idx / D);
    const std::size_t b = idx % D;
    long m = electron_m(e);
    for (auto p = bosons->begin(b); p != bosons->end(b); ++p) m += mode_q[*p];
    return wrap(int(m % L));
}

LatticeModel make_lattice_model(const ModelSpec& ms, int L, double a, BasisPtr bosons) {
    if (L < 2 || L % 2 != 0) throw ConfigError("lattice.sites must be an even number >= 2");
    if (!(a > 0.0)) throw ConfigError("lattice.spacing must be positive");
    if (ms.grid->dim != 1) throw ConfigError("lattice model requires a d = 1 mode grid");
    LatticeModel lm;
    lm.L = L;
    lm.a = a;
    lm.bosons = std::move(bosons);
    const double dk = lm.dk();
    for (const auto& k : lm.bosons->grid().points) {
        const double q = k[0] / dk;
        const double qr = std::round(q);
        if (std::abs(q - qr) > 1e-9) throw ConfigError("boson mode is not on the dual lattice of the electron");
        if (std::abs(qr) >= L / 2) throw ConfigError("boson mode outside the first Brillouin zone");
        lm.mode_q.push_back(int(qr));
    }
    return lm;
}

SparseOperator build_full_H(const ModelSpec& ms, const LatticeModel& lm) {
    const OccupationBasis& B = *lm.bosons;
    const std::size_t D = B.size();
    const RVec w = ms.boson_energy();
    const CVec kap = ms.coupling();
    RVec eb = RVec::Zero(std::ptrdiff_t(D));
    for (std::size_t b = 0; b < D; ++b) {
        double s = 0.0;
        for (auto p = B.begin(b); p != B.end(b); ++p) s += w(*p);
        eb(std::ptrdiff_t(b)) = s;
    }
    std::vector<Eigen::Triplet<cplx>> diag, emit;
    const double c = ms.g / std::sqrt(2.0);
    for (int e = 0; e < lm.L; ++e) {
        const double om = ms.disp.value(lm.electron_p(e));
        for (std::size_t b = 0; b < D; ++b) {
            const auto col = std::ptrdiff_t(lm.index(e, b));
            diag.emplace_back(col, col, cplx(om + eb(std::ptrdiff_t(b)), 0.0));
            if (ms.g == 0.0 || B.total(b) >= B.n_max()) continue;
            const Tuple t = B.tuple(b);
            for (std::size_t j = 0; j < B.modes(); ++j) {
                if (kap(std::ptrdiff_t(j)) == cplx(0.0)) continue;
                Tuple tp = t;
                tp.insert(std::upper_bound(tp.begin(), tp.end(), std::uint16_t(j)), std::uint16_t(j));
                const std::ptrdiff_t bp = B.find(tp);
                if (bp < 0) continue;
                // emitting k_j moves the electron from p to p - k_j
                const int ep = lm.wrap(lm.electron_m(e) - lm.mode_q[j]) + lm.L / 2;
                const double amp = c * std::sqrt(B.grid().weights[j]) * std::sqrt(double(B.count(b, j) + 1));
                emit.emplace_back(std::ptrdiff_t(lm.index(ep, std::size_t(bp))), col, amp * kap(std::ptrdiff_t(j)));
            }
        }
    }
    const auto n = std::ptrdiff_t(lm.dim());
    SpMat d(n, n), a(n, n);
    d.setFromTriplets(diag.begin(), diag.end());
    a.setFromTriplets(emit.begin(), emit.end());
    return {SpMat(d + a + SpMat(a.adjoint())), true};
}

SparseOperator total_momentum_op(const LatticeModel& lm) {
    RVec d(std::ptrdiff_t(lm.dim()));
    for (std::size_t i = 0; i < lm.dim(); ++i) d(std::ptrdiff_t(i)) = lm.total_class(i) * lm.dk();
    return diagonal_op(d);
}

std::vector<std::size_t> momentum_block(const LatticeModel& lm, int c) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < lm.dim(); ++i)
        if (lm.total_class(i) == lm.wrap(c)) out.push_back(i);
    return out;
}

DecayReport interaction_decay_report(const FormFactor& ff, const std::vector<double>& radii) {
    // kappa_sigma is even, so its transform is sqrt(2/pi) int_0^Lambda cos(k y) kappa_sigma(k) dk.
    const int nk = 4000;
    const double hk = ff.lambda / nk;
    std::vector<double> ks(nk), vs(nk);
    double norm2 = 0.0;
    for (int i = 0; i < nk; ++i) {
        ks[std::size_t(i)] = (i + 0.5) * hk;
        vs[std::size_t(i)] = ff.kappa_sigma(ks[std::size_t(i)]);
        norm2 += 2.0 * hk * vs[std::size_t(i)] * vs[std::size_t(i)];
    }
    double rmax = 0.0;
    for (double r : radii) rmax = std::max(rmax, r);
    // resolve the slowest scale 1/sigma and integrate well past the largest radius
    const double ymax = std::max(4.0 * rmax, 400.0 / ff.sigma);
    const double hy = std::min(0.25 / ff.lambda, 0.05 / ff.sigma);
    const int ny = int(std::ceil(ymax / hy));
    std::vector<double> dens(static_cast<std::size_t>(ny));
    for (int i = 0; i < ny; ++i) {
        const double y = (i + 0.5) * hy;
        double s = 0.0;
        for (int k = 0; k < nk; ++k) s += std::cos(ks[std::size_t(k)] * y) * vs[std::size_t(k)];
        const double f = std::sqrt(2.0 / M_PI) * hk * s;
        dens[std::size_t(i)] = 2.0 * hy * f * f; // both signs of y
    }
    // tail[i] = mass on |y| >= i * hy
    std::vector<double> tail(std::size_t(ny) + 1, 0.0);
    for (int i = ny - 1; i >= 0; --i) tail[std::size_t(i)] = tail[std::size_t(i) + 1] + dens[std::size_t(i)];

    DecayReport rep;
    rep.norm = std::sqrt(norm2);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (double R : radii) {
        double t;
        if (R <= 0.0) {
            t = rep.norm;
        } else {
            const double pos = R / hy;
            const auto i = std::min<std::size_t>(std::size_t(pos), std::size_t(ny));
            const double frac = pos - double(i);
            const double m = i < std::size_t(ny) ? tail[i] - frac * dens[i] : 0.0;
            t = std::sqrt(std::max(0.0, m));
        }
        rep.rows.push_back({R, t});
        if (R > 0.0 && t > 0.0) {
            const double x = std::log(R), yv = std::log(t);
            sx += x;
            sy += yv;
            sxx += x * x;
            sxy += x * yv;
            ++n;
        }
    }
    if (n >= 2) rep.exponent = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
    return rep;
}

double subadditivity_violation(const ModeGrid& grid) {
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t j = i; j < grid.size(); ++j) {
            const Vec3& a = grid.points[i];
            const Vec3& b = grid.points[j];
            const double r = norm3({a[0] + b[0], a[1] + b[1], a[2] + b[2]});
            const double lhs = modified_dispersion(r, grid.sigma);
            worst = std::max(worst, lhs - grid.omega_mod[i] - grid.omega_mod[j]);
        }
    }
    return worst;
}

} // namespace nelsonlab
