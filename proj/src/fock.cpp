#include "nelsonlab/fock.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nelsonlab {

namespace {

double bump_tail(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }

void insert_mode(Tuple& t, std::uint16_t j) {
    t.insert(std::upper_bound(t.begin(), t.end(), j), j);
}

void erase_mode(Tuple& t, std::uint16_t j) {
    t.erase(std::lower_bound(t.begin(), t.end(), j));
}

int count_mode(const Tuple& t, std::uint16_t j) {
    auto r = std::equal_range(t.begin(), t.end(), j);
    return int(r.second - r.first);
}

bool uniform_weights(const ModeGrid& g) {
    for (double w : g.weights)
        if (w != g.weights.front()) return false;
    return true;
}

void require_modes(const OccupationBasis& basis, std::ptrdiff_t n, const char* what) {
    if (n != std::ptrdiff_t(basis.modes()))
        throw std::invalid_argument(std::string(what) + ": dimension mismatch with mode grid");
}

// Entrywise conj-symmetrize a matrix that is Hermitian up to rounding.
CMat hermitize(const CMat& b) {
    CMat h = 0.5 * (b + b.adjoint());
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        h(i, i) = cplx(h(i, i).real(), 0.0);
        for (Eigen::Index j = i + 1; j < h.cols(); ++j) h(j, i) = std::conj(h(i, j));
    }
    return h;
}

bool exactly_hermitian(const CMat& b) {
    if (b.rows() != b.cols()) return false;
    for (Eigen::Index i = 0; i < b.rows(); ++i)
        for (Eigen::Index j = i; j < b.cols(); ++j)
            if (b(i, j) != std::conj(b(j, i))) return false;
    return true;
}

using Column = std::map<Tuple, cplx>;

// a*(v) applied to a column of untruncated amplitudes (orthonormal modes).
Column apply_creation(const Column& col, const Eigen::Ref<const CVec>& v) {
    Column out;
    for (const auto& [t, c] : col) {
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (v(i) == cplx(0.0)) continue;
            Tuple tp = t;
            const int n = count_mode(t, std::uint16_t(i));
            insert_mode(tp, std::uint16_t(i));
            out[tp] += c * v(i) * std::sqrt(double(n + 1));
        }
    }
    return out;
}

void add_column(const Column& col, std::ptrdiff_t src_index, const TupleResolver& resolve,
                std::vector<Eigen::Triplet<cplx>>& trip, std::size_t& dropped) {
    for (const auto& [t, c] : col) {
        if (c == cplx(0.0)) continue;
        const std::ptrdiff_t row = resolve(t);
        if (row < 0) {
            ++dropped;
            continue;
        }
        trip.emplace_back(row, src_index, c);
    }
}

} // namespace

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

double smooth_step(double x, double a, double b) {
    if (x <= a) return 0.0;
    if (x >= b) return 1.0;
    const double s = (x - a) / (b - a);
    const double p = bump_tail(s), q = bump_tail(1.0 - s);
    return p / (p + q);
}

double smooth_step_derivative(double x, double a, double b) {
    if (x <= a || x >= b) return 0.0;
    const double L = b - a;
    const double s = (x - a) / L;
    const double p = bump_tail(s), q = bump_tail(1.0 - s);
    const double dp = p / (s * s), dq = -q / ((1.0 - s) * (1.0 - s));
    return (dp * q - p * dq) / ((p + q) * (p + q)) / L;
}

double modified_dispersion(double r, double sigma) {
    const double soft = std::sqrt(r * r + 0.25 * sigma * sigma);
    const double b = smooth_step(r, 0.5 * sigma, sigma);
    return (1.0 - b) * soft + b * r;
}

double modified_dispersion_derivative(double r, double sigma) {
    const double soft = std::sqrt(r * r + 0.25 * sigma * sigma);
    const double b = smooth_step(r, 0.5 * sigma, sigma);
    const double db = smooth_step_derivative(r, 0.5 * sigma, sigma);
    return (1.0 - b) * r / soft + b + db * (r - soft);
}

CVec ModeGrid::to_orthonormal(const CVec& h) const {
    if (std::size_t(h.size()) != size()) throw std::invalid_argument("mode vector: dimension mismatch");
    CVec c(h.size());
    for (Eigen::Index j = 0; j < h.size(); ++j) c(j) = std::sqrt(weights[j]) * h(j);
    return c;
}

CVec ModeGrid::from_orthonormal(const CVec& c) const {
    if (std::size_t(c.size()) != size()) throw std::invalid_argument("mode vector: dimension mismatch");
    CVec h(c.size());
    for (Eigen::Index j = 0; j < c.size(); ++j) h(j) = c(j) / std::sqrt(weights[j]);
    return h;
}

ModeGrid line_grid_spacing(int n_modes, double spacing, double sigma) {
    if (n_modes <= 0 || n_modes % 2 != 0)
        throw ConfigError("line grid needs a positive even mode count (k = 0 must not be a node)");
    if (!(spacing > 0.0)) throw ConfigError("line grid spacing must be positive");
    if (!(sigma > 0.0)) throw ConfigError("infrared cutoff sigma must be positive");
    ModeGrid g;
    g.dim = 1;
    g.sigma = sigma;
    g.kind = GridKind::line;
    g.spacing = spacing;
    for (int j = 0; j < n_modes; ++j) {
        const double k = (j - n_modes / 2 + 0.5) * spacing;
        g.points.push_back({k, 0.0, 0.0});
        g.weights.push_back(spacing);
        g.omega_free.push_back(std::abs(k));
        g.omega_mod.push_back(modified_dispersion(std::abs(k), sigma));
    }
    return g;
}

ModeGrid line_grid(int n_modes, double kmax, double sigma) {
    if (!(kmax > 0.0)) throw ConfigError("grid.kmax must be positive");
    if (n_modes <= 0) throw ConfigError("grid.n_modes must be positive");
    return line_grid_spacing(n_modes, 2.0 * kmax / n_modes, sigma);
}

ModeGrid radial_grid(int n_shells, double kmax, int n_dirs, double sigma) {
    if (n_shells <= 0 || !(kmax > 0.0)) throw ConfigError("radial grid needs shells > 0 and kmax > 0");
    if (!(sigma > 0.0)) throw ConfigError("infrared cutoff sigma must be positive");
    std::vector<Vec3> dirs = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    if (n_dirs == 14) {
        const double c = 1.0 / std::sqrt(3.0);
        for (int sx : {1, -1})
            for (int sy : {1, -1})
                for (int sz : {1, -1}) dirs.push_back({sx * c, sy * c, sz * c});
    } else if (n_dirs != 6) {
        throw ConfigError("radial grid supports 6 or 14 directions");
    }
    const double dr = kmax / n_shells;
    const double dOmega = 4.0 * M_PI / double(dirs.size());
    ModeGrid g;
    g.dim = 3;
    g.sigma = sigma;
    g.kind = GridKind::radial;
    g.spacing = dr;
    g.n_rays = int(dirs.size());
    g.n_shells = n_shells;
    for (int d = 0; d < int(dirs.size()); ++d) {
        for (int s = 0; s < n_shells; ++s) {
            const double r = (s + 0.5) * dr;
            g.points.push_back({r * dirs[d][0], r * dirs[d][1], r * dirs[d][2]});
            g.weights.push_back(r * r * dr * dOmega);
            g.omega_free.push_back(r);
            g.omega_mod.push_back(modified_dispersion(r, sigma));
            g.ray.push_back(d);
            g.radial_index.push_back(s);
        }
    }
    return g;
}

ModeGrid direct_sum(const ModeGrid& a, const ModeGrid& b) {
    if (a.dim != b.dim) throw std::invalid_argument("direct_sum: grids of different dimension");
    ModeGrid g;
    g.dim = a.dim;
    g.sigma = a.sigma;
    g.kind = GridKind::unstructured;
    for (const ModeGrid* s : {&a, &b}) {
        g.points.insert(g.points.end(), s->points.begin(), s->points.end());
        g.weights.insert(g.weights.end(), s->weights.begin(), s->weights.end());
        g.omega_free.insert(g.omega_free.end(), s->omega_free.begin(), s->omega_free.end());
        g.omega_mod.insert(g.omega_mod.end(), s->omega_mod.begin(), s->omega_mod.end());
    }
    return g;
}

CMat to_orthonormal(const ModeGrid& target, const CMat& b, const ModeGrid& source) {
    if (std::size_t(b.rows()) != target.size() || std::size_t(b.cols()) != source.size())
        throw std::invalid_argument("mode operator: dimension mismatch");
    if (&target == &source && uniform_weights(target)) return b;
    CMat bt(b.rows(), b.cols());
    for (Eigen::Index i = 0; i < b.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j)
            bt(i, j) = std::sqrt(target.weights[i] / source.weights[j]) * b(i, j);
    return bt;
}

CMat from_orthonormal(const ModeGrid& target, const CMat& bt, const ModeGrid& source) {
    if (std::size_t(bt.rows()) != target.size() || std::size_t(bt.cols()) != source.size())
        throw std::invalid_argument("mode operator: dimension mismatch");
    if (&target == &source && uniform_weights(target)) return bt;
    CMat b(bt.rows(), bt.cols());
    for (Eigen::Index i = 0; i < bt.rows(); ++i)
        for (Eigen::Index j = 0; j < bt.cols(); ++j)
            b(i, j) = std::sqrt(source.weights[j] / target.weights[i]) * bt(i, j);
    return b;
}

// ---------------------------------------------------------------------------
// OccupationBasis

OccupationBasis::OccupationBasis(std::shared_ptr<const ModeGrid> grid, int n_max,
                                 std::optional<double> e_cap)
    : grid_(std::move(grid)), n_max_(n_max), e_cap_(e_cap) {
    if (!grid_) throw std::invalid_argument("basis: null grid");
    if (n_max_ < 0) throw ConfigError("basis.n_max must be >= 0");
    const std::size_t M = grid_->size();
    if (M == 0) throw ConfigError("basis: empty mode grid");
    if (M > 65535) throw ConfigError("basis: too many modes");
    if (e_cap_ && *e_cap_ < 0.0) throw ConfigError("basis.e_cap excludes even the vacuum");

    const std::size_t top = M + std::size_t(n_max_) + 1;
    binom_.assign(top + 1, std::vector<std::uint64_t>(std::size_t(n_max_) + 3, 0));
    for (std::size_t n = 0; n <= top; ++n) {
        binom_[n][0] = 1;
        for (std::size_t k = 1; k < binom_[n].size() && k <= n; ++k)
            binom_[n][k] = binom_[n - 1][k - 1] + (k <= n - 1 ? binom_[n - 1][k] : 0);
    }
    if (!e_cap_ && binom_[M + n_max_][n_max_] > 50'000'000ULL)
        throw ConfigError("basis: state count exceeds the supported size");

    offsets_.push_back(0);
    const auto& om = grid_->omega_mod;
    Tuple t;
    // Depth-first enumeration of non-decreasing tuples in lexicographic order.
    std::function<void(int, std::size_t, double)> rec = [&](int left, std::size_t lo, double e) {
        if (left == 0) {
            modes_.insert(modes_.end(), t.begin(), t.end());
            offsets_.push_back(modes_.size());
            if (e_cap_) ranks_.push_back(rank(t));
            if (offsets_.size() > 50'000'001) throw ConfigError("basis: state count exceeds the supported size");
            return;
        }
        for (std::size_t j = lo; j < M; ++j) {
            const double ej = e + om[j];
            if (e_cap_ && ej > *e_cap_) continue;
            t.push_back(std::uint16_t(j));
            rec(left - 1, j, ej);
            t.pop_back();
        }
    };
    for (int N = 0; N <= n_max_; ++N) rec(N, 0, 0.0);
}

std::uint64_t OccupationBasis::rank(const Tuple& t) const {
    const std::uint64_t M = grid_->size();
    const std::size_t N = t.size();
    auto C = [&](std::uint64_t n, std::uint64_t k) -> std::uint64_t {
        if (k > n) return 0;
        return binom_[n][k];
    };
    std::uint64_t r = N == 0 ? 0 : C(M + N - 1, N - 1);
    std::uint64_t prev = 0;
    for (std::size_t s = 1; s <= N; ++s) {
        const std::uint64_t rem = N - s;
        const std::uint64_t a = prev, b = t[s - 1];
        r += C(M - a + rem, rem + 1) - C(M - b + rem, rem + 1);
        prev = b;
    }
    return r;
}

std::ptrdiff_t OccupationBasis::find(const Tuple& t) const {
    if (int(t.size()) > n_max_) return -1;
    const std::uint64_t r = rank(t);
    if (!e_cap_) return std::ptrdiff_t(r);
    auto it = std::lower_bound(ranks_.begin(), ranks_.end(), r);
    if (it == ranks_.end() || *it != r) return -1;
    return it - ranks_.begin();
}

std::ptrdiff_t OccupationBasis::find_occupation(const std::vector<int>& n) const {
    if (n.size() != modes()) throw std::invalid_argument("occupation vector: dimension mismatch");
    Tuple t;
    for (std::size_t j = 0; j < n.size(); ++j) {
        if (n[j] < 0) return -1;
        for (int c = 0; c < n[j]; ++c) t.push_back(std::uint16_t(j));
    }
    return find(t);
}

Tuple OccupationBasis::tuple(std::size_t i) const { return Tuple(begin(i), end(i)); }

std::vector<int> OccupationBasis::occupation(std::size_t i) const {
    std::vector<int> n(modes(), 0);
    for (auto p = begin(i); p != end(i); ++p) ++n[*p];
    return n;
}

int OccupationBasis::count(std::size_t i, std::size_t mode) const {
    auto r = std::equal_range(begin(i), end(i), std::uint16_t(mode));
    return int(r.second - r.first);
}

double OccupationBasis::energy(std::size_t i) const {
    double e = 0.0;
    for (auto p = begin(i); p != end(i); ++p) e += grid_->omega_mod[*p];
    return e;
}

BasisPtr build_basis(std::shared_ptr<const ModeGrid> grid, int n_max, std::optional<double> e_cap) {
    return std::make_shared<const OccupationBasis>(std::move(grid), n_max, e_cap);
}

FockVector FockVector::vacuum(BasisPtr b) {
    FockVector v{b, CVec::Zero(std::ptrdiff_t(b->size()))};
    v.amps(0) = 1.0;
    return v;
}

// ---------------------------------------------------------------------------
// SparseOperator

CVec SparseOperator::apply(const CVec& v) const {
    if (v.size() != m.cols()) throw std::invalid_argument("matvec: dimension mismatch");
    return m * v;
}

SparseOperator SparseOperator::adjoint() const { return {SpMat(m.adjoint()), hermitian}; }

SparseOperator operator+(const SparseOperator& a, const SparseOperator& b) {
    return {SpMat(a.m + b.m), a.hermitian && b.hermitian};
}
SparseOperator operator-(const SparseOperator& a, const SparseOperator& b) {
    return {SpMat(a.m - b.m), a.hermitian && b.hermitian};
}
SparseOperator operator*(const SparseOperator& a, const SparseOperator& b) {
    return {SpMat(a.m * b.m), false};
}
SparseOperator operator*(cplx s, const SparseOperator& a) {
    return {SpMat(s * a.m), a.hermitian && s.imag() == 0.0};
}

SparseOperator identity_op(std::ptrdiff_t n) {
    SpMat m(n, n);
    m.setIdentity();
    return {m, true};
}

SparseOperator diagonal_op(const RVec& d) {
    std::vector<Eigen::Triplet<cplx>> trip;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (d(i) != 0.0) trip.emplace_back(i, i, cplx(d(i), 0.0));
    SpMat m(d.size(), d.size());
    m.setFromTriplets(trip.begin(), trip.end());
    return {m, true};
}

bool is_exactly_hermitian(const SpMat& m) {
    if (m.rows() != m.cols()) return false;
    SpMat d = m - SpMat(m.adjoint());
    d.prune(cplx(0.0), 0.0);
    for (int k = 0; k < d.outerSize(); ++k)
        for (SpMat::InnerIterator it(d, k); it; ++it)
            if (it.value() != cplx(0.0)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Ladder operators

SparseOperator creation_op(const OccupationBasis& basis, const CVec& h) {
    require_modes(basis, h.size(), "creation_op");
    const CVec c = basis.grid().to_orthonormal(h);
    std::vector<Eigen::Triplet<cplx>> trip;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (basis.total(i) >= basis.n_max()) continue;
        const Tuple t = basis.tuple(i);
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            if (c(j) == cplx(0.0)) continue;
            Tuple tp = t;
            const int n = count_mode(t, std::uint16_t(j));
            insert_mode(tp, std::uint16_t(j));
            const std::ptrdiff_t row = basis.find(tp);
            if (row < 0) continue;
            trip.emplace_back(row, std::ptrdiff_t(i), c(j) * std::sqrt(double(n + 1)));
        }
    }
    const auto D = std::ptrdiff_t(basis.size());
    SpMat m(D, D);
    m.setFromTriplets(trip.begin(), trip.end());
    return {m, false};
}

SparseOperator annihilation_op(const OccupationBasis& basis, const CVec& h) {
    return {SpMat(creation_op(basis, h).m.adjoint()), false};
}

SparseOperator field_op(const OccupationBasis& basis, const CVec& h) {
    const SpMat ad = creation_op(basis, h).m;
    SpMat f = ad + SpMat(ad.adjoint());
    f *= cplx(1.0 / std::sqrt(2.0), 0.0);
    return {f, true};
}

SparseOperator number_op(const OccupationBasis& basis) {
    RVec d(std::ptrdiff_t(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) d(std::ptrdiff_t(i)) = basis.total(i);
    return diagonal_op(d);
}

SparseOperator dGamma_diag(const OccupationBasis& basis, const RVec& b) {
    require_modes(basis, b.size(), "dGamma");
    RVec d(std::ptrdiff_t(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) {
        double s = 0.0;
        for (auto p = basis.begin(i); p != basis.end(i); ++p) s += b(*p);
        d(std::ptrdiff_t(i)) = s;
    }
    return diagonal_op(d);
}

SparseOperator dGamma_orthonormal(const OccupationBasis& basis, const CMat& bt_in) {
    require_modes(basis, bt_in.rows(), "dGamma");
    require_modes(basis, bt_in.cols(), "dGamma");
    const bool herm_in = (bt_in - bt_in.adjoint()).cwiseAbs().maxCoeff() <=
                         1e-14 * std::max(1.0, bt_in.cwiseAbs().maxCoeff());
    const CMat bt = herm_in ? hermitize(bt_in) : bt_in;
    const auto M = bt.rows();
    std::vector<Eigen::Triplet<cplx>> trip;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const Tuple t = basis.tuple(i);
        for (std::size_t s = 0; s < t.size(); ++s) {
            if (s > 0 && t[s] == t[s - 1]) continue;
            const std::uint16_t j = t[s];
            const int nj = count_mode(t, j);
            Tuple tm = t;
            erase_mode(tm, j);
            for (Eigen::Index ip = 0; ip < M; ++ip) {
                const cplx b = bt(ip, j);
                if (b == cplx(0.0)) continue;
                Tuple tp = tm;
                const int mi = count_mode(tm, std::uint16_t(ip)) + 1;
                insert_mode(tp, std::uint16_t(ip));
                const std::ptrdiff_t row = basis.find(tp);
                if (row < 0) continue;
                trip.emplace_back(row, std::ptrdiff_t(i), b * std::sqrt(double(nj * mi)));
            }
        }
    }
    const auto D = std::ptrdiff_t(basis.size());
    SpMat m(D, D);
    m.setFromTriplets(trip.begin(), trip.end());
    return {m, herm_in && exactly_hermitian(bt)};
}

SparseOperator dGamma(const OccupationBasis& basis, const CMat& b) {
    const bool diag = b.rows() == b.cols() && (b - CMat(b.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
    if (diag && (b.diagonal().imag().array() == 0.0).all()) {
        return dGamma_diag(basis, RVec(b.diagonal().real()));
    }
    return dGamma_orthonormal(basis, to_orthonormal(basis.grid(), b, basis.grid()));
}

// ---------------------------------------------------------------------------
// Multiplicative second quantization

LiftResult lift_gamma(const OccupationBasis& src, const CMat& bt, std::size_t target_modes,
                      const TupleResolver& resolve, std::ptrdiff_t target_dim) {
    if (std::size_t(bt.rows()) != target_modes || std::size_t(bt.cols()) != src.modes())
        throw std::invalid_argument("Gamma: dimension mismatch");
    std::vector<Eigen::Triplet<cplx>> trip;
    LiftResult out;
    std::vector<Column> cols(src.size());
    int current_sector = 0;
    std::size_t sector_start = 0, prev_start = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const int N = src.total(i);
        if (N != current_sector) {
            // Drop columns two sectors back; they are no longer referenced.
            for (std::size_t k = prev_start; k < sector_start; ++k) Column().swap(cols[k]);
            prev_start = sector_start;
            sector_start = i;
            current_sector = N;
        }
        if (N == 0) {
            cols[i][Tuple{}] = 1.0;
        } else {
            Tuple t = src.tuple(i);
            const std::uint16_t j = t.back();
            const int nj = count_mode(t, j);
            t.pop_back();
            const std::ptrdiff_t prev = src.find(t);
            cols[i] = apply_creation(cols[std::size_t(prev)], bt.col(j));
            for (auto& kv : cols[i]) kv.second /= std::sqrt(double(nj));
        }
        add_column(cols[i], std::ptrdiff_t(i), resolve, trip, out.dropped);
    }
    out.m = SpMat(target_dim, std::ptrdiff_t(src.size()));
    out.m.setFromTriplets(trip.begin(), trip.end());
    return out;
}

LiftResult lift_dgamma2(const OccupationBasis& src, const CMat& at, const CMat& bt,
                        std::size_t target_modes, const TupleResolver& resolve,
                        std::ptrdiff_t target_dim) {
    if (std::size_t(at.rows()) != target_modes || std::size_t(at.cols()) != src.modes() ||
        at.rows() != bt.rows() || at.cols() != bt.cols())
        throw std::invalid_argument("dGamma2: dimension mismatch");
    std::vector<Eigen::Triplet<cplx>> trip;
    LiftResult out;
    std::vector<Column> G(src.size()), D(src.size());
    int current_sector = 0;
    std::size_t sector_start = 0, prev_start = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const int N = src.total(i);
        if (N != current_sector) {
            for (std::size_t k = prev_start; k < sector_start; ++k) {
                Column().swap(G[k]);
                Column().swap(D[k]);
            }
            prev_start = sector_start;
            sector_start = i;
            current_sector = N;
        }
        if (N == 0) {
            G[i][Tuple{}] = 1.0;
        } else {
            Tuple t = src.tuple(i);
            const std::uint16_t j = t.back();
            const double s = 1.0 / std::sqrt(double(count_mode(t, j)));
            t.pop_back();
            const auto prev = std::size_t(src.find(t));
            G[i] = apply_creation(G[prev], at.col(j));
            Column d1 = apply_creation(D[prev], at.col(j));
            Column d2 = apply_creation(G[prev], bt.col(j));
            for (auto& kv : d2) d1[kv.first] += kv.second;
            for (auto& kv : G[i]) kv.second *= s;
            for (auto& kv : d1) kv.second *= s;
            D[i] = std::move(d1);
        }
        add_column(D[i], std::ptrdiff_t(i), resolve, trip, out.dropped);
    }
    out.m = SpMat(target_dim, std::ptrdiff_t(src.size()));
    out.m.setFromTriplets(trip.begin(), trip.end());
    return out;
}

SparseOperator Gamma(const OccupationBasis& basis, const CMat& b) {
    require_modes(basis, b.rows(), "Gamma");
    require_modes(basis, b.cols(), "Gamma");
    const CMat bt = to_orthonormal(basis.grid(), b, basis.grid());
    const bool diag = (bt - CMat(bt.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
    const auto D = std::ptrdiff_t(basis.size());
    if (diag) {
        std::vector<Eigen::Triplet<cplx>> trip;
        bool real = true;
        for (std::size_t i = 0; i < basis.size(); ++i) {
            cplx v = 1.0;
            for (auto p = basis.begin(i); p != basis.end(i); ++p) v *= bt(*p, *p);
            if (v != cplx(0.0)) trip.emplace_back(std::ptrdiff_t(i), std::ptrdiff_t(i), v);
            real = real && v.imag() == 0.0;
        }
        SpMat m(D, D);
        m.setFromTriplets(trip.begin(), trip.end());
        return {m, real};
    }
    auto r = lift_gamma(basis, bt, basis.modes(), [&](const Tuple& t) { return basis.find(t); }, D);
    return {r.m, false};
}

SparseOperator dGamma2(const OccupationBasis& basis, const CMat& a, const CMat& b) {
    require_modes(basis, a.rows(), "dGamma2");
    require_modes(basis, a.cols(), "dGamma2");
    require_modes(basis, b.rows(), "dGamma2");
    require_modes(basis, b.cols(), "dGamma2");
    const CMat at = to_orthonormal(basis.grid(), a, basis.grid());
    const CMat bt = to_orthonormal(basis.grid(), b, basis.grid());
    const auto D = std::ptrdiff_t(basis.size());
    auto r = lift_dgamma2(basis, at, bt, basis.modes(),
                          [&](const Tuple& t) { return basis.find(t); }, D);
    return {r.m, false};
}

// ---------------------------------------------------------------------------

double weighted_norm2(const ModeGrid& grid, const CVec& h) {
    if (std::size_t(h.size()) != grid.size()) throw std::invalid_argument("mode vector: dimension mismatch");
    double s = 0.0;
    for (Eigen::Index j = 0; j < h.size(); ++j) s += grid.weights[j] * std::norm(h(j));
    return s;
}

cplx weighted_inner(const ModeGrid& grid, const CVec& g, const CVec& h) {
    if (std::size_t(h.size()) != grid.size() || g.size() != h.size())
        throw std::invalid_argument("mode vector: dimension mismatch");
    cplx s = 0.0;
    for (Eigen::Index j = 0; j < h.size(); ++j) s += grid.weights[j] * std::conj(g(j)) * h(j);
    return s;
}

double weighted_norm_omega(const ModeGrid& grid, const CVec& h) {
    if (std::size_t(h.size()) != grid.size()) throw std::invalid_argument("mode vector: dimension mismatch");
    double s = 0.0;
    for (Eigen::Index j = 0; j < h.size(); ++j) {
        const double k = grid.omega_free[j];
        if (k == 0.0) throw std::domain_error("weighted_norm_omega: grid has a node at k = 0");
        s += grid.weights[j] * (1.0 + 1.0 / k) * std::norm(h(j));
    }
    return std::sqrt(s);
}

SparseOperator sector_projector(const OccupationBasis& basis, int n) {
    RVec d(std::ptrdiff_t(basis.size()));
    for (std::size_t i = 0; i < basis.size(); ++i) d(std::ptrdiff_t(i)) = basis.total(i) <= n ? 1.0 : 0.0;
    return diagonal_op(d);
}

SparseOperator interacting_projector(const OccupationBasis& basis, double sigma) {
    RVec d(std::ptrdiff_t(basis.size()));
    const auto& g = basis.grid();
    for (std::size_t i = 0; i < basis.size(); ++i) {
        bool soft = false;
        for (auto p = basis.begin(i); p != basis.end(i); ++p) soft = soft || g.omega_free[*p] <= sigma;
        d(std::ptrdiff_t(i)) = soft ? 0.0 : 1.0;
    }
    return diagonal_op(d);
}

namespace {

// Phi(:, j) = a_j psi, restricted to the states with N <= n_max - 1 (a leading block).
CMat lowered_amplitudes(const OccupationBasis& basis, const Eigen::Ref<const CVec>& psi,
                        std::size_t& low_dim) {
    low_dim = 0;
    while (low_dim < basis.size() && basis.total(low_dim) < basis.n_max()) ++low_dim;
    CMat phi = CMat::Zero(std::ptrdiff_t(low_dim), std::ptrdiff_t(basis.modes()));
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const cplx c = psi(std::ptrdiff_t(i));
        if (c == cplx(0.0)) continue;
        const Tuple t = basis.tuple(i);
        for (std::size_t s = 0; s < t.size(); ++s) {
            if (s > 0 && t[s] == t[s - 1]) continue;
            const int nj = count_mode(t, t[s]);
            Tuple tm = t;
            erase_mode(tm, t[s]);
            const std::ptrdiff_t row = basis.find(tm);
            phi(row, t[s]) += c * std::sqrt(double(nj));
        }
    }
    return phi;
}

} // namespace

CMat one_body_density(const OccupationBasis& basis, const Eigen::Ref<const CVec>& psi) {
    if (psi.size() != std::ptrdiff_t(basis.size())) throw std::invalid_argument("density: dimension mismatch");
    std::size_t low = 0;
    const CMat phi = lowered_amplitudes(basis, psi, low);
    return phi.adjoint() * phi;
}

CVec apply_dGamma_orthonormal(const OccupationBasis& basis, const CMat& bt,
                              const Eigen::Ref<const CVec>& psi) {
    require_modes(basis, bt.rows(), "dGamma");
    require_modes(basis, bt.cols(), "dGamma");
    if (psi.size() != std::ptrdiff_t(basis.size())) throw std::invalid_argument("dGamma: dimension mismatch");
    std::size_t low = 0;
    const CMat phi = lowered_amplitudes(basis, psi, low);
    const CMat xi = phi * bt.transpose();
    CVec out = CVec::Zero(psi.size());
    for (std::size_t s = 0; s < low; ++s) {
        const Tuple t = basis.tuple(s);
        for (Eigen::Index ip = 0; ip < bt.rows(); ++ip) {
            const cplx x = xi(std::ptrdiff_t(s), ip);
            if (x == cplx(0.0)) continue;
            Tuple tp = t;
            const int m = count_mode(t, std::uint16_t(ip)) + 1;
            insert_mode(tp, std::uint16_t(ip));
            const std::ptrdiff_t row = basis.find(tp);
            if (row < 0) continue;
            out(row) += x * std::sqrt(double(m));
        }
    }
    return out;
}

} // namespace nelsonlab
