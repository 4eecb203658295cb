#include "nelsonlab/split.hpp"

#include <algorithm>
#include <cmath>

namespace nelsonlab {

namespace {

std::vector<std::pair<std::size_t, std::size_t>> sector_ranges(const OccupationBasis& b) {
    std::vector<std::pair<std::size_t, std::size_t>> r(std::size_t(b.n_max()) + 1, {0, 0});
    std::size_t i = 0;
    for (int N = 0; N <= b.n_max(); ++N) {
        r[std::size_t(N)].first = i;
        while (i < b.size() && b.total(i) == N) ++i;
        r[std::size_t(N)].second = i;
    }
    return r;
}

TupleResolver split_resolver(const TensorBasis& tb) {
    const std::uint16_t M = std::uint16_t(tb.left().modes());
    return [&tb, M](const Tuple& t) -> std::ptrdiff_t {
        auto mid = std::lower_bound(t.begin(), t.end(), M);
        Tuple lt(t.begin(), mid), rt(mid, t.end());
        for (auto& j : rt) j = std::uint16_t(j - M);
        const std::ptrdiff_t l = tb.left().find(lt);
        if (l < 0) return -1;
        const std::ptrdiff_t r = tb.right().find(rt);
        if (r < 0) return -1;
        return tb.find(std::size_t(l), std::size_t(r));
    };
}

void require_same_modes(const TensorBasis& tb, const OccupationBasis& b, const char* what) {
    if (tb.left().modes() != b.modes() || tb.right().modes() != b.modes())
        throw std::invalid_argument(std::string(what) + ": mode count mismatch");
}

CMat stack(const CMat& top, const CMat& bottom) {
    CMat s(top.rows() + bottom.rows(), top.cols());
    s << top, bottom;
    return s;
}

} // namespace

TensorBasis::TensorBasis(BasisPtr left, BasisPtr right, int joint_cap)
    : left_(std::move(left)), right_(std::move(right)), joint_cap_(joint_cap) {
    if (!left_ || !right_) throw std::invalid_argument("tensor basis: null factor");
    if (joint_cap_ < 0) throw ConfigError("tensor basis: joint cap must be >= 0");
    const auto rr = sector_ranges(*right_);
    for (int N = 0; N <= joint_cap_; ++N) {
        for (std::size_t l = 0; l < left_->size(); ++l) {
            const int nl = left_->total(l);
            if (nl > N) break;
            const int nr = N - nl;
            if (nr > right_->n_max()) continue;
            for (std::size_t r = rr[std::size_t(nr)].first; r < rr[std::size_t(nr)].second; ++r) {
                index_.emplace(std::uint64_t(l) * right_->size() + r, pairs_.size());
                pairs_.emplace_back(l, r);
            }
        }
    }
}

std::ptrdiff_t TensorBasis::find(std::size_t l, std::size_t r) const {
    auto it = index_.find(std::uint64_t(l) * right_->size() + r);
    return it == index_.end() ? -1 : std::ptrdiff_t(it->second);
}

CMat SplitPair::stacked() const { return stack(j0, jinf); }

void SplitPair::classify(const ModeGrid& grid, double tol) {
    const auto M = std::ptrdiff_t(grid.size());
    const CMat a = to_orthonormal(grid, j0, grid), b = to_orthonormal(grid, jinf, grid);
    isometric = (a.adjoint() * a + b.adjoint() * b - CMat::Identity(M, M)).cwiseAbs().maxCoeff() <= tol;
    partition = (j0 + jinf - CMat::Identity(M, M)).cwiseAbs().maxCoeff() <= tol;
}

SparseOperator tensor_iso_U(const OccupationBasis& basis_sum, const TensorBasis& tb) {
    const std::size_t M = tb.left().modes();
    if (basis_sum.modes() != 2 * M || tb.right().modes() != M)
        throw std::invalid_argument("tensor_iso_U: basis is not over the doubled grid");
    if (basis_sum.n_max() != tb.joint_cap() || tb.left().n_max() < tb.joint_cap() ||
        tb.right().n_max() < tb.joint_cap())
        throw ConfigError("tensor_iso_U: incompatible caps");
    const auto resolve = split_resolver(tb);
    std::vector<Eigen::Triplet<cplx>> trip;
    for (std::size_t i = 0; i < basis_sum.size(); ++i) {
        const std::ptrdiff_t row = resolve(basis_sum.tuple(i));
        if (row >= 0) trip.emplace_back(row, std::ptrdiff_t(i), cplx(1.0));
    }
    SpMat m(std::ptrdiff_t(tb.size()), std::ptrdiff_t(basis_sum.size()));
    m.setFromTriplets(trip.begin(), trip.end());
    return {m, false};
}

SparseOperator breve_gamma_orthonormal(const CMat& j0t, const CMat& jinft,
                                       const OccupationBasis& source, const TensorBasis& tb) {
    require_same_modes(tb, source, "breve_gamma");
    const auto r = lift_gamma(source, stack(j0t, jinft), 2 * source.modes(), split_resolver(tb),
                              std::ptrdiff_t(tb.size()));
    return {r.m, false};
}

SparseOperator breve_gamma(const SplitPair& sp, const OccupationBasis& source, const TensorBasis& tb) {
    require_same_modes(tb, source, "breve_gamma");
    return breve_gamma_orthonormal(to_orthonormal(tb.left().grid(), sp.j0, source.grid()),
                                   to_orthonormal(tb.right().grid(), sp.jinf, source.grid()), source, tb);
}

IdentResult scattering_ident(const TensorBasis& tb, const OccupationBasis& target) {
    require_same_modes(tb, target, "scattering_ident");
    std::vector<Eigen::Triplet<cplx>> trip;
    IdentResult out;
    for (std::size_t i = 0; i < tb.size(); ++i) {
        const auto [l, r] = tb.pair(i);
        const Tuple lt = tb.left().tuple(l), rt = tb.right().tuple(r);
        Tuple merged;
        std::merge(lt.begin(), lt.end(), rt.begin(), rt.end(), std::back_inserter(merged));
        double amp = 1.0;
        for (std::size_t s = 0; s < merged.size();) {
            std::size_t e = s;
            while (e < merged.size() && merged[e] == merged[s]) ++e;
            const auto nl = std::count(lt.begin(), lt.end(), merged[s]);
            // binomial(n_l + n_r, n_l)
            double c = 1.0;
            for (long k = 1; k <= nl; ++k) c = c * double(long(e - s) - nl + k) / double(k);
            amp *= c;
            s = e;
        }
        const std::ptrdiff_t row = target.find(merged);
        if (row < 0) {
            ++out.overflow;
            continue;
        }
        trip.emplace_back(row, std::ptrdiff_t(i), cplx(std::sqrt(amp), 0.0));
    }
    out.op.m = SpMat(std::ptrdiff_t(target.size()), std::ptrdiff_t(tb.size()));
    out.op.m.setFromTriplets(trip.begin(), trip.end());
    return out;
}

SparseOperator dbreve_gamma2(const SplitPair& a, const SplitPair& b, const OccupationBasis& source,
                             const TensorBasis& tb) {
    require_same_modes(tb, source, "dbreve_gamma2");
    const ModeGrid& g = source.grid();
    const CMat at = stack(to_orthonormal(g, a.j0, g), to_orthonormal(g, a.jinf, g));
    const CMat bt = stack(to_orthonormal(g, b.j0, g), to_orthonormal(g, b.jinf, g));
    const auto r = lift_dgamma2(source, at, bt, 2 * source.modes(), split_resolver(tb),
                                std::ptrdiff_t(tb.size()));
    return {r.m, false};
}

namespace {

SparseOperator leg_op(const TensorBasis& tb, const SparseOperator& x, bool left) {
    const std::size_t n = left ? tb.left().size() : tb.right().size();
    if (x.rows() != std::ptrdiff_t(n) || x.cols() != std::ptrdiff_t(n))
        throw std::invalid_argument("tensor leg operator: dimension mismatch");
    const Eigen::SparseMatrix<cplx, Eigen::ColMajor> xc(x.m);
    std::vector<Eigen::Triplet<cplx>> trip;
    for (std::size_t i = 0; i < tb.size(); ++i) {
        const auto [l, r] = tb.pair(i);
        const std::size_t c = left ? l : r;
        for (Eigen::SparseMatrix<cplx, Eigen::ColMajor>::InnerIterator it(xc, std::ptrdiff_t(c)); it; ++it) {
            const std::ptrdiff_t row = left ? tb.find(std::size_t(it.row()), r) : tb.find(l, std::size_t(it.row()));
            if (row >= 0) trip.emplace_back(row, std::ptrdiff_t(i), it.value());
        }
    }
    SpMat m(std::ptrdiff_t(tb.size()), std::ptrdiff_t(tb.size()));
    m.setFromTriplets(trip.begin(), trip.end());
    return {m, x.hermitian};
}

} // namespace

SparseOperator left_op(const TensorBasis& tb, const SparseOperator& x) { return leg_op(tb, x, true); }
SparseOperator right_op(const TensorBasis& tb, const SparseOperator& y) { return leg_op(tb, y, false); }

SparseOperator right_vacuum_projector(const TensorBasis& tb) {
    RVec d(std::ptrdiff_t(tb.size()));
    for (std::size_t i = 0; i < tb.size(); ++i) d(std::ptrdiff_t(i)) = tb.pair(i).second == 0 ? 1.0 : 0.0;
    return diagonal_op(d);
}

} // namespace nelsonlab
