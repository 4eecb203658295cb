// Fock space of a direct sum: the isomorphism U, the splitting Gamma-breve(j)
// and the identification I that fuses the two tensor factors again.
#pragma once

#include "nelsonlab/fock.hpp"

#include <unordered_map>

namespace nelsonlab {

// Basis of F(h) x F(h) spanned by product states |l> x |r> with
// N(l) <= left cap, N(r) <= right cap and N(l) + N(r) <= joint cap.
class TensorBasis {
public:
    TensorBasis(BasisPtr left, BasisPtr right, int joint_cap);

    const OccupationBasis& left() const { return *left_; }
    const OccupationBasis& right() const { return *right_; }
    BasisPtr left_ptr() const { return left_; }
    BasisPtr right_ptr() const { return right_; }
    int joint_cap() const { return joint_cap_; }
    std::size_t size() const { return pairs_.size(); }
    std::pair<std::size_t, std::size_t> pair(std::size_t i) const { return pairs_[i]; }
    std::ptrdiff_t find(std::size_t l, std::size_t r) const;

private:
    BasisPtr left_, right_;
    int joint_cap_;
    std::vector<std::pair<std::size_t, std::size_t>> pairs_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

using TensorBasisPtr = std::shared_ptr<const TensorBasis>;

// j : h -> h (+) h, h |-> (j0 h, jinf h); operators given on samples.
struct SplitPair {
    CMat j0;
    CMat jinf;
    bool isometric = false;      // j0* j0 + jinf* jinf = 1
    bool partition = false;      // j0 + jinf = 1

    // Stacked 2M x M matrix (j0; jinf).
    CMat stacked() const;
    // Records which of the two properties hold, within tol.
    void classify(const ModeGrid& grid, double tol = 1e-12);
};

// U : F(h (+) h) -> F(h) x F(h), basis_sum built over direct_sum(grid, grid).
SparseOperator tensor_iso_U(const OccupationBasis& basis_sum, const TensorBasis& tb);

// Gamma-breve(j) = U Gamma(j) : F -> F x F.
SparseOperator breve_gamma(const SplitPair& sp, const OccupationBasis& source, const TensorBasis& tb);
SparseOperator breve_gamma_orthonormal(const CMat& j0t, const CMat& jinft,
                                       const OccupationBasis& source, const TensorBasis& tb);

struct IdentResult {
    SparseOperator op;
    std::size_t overflow = 0; // tensor states whose image left the target basis
};

// I = Gamma(iota) U*, iota(h0, hinf) = h0 + hinf.
IdentResult scattering_ident(const TensorBasis& tb, const OccupationBasis& target);

// dGamma-breve(a, b) = U dGamma(a, b) with a = (a0; ainf) and b = (b0; binf).
SparseOperator dbreve_gamma2(const SplitPair& a, const SplitPair& b, const OccupationBasis& source,
                             const TensorBasis& tb);

// X x 1 and 1 x Y on the tensor basis (projected onto admissible pairs).
SparseOperator left_op(const TensorBasis& tb, const SparseOperator& x);
SparseOperator right_op(const TensorBasis& tb, const SparseOperator& y);

// Projector 1 x P_Omega onto right-vacuum pairs.
SparseOperator right_vacuum_projector(const TensorBasis& tb);

} // namespace nelsonlab
