// Conjugate operator A = dGamma(a), the commutator [iH, A], the virial check
// and random sampling of the positive-commutator bound.
#pragma once

#include "nelsonlab/spectral.hpp"

namespace nelsonlab {

struct ConjugateOp {
    // All matrices in orthonormal mode coordinates; y and a are exactly Hermitian.
    // Line grids: y = i d/dk. Radial grids: y = i d/dr along each ray (acting on r h),
    // so that a is the radial part of (k/|k| . y + y . k/|k|) / 2.
    CMat y;
    CMat a;
    RVec speed;                // G_j: d omega/dk (line) or omega'(|k|) (radial)
    std::vector<Vec3> grad;    // grad omega(k_j)
    double mesh = 0.0;
    bool modified = false;
};

// Symmetrized central-difference position matrix (orthonormal coordinates).
CMat build_position_op(const ModeGrid& grid);
ConjugateOp build_conjugate(const ModeGrid& grid, bool modified);

SparseOperator conjugate_A(const OccupationBasis& basis, const ConjugateOp& conj);

// dGamma(|grad omega|^2) - grad Omega(P - P_f) . dGamma(grad omega) - g phi(i a kappa_sigma).
SparseOperator commutator_iHA(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis,
                              const ConjugateOp& conj);
// Only the interaction term -g phi(i a kappa_sigma).
SparseOperator commutator_field_term(const ModelSpec& ms, const OccupationBasis& basis, const ConjugateOp& conj);
// i (H A - A H).
SparseOperator matrix_commutator(const SparseOperator& H, const SparseOperator& A);

struct VirialReport {
    double energy = 0.0;
    double residual = 0.0;        // |<psi, [iH, A] psi>| / ||psi||^2 from the explicit formula
    double matrix_residual = 0.0; // same with i(HA - AH), bounded by 2 ||(H - E) psi|| ||A psi||
    double eigen_residual = 0.0;  // ||(H - E) psi||
    double a_norm = 0.0;          // ||A psi||
    double soft = 0.0;            // soft-boson probability of psi
    double mesh = 0.0;
    double scale = 0.0;           // (1 + max |grad Omega|) <psi, dGamma(y^2) psi>
    double budget() const { return eigen_residual + mesh * mesh * scale; }
};

VirialReport virial_check(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis, const ConjugateOp& conj,
                          const EigenOptions& opt);
// Same for a given (not necessarily eigen-) vector; energy is its Rayleigh quotient.
VirialReport virial_of(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis, const ConjugateOp& conj,
                       const CVec& psi);

struct MourreSample {
    double r = 0.0;       // <phi, [iH,A] phi> - (1 - beta) <phi, N phi>
    double field = 0.0;   // |g <phi, phi(i a kappa_sigma) phi>|
    double number = 0.0;  // <phi, N phi>
};

struct MourreReport {
    double g = 0.0;
    double Sigma = 0.0;
    double beta = 0.0;
    std::size_t sub_dim = 0;      // dimension of Ran Gamma(chi_i) in the basis
    std::size_t window_dim = 0;   // eigenvalues <= Sigma on the sub-basis
    std::size_t below_threshold = 0; // eigenvalues below the one-boson threshold
    double threshold = 0.0;       // min over interacting k of E(P - k) + omega(k)
    double grad_norm = 0.0;       // || |grad Omega| E_Sigma ||
    double min_r = 0.0;
    double deficit = 0.0;         // || g P phi(i a kappa_sigma) P || with P the excited window projector
    double sample_deficit = 0.0;  // max over samples of |g <phi(i a kappa_sigma)>| / ||phi||^2
    std::vector<MourreSample> samples;
};

// Samples phi in Ran E_Sigma(H) restricted to Ran Gamma(chi_i), orthogonal to the ground state.
// Throws ConfigError if the window holds no excited state.
MourreReport mourre_scan(const ModelSpec& ms, const Vec3& P, double Sigma, double beta, const OccupationBasis& basis,
                         const ConjugateOp& conj, int n_samples, std::uint64_t seed);

struct MourreFit {
    double slope = 0.0;     // d log(deficit) / d log|g|
    double C = 0.0;         // deficit ~ C |g|
};

MourreFit fit_deficit(const std::vector<MourreReport>& sweep);

} // namespace nelsonlab
