// Ground states of fiber Hamiltonians and the associated spectral bounds.
#pragma once

#include "nelsonlab/model.hpp"

#include <map>
#include <mutex>
#include <string>

namespace nelsonlab {

struct EigenOptions {
    int count = 1;
    double tol = 1e-10;             // residual ||H v - l v|| <= tol * max(1, |l|)
    int subspace = 60;              // Krylov basis size before a restart
    int max_restarts = 400;
    std::size_t dense_below = 300;  // dense solver up to this dimension
    std::uint64_t seed = 7;
};

struct SpectralResult {
    RVec values;       // ascending
    CMat vectors;      // columns, phase fixed so that <Omega, v> >= 0
    RVec residuals;
    double gap = 0.0;  // values(1) - values(0), or 0 when only one value was computed
    bool simple = true;
    std::string method;
    int iterations = 0;
    double tol = 0.0;
    bool converged = true;
};

// Lowest eigenpairs: dense below opt.dense_below, Lanczos with full
// reorthogonalization and Krylov-Schur style restarts above.
// Throws ConvergenceError if the restart budget is exhausted.
SpectralResult ground_state(const SparseOperator& H, const EigenOptions& opt);
SpectralResult ground_state(const SparseOperator& H, const EigenOptions& opt, const CVec& start);
// Full dense decomposition (all eigenpairs, ascending).
SpectralResult dense_spectrum(const CMat& H);

// Multiply v by a unit phase so that v(0) is real and >= 0 (falls back to the
// largest component when v(0) vanishes).
void fix_phase(Eigen::Ref<CVec> v);

// Probability of finding any mode with |k| <= sigma occupied.
double soft_boson_occupancy(const OccupationBasis& basis, const CVec& psi, double sigma);

// Rayleigh-Schroedinger second order:
// Omega(P) - (g^2/2) sum_j w_j kappa_sigma(k_j)^2 / (Omega(P - k_j) + omega_j - Omega(P)).
double second_order_energy(const ModelSpec& ms, const Vec3& P);

// Fiber ground states with a cache keyed by P.
class FiberSolver {
public:
    FiberSolver(ModelSpec ms, BasisPtr basis, EigenOptions opt);

    const ModelSpec& model() const { return ms_; }
    const OccupationBasis& basis() const { return *basis_; }
    SpectralResult solve(const Vec3& P);
    double energy(const Vec3& P) { return solve(P).values(0); }

private:
    ModelSpec ms_;
    BasisPtr basis_;
    EigenOptions opt_;
    std::mutex mu_;
    std::map<Vec3, SpectralResult> cache_;
};

struct DispersionPoint {
    Vec3 P{};
    double e_g = 0.0;
    double e_0 = 0.0;
    double omega = 0.0;          // Omega(P)
    double upper_margin = 0.0;   // Omega(P) - E_g(P)
    double lower_margin = 0.0;   // min over alpha of E_g(P) - [(1 - alpha) E_0 - g^2 C / alpha]
    double gap = 0.0;
    bool simple = true;
    double soft = 0.0;
    double vacuum_weight = 0.0;  // |<Omega, psi_P>|^2
    double residual = 0.0;
    double e_other = 0.0;        // ground energy with the other boson dispersion (|k| vs omega)
    bool converged = true;
};

struct DispersionCurve {
    std::vector<DispersionPoint> points;
    double beta = 0.0;
    double o_beta = 0.0;
    double g_beta = 0.0;
    double c_constant = 0.0;
};

DispersionCurve dispersion_scan(const ModelSpec& ms, const std::vector<Vec3>& Ps, BasisPtr basis,
                                const EigenOptions& opt, double beta);

// min over grid k with |k| >= eps of E(P - k) + |k| - E(P).
double lipschitz_gap(FiberSolver& solver, const Vec3& P, double eps);
// min over grid k of E_mod(P - k) + omega(k) - E_mod(P) (solver must use omega).
double delta_gap(FiberSolver& solver, const Vec3& P);

struct GradBoundReport {
    double bound = 0.0;     // closed form for the built-in dispersions
    double measured = 0.0;  // || |grad Omega(P - P_f)| E_Sigma ||
    std::size_t states = 0; // eigenvalues <= Sigma
    double margin() const { return bound - measured; }
};

GradBoundReport grad_bound_check(const ModelSpec& ms, const Vec3& P, double Sigma, const OccupationBasis& basis);
// Closed-form bound for the built-in dispersions at energy Sigma + g^2 C.
double grad_bound_formula(const Dispersion& disp, double energy);

struct NumberEnergyReport {
    double resolvent_norm = 0.0; // ||(N + 1)(H + i)^{-1}||
    double a = 0.0;              // slope used in N <= a H + b
    double b = 0.0;              // smallest admissible offset
};

// Dense check of the number-energy bounds for the modified fiber Hamiltonian.
NumberEnergyReport number_energy_report(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis,
                                        double margin = 0.01);

} // namespace nelsonlab
