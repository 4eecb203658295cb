// Electron dispersions, form factors and the fiber / lattice Hamiltonians.
#pragma once

#include "nelsonlab/fock.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace nelsonlab {

enum class DispersionKind { nonrel, rel, tabulated };

struct TabulatedSpline;

// Radial electron dispersion Omega(p) = Omega(|p|).
class Dispersion {
public:
    static Dispersion nonrelativistic(double mass);
    static Dispersion relativistic(double mass);
    // Samples Omega(p_i) at p_i = i * dp, i = 0..n-1, interpolated by a cubic B-spline.
    static Dispersion tabulated(std::vector<double> values, double dp);

    DispersionKind kind() const { return kind_; }
    double mass() const { return mass_; }

    double value(double p) const;             // Omega at |p| = p
    double value(const Vec3& p) const { return value(norm3(p)); }
    double radial_derivative(double p) const; // dOmega/d|p| at |p| = p >= 0
    Vec3 gradient(const Vec3& p) const;
    double infimum() const;
    // B = sup of the Hessian norm.
    double hessian_bound() const;
    // Largest O such that Omega(p) <= O forces |grad Omega(p)| <= beta (+inf if unrestricted).
    double o_beta(double beta) const;
    // Momentum range where the dispersion is defined (infinite for the built-ins).
    double p_max() const;

private:
    DispersionKind kind_ = DispersionKind::nonrel;
    double mass_ = 1.0;
    std::vector<double> table_;
    double dp_ = 0.0;
    std::shared_ptr<const TabulatedSpline> spline_;
};

// kappa(k) = kappa0 exp(-1 / (1 - (|k|/Lambda)^2)) for |k| < Lambda, else 0,
// kappa_sigma(k) = kappa(k) chi(|k| / sigma) with chi switching on over [1, 2].
struct FormFactor {
    double kappa0 = 1.0;
    double lambda = 1.0;
    double sigma = 0.1;

    double kappa(double k) const;
    double chi(double s) const { return smooth_step(s, 1.0, 2.0); }
    double kappa_sigma(double k) const { return kappa(k) * chi(k / sigma); }
};

struct ModelSpec {
    Dispersion disp = Dispersion::nonrelativistic(1.0);
    FormFactor ff;
    std::shared_ptr<const ModeGrid> grid;
    double g = 0.0;
    bool use_modified = false;
    // Reciprocal-lattice period 2 pi / a when the electron lives on a lattice.
    std::optional<double> brillouin;

    void validate() const;
    // kappa_sigma on the mode samples.
    CVec coupling() const;
    // omega_mod or |k| per mode.
    RVec boson_energy() const;
    // C = sum_j w_j kappa(k_j)^2 / |k_j| (uses kappa, not kappa_sigma).
    double c_constant() const;
    // Electron momentum folded into the first Brillouin zone (identity off-lattice).
    Vec3 fold(const Vec3& p) const;
};

// min(1, (1 - beta)^{3/2} / (3 (B C)^{1/2}), (1 - beta)^2 / (3 B (C + O_beta))).
double g_beta_formula(double B, double C, double beta, double o_beta);
double g_beta(const ModelSpec& ms, double beta);

// Total boson momentum sum_j n_j k_j of a basis state.
Vec3 boson_momentum(const OccupationBasis& basis, std::size_t i);

// Diagonal of the free fiber operator Omega(P - P_f) + dGamma(omega).
RVec fiber_diagonal(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis);
// Omega(P - P_f) alone.
RVec fiber_electron_energy(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis);
SparseOperator build_fiber_H(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis);
// E_0(P): minimum of the free fiber diagonal.
double free_ground_energy(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis);

// Electron on L sites with spacing a, bosons on the dual lattice.
struct LatticeModel {
    int L = 0;
    double a = 1.0;
    BasisPtr bosons;
    std::vector<int> mode_q; // integer lattice momentum of each mode

    std::size_t dim() const { return std::size_t(L) * bosons->size(); }
    std::size_t index(int e, std::size_t b) const { return std::size_t(e) * bosons->size() + b; }
    int electron_m(int e) const { return e - L / 2; }
    double electron_p(int e) const;
    int wrap(int m) const; // into [-L/2, L/2)
    double dk() const;     // 2 pi / (L a)
    // Total crystal momentum class in [-L/2, L/2) of a product state.
    int total_class(std::size_t idx) const;
};

LatticeModel make_lattice_model(const ModelSpec& ms, int L, double a, BasisPtr bosons);
SparseOperator build_full_H(const ModelSpec& ms, const LatticeModel& lm);
// Crystal momentum (total momentum folded by 2 pi / a), diagonal.
SparseOperator total_momentum_op(const LatticeModel& lm);
// Product-basis indices (ascending) whose total crystal momentum class equals c.
// Each boson state appears exactly once, so idx % bosons->size() is the fiber state.
std::vector<std::size_t> momentum_block(const LatticeModel& lm, int c);

struct DecayRow {
    double R;
    double tail;
};

struct DecayReport {
    std::vector<DecayRow> rows;
    double norm = 0.0;     // ||kappa_sigma||
    double exponent = 0.0; // fitted decay exponent of the tail over the R range
};

// Position-space tail mass ||chi(|y| >= R) kappa_sigma-check|| on d = 1.
DecayReport interaction_decay_report(const FormFactor& ff, const std::vector<double>& radii);

// Largest violation of omega(k1 + k2) <= omega(k1) + omega(k2) over grid pairs.
double subadditivity_violation(const ModeGrid& grid);

} // namespace nelsonlab
