// Krylov time evolution and the propagation / asymptotic-observable probes.
#pragma once

#include "nelsonlab/model.hpp"
#include "nelsonlab/split.hpp"

#include <functional>
#include <string>
#include <vector>

namespace nelsonlab {

struct KrylovOptions {
    int max_dim = 30;    // Krylov dimension per step
    double tol = 1e-12;  // a posteriori error per step, relative to ||psi||
    double max_step = 0.0; // optional cap on the step size (0: none)
};

struct KrylovStats {
    long steps = 0;
    long matvecs = 0;
    long rejected = 0;
};

// psi <- exp(-i H t) psi by short-iteration Lanczos with adaptive steps.
class KrylovPropagator {
public:
    KrylovPropagator(SparseOperator H, KrylovOptions opt = {});

    const SparseOperator& hamiltonian() const { return H_; }
    const KrylovStats& stats() const { return stats_; }
    // Negative t propagates backwards.
    void advance(CVec& psi, double t);

private:
    // One Lanczos step of length dt; returns false if the error estimate is too large.
    bool try_step(const CVec& psi, double dt, CVec& out, double& suggested);

    SparseOperator H_;
    KrylovOptions opt_;
    KrylovStats stats_;
    double dt_guess_ = 0.0;
    double scale_ = 0.0;
};

// f(H) v for real f: dense spectral decomposition up to dense_below, Chebyshev
// expansion on the Gershgorin interval above (f must be smooth there).
CVec apply_function(const SparseOperator& H, const CVec& v, const std::function<double(double)>& f,
                    std::size_t dense_below = 2000, double tol = 1e-10);

// t0, t0 r, t0 r^2, ... up to and including t1.
std::vector<double> geometric_times(double t0, double t1, double ratio);

// Smooth cutoffs with beta < beta0 < beta1 < beta2 < beta3 < gamma.
struct CutoffSet {
    double beta = 0.2;
    double beta0 = 0.25;
    double beta1 = 0.3;
    double beta2 = 0.35;
    double beta3 = 0.4;
    double gamma = 0.5;

    void validate() const;
    double F(double s) const { return smooth_step(s, beta0, beta1); }          // 0 below beta0
    double j0(double s) const { return 1.0 - smooth_step(s, beta2, beta3); }   // 0 above beta3
    double jinf(double s) const;                                              // sqrt(1 - j0^2)
    double chi(double s) const { return smooth_step(s, beta3, gamma); }       // 0 below beta3
};

// Smooth energy window: 1 on [lo, hi], 0 outside [lo - width, hi + width].
struct EnergyWindow {
    double lo = -1e300;
    double hi = 1e300;
    double width = 0.0;
    double operator()(double e) const;
    bool trivial() const { return lo <= -1e299 && hi >= 1e299; }
};

// Functions of the boson position operator y = U diag(eta) U^* (orthonormal coordinates).
class PositionCalculus {
public:
    explicit PositionCalculus(const CMat& y);
    const RVec& spectrum() const { return eta_; }
    CMat apply(const std::function<double(double)>& f) const; // U diag(f(eta)) U^*

private:
    CMat U_;
    RVec eta_;
};

struct TrackRow {
    double t = 0.0;
    double value = 0.0;
    double running = 0.0;     // running time integral where meaningful
    double norm_drift = 0.0;  // | ||psi_t|| - ||psi_0|| |
    double energy_drift = 0.0;
    double momentum_drift = 0.0; // max drift of <P> and <P^2> (full model only)
};

struct Track {
    std::string observable;
    std::vector<TrackRow> rows;
    KrylovStats stats;

    double final_value() const { return rows.empty() ? 0.0 : rows.back().value; }
    // value at t_{n+1} <= value at t_n + slack over the second half of the rows
    bool tail_decreasing(double slack) const;
};

// Evolves psi0 over the time list, recording observe(t, psi_t). When a (diagonal)
// momentum operator is given, drifts of <P> and <P^2> are recorded too.
Track evolve_track(const SparseOperator& H, const CVec& psi0, const std::vector<double>& times,
                   const std::function<double(double, const CVec&)>& observe, const KrylovOptions& opt,
                   const std::string& name, const SparseOperator* momentum = nullptr);

// --- lattice (full model) helpers; product index e * D_b + b

// Electron position probability per site, x_s = a (s - L/2).
RVec electron_position_density(const LatticeModel& lm, const CVec& psi);

struct DressedPacket {
    CVec psi;
    double max_energy = 0.0;  // max E_g(P) over the support
    double min_energy = 0.0;
    int momenta = 0;          // number of fibers used
};

// sum_P f(P) psi_P with a compact bump f of the given half-width around P0.
DressedPacket dressed_packet(const ModelSpec& ms, const LatticeModel& lm, double P0, double half_width);

Track electron_velocity_probe(const ModelSpec& ms, const LatticeModel& lm, const CVec& psi0,
                              const std::vector<double>& times, const CutoffSet& cut, const KrylovOptions& opt);

// pe1 integrand <dGamma(chi_[lam, lam'](|y|/t)) F(|x|/t)>, with its running integral
// int dt/t. The window is smoothed over 10% of its width. With n_el = 1 (fiber)
// the electron factor is omitted.
Track photon_velocity_probe(const SparseOperator& H, const OccupationBasis& bosons, int n_el, double a,
                            const CMat& y, const CVec& psi0, const std::vector<double>& times, double lam,
                            double lam2, const CutoffSet* electron_cut, const KrylovOptions& opt);

// pe3 monitor <dGamma(|J (grad omega - y/t) + h.c.|) F(|x|/t)> (d = 1, J scalar).
Track phase_space_probe(const SparseOperator& H, const OccupationBasis& bosons, int n_el, double a,
                        const CMat& y, const RVec& speed, double J, const CVec& psi0,
                        const std::vector<double>& times, const CutoffSet* electron_cut, const KrylovOptions& opt);

struct FieldProbe {
    Track cauchy; // d(t_n, t_{n+1}) at t_n
    Track vacuum; // ||(1 x a(h_t)) psi_t||
};

// e^{iHt} a*(h_t) e^{-iHt} phi with h_t = e^{-i omega t} h, acting on the boson leg.
FieldProbe asymptotic_field_probe(const SparseOperator& H, const OccupationBasis& bosons, int n_el,
                                  const RVec& omega, const CVec& h, const CVec& phi,
                                  const std::vector<double>& times, const KrylovOptions& opt);

// w(t) = <f psi_t, dGamma(chi(|y|/t)) f psi_t> on a boson Fock space (fiber).
Track W_estimate(const SparseOperator& H, const OccupationBasis& basis, const CMat& y, const EnergyWindow& f,
                 const CutoffSet& cut, const CVec& psi0, const std::vector<double>& times, const KrylovOptions& opt);

struct WPlusProbe {
    Track total;       // || f~ Gamma-breve(j_t) dGamma(chi_t) f psi_t ||
    Track outer_vacuum; // || (1 x P_Omega) ... ||
};

// H~ = Omega(P - P_f x 1 - 1 x P_f) + dGamma(omega) x 1 + 1 x dGamma(omega) + g phi(kappa_sigma) x 1.
SparseOperator extended_fiber_H(const ModelSpec& ms, const Vec3& P, const TensorBasis& tb);

WPlusProbe W_plus_probe(const ModelSpec& ms, const Vec3& P, const OccupationBasis& basis, const TensorBasis& tb,
                        const CMat& y, const EnergyWindow& f, const EnergyWindow& f_ext, const CutoffSet& cut,
                        const CVec& psi0, const std::vector<double>& times, const KrylovOptions& opt,
                        bool route_all_inside = false);

} // namespace nelsonlab
