// Truncated bosonic Fock spaces over a discretized mode grid, and the
// elementary second-quantized operators acting on them.
#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace nelsonlab {

using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using Vec3 = std::array<double, 3>;

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double norm3(const Vec3& v);

// Exp-mollified monotone step: 0 for x <= a, 1 for x >= b, smooth in between.
double smooth_step(double x, double a, double b);
double smooth_step_derivative(double x, double a, double b);

// Layout of the grid, used by finite-difference operators.
enum class GridKind { line, radial, unstructured };

struct ModeGrid {
    int dim = 1;
    std::vector<Vec3> points;
    std::vector<double> weights;
    std::vector<double> omega_free;
    std::vector<double> omega_mod;
    double sigma = 0.0;

    GridKind kind = GridKind::unstructured;
    double spacing = 0.0;          // line: node spacing; radial: radial spacing
    std::vector<int> ray;          // radial: direction index per mode
    std::vector<int> radial_index; // radial: shell index per mode
    int n_rays = 0;
    int n_shells = 0;

    std::size_t size() const { return points.size(); }
    double abs_k(std::size_t j) const { return omega_free[j]; }

    // Samples h_j -> orthonormal coordinates sqrt(w_j) h_j.
    CVec to_orthonormal(const CVec& h) const;
    CVec from_orthonormal(const CVec& c) const;
};

// Modified boson dispersion: sqrt(r^2 + sigma^2/4) blended into r over [sigma/2, sigma].
double modified_dispersion(double r, double sigma);
double modified_dispersion_derivative(double r, double sigma);

// Midpoint grid of n_modes nodes on [-kmax, kmax] (n_modes even, so k = 0 is never a node).
ModeGrid line_grid(int n_modes, double kmax, double sigma);
// Line grid with given spacing, nodes at (j + 1/2) * spacing for j = -n/2 .. n/2 - 1.
ModeGrid line_grid_spacing(int n_modes, double spacing, double sigma);
// Radial x angular grid in d = 3: midpoint shells times a symmetric direction set (6 or 14).
ModeGrid radial_grid(int n_shells, double kmax, int n_dirs, double sigma);
// Disjoint union of two grids (modes of a followed by modes of b).
ModeGrid direct_sum(const ModeGrid& a, const ModeGrid& b);

// One-particle operator given on samples, mapped to orthonormal coordinates:
// W_t^{1/2} b W_s^{-1/2}.
CMat to_orthonormal(const ModeGrid& target, const CMat& b, const ModeGrid& source);
CMat from_orthonormal(const ModeGrid& target, const CMat& bt, const ModeGrid& source);

// Sorted list of occupied mode indices with multiplicity, e.g. n = (2,0,1) -> {0,0,2}.
using Tuple = std::vector<std::uint16_t>;

class OccupationBasis {
public:
    OccupationBasis(std::shared_ptr<const ModeGrid> grid, int n_max,
                    std::optional<double> e_cap = std::nullopt);

    const ModeGrid& grid() const { return *grid_; }
    std::shared_ptr<const ModeGrid> grid_ptr() const { return grid_; }
    std::size_t modes() const { return grid_->size(); }
    int n_max() const { return n_max_; }
    std::optional<double> e_cap() const { return e_cap_; }
    std::size_t size() const { return offsets_.size() - 1; }

    Tuple tuple(std::size_t i) const;
    int total(std::size_t i) const { return int(offsets_[i + 1] - offsets_[i]); }
    const std::uint16_t* begin(std::size_t i) const { return modes_.data() + offsets_[i]; }
    const std::uint16_t* end(std::size_t i) const { return modes_.data() + offsets_[i + 1]; }
    std::vector<int> occupation(std::size_t i) const;
    int count(std::size_t i, std::size_t mode) const;
    double energy(std::size_t i) const; // sum of omega_mod over occupied modes

    // Position of a state, or -1 if the state lies outside the truncated basis.
    std::ptrdiff_t find(const Tuple& t) const;
    std::ptrdiff_t find_occupation(const std::vector<int>& n) const;

private:
    std::uint64_t rank(const Tuple& t) const;

    std::shared_ptr<const ModeGrid> grid_;
    int n_max_;
    std::optional<double> e_cap_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint16_t> modes_;
    std::vector<std::uint64_t> ranks_;
    std::vector<std::vector<std::uint64_t>> binom_;
};

using BasisPtr = std::shared_ptr<const OccupationBasis>;

BasisPtr build_basis(std::shared_ptr<const ModeGrid> grid, int n_max,
                     std::optional<double> e_cap = std::nullopt);

struct FockVector {
    BasisPtr basis;
    CVec amps;

    static FockVector vacuum(BasisPtr b);
    double norm() const { return amps.norm(); }
};

struct SparseOperator {
    SpMat m;
    bool hermitian = false;

    std::ptrdiff_t rows() const { return m.rows(); }
    std::ptrdiff_t cols() const { return m.cols(); }
    CVec apply(const CVec& v) const;
    SparseOperator adjoint() const;
    CMat dense() const { return CMat(m); }
};

SparseOperator operator+(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator-(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator*(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator*(cplx s, const SparseOperator& a);
SparseOperator identity_op(std::ptrdiff_t n);
SparseOperator diagonal_op(const RVec& d);
// Exact Hermitian check (entrywise conj symmetry, no tolerance).
bool is_exactly_hermitian(const SpMat& m);

// a*(h) = sum_j sqrt(w_j) h_j a*_j, projected onto the truncated basis.
SparseOperator creation_op(const OccupationBasis& basis, const CVec& h);
// a(h): exact adjoint of creation_op(basis, h).
SparseOperator annihilation_op(const OccupationBasis& basis, const CVec& h);
// phi(h) = (a(h) + a*(h)) / sqrt(2).
SparseOperator field_op(const OccupationBasis& basis, const CVec& h);
SparseOperator number_op(const OccupationBasis& basis);

// dGamma(b) with b on samples (M x M).
SparseOperator dGamma(const OccupationBasis& basis, const CMat& b);
SparseOperator dGamma_diag(const OccupationBasis& basis, const RVec& b);
// Same, with b already in orthonormal coordinates.
SparseOperator dGamma_orthonormal(const OccupationBasis& basis, const CMat& bt);

// Gamma(b) with b on samples (M x M).
SparseOperator Gamma(const OccupationBasis& basis, const CMat& b);
// dGamma(a, b) = sum_j a x ... x b (j-th) x ... x a.
SparseOperator dGamma2(const OccupationBasis& basis, const CMat& a, const CMat& b);

// Resolves a target tuple to a row index, or -1 if it is truncated away.
using TupleResolver = std::function<std::ptrdiff_t(const Tuple&)>;

struct LiftResult {
    SpMat m;
    std::size_t dropped = 0; // target states outside the truncated space
};

// Second quantization between different mode sets; bt, at are in orthonormal
// coordinates with shape (target modes) x (source modes).
LiftResult lift_gamma(const OccupationBasis& src, const CMat& bt, std::size_t target_modes,
                      const TupleResolver& resolve, std::ptrdiff_t target_dim);
LiftResult lift_dgamma2(const OccupationBasis& src, const CMat& at, const CMat& bt,
                        std::size_t target_modes, const TupleResolver& resolve,
                        std::ptrdiff_t target_dim);

// (sum_j w_j (1 + 1/|k_j|) |h_j|^2)^{1/2}.
double weighted_norm_omega(const ModeGrid& grid, const CVec& h);
// sum_j w_j |h_j|^2.
double weighted_norm2(const ModeGrid& grid, const CVec& h);
cplx weighted_inner(const ModeGrid& grid, const CVec& g, const CVec& h);

// Projector onto the states with N <= n.
SparseOperator sector_projector(const OccupationBasis& basis, int n);
// Gamma(chi_i): projector onto states with no occupied mode |k| <= sigma.
SparseOperator interacting_projector(const OccupationBasis& basis, double sigma);

// dGamma(bt) psi without assembling the operator (bt in orthonormal coordinates).
CVec apply_dGamma_orthonormal(const OccupationBasis& basis, const CMat& bt,
                              const Eigen::Ref<const CVec>& psi);

// One-body density rho_ij = <psi, a*_i a_j psi> in orthonormal coordinates, so that
// <psi, dGamma(b) psi> = sum_ij bt_ij rho_ij.
CMat one_body_density(const OccupationBasis& basis, const Eigen::Ref<const CVec>& psi);

} // namespace nelsonlab
