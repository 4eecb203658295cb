// Seeded random vectors and matrices used by the randomized checks.
#pragma once

#include "nelsonlab/fock.hpp"

#include <random>

namespace nelsonlab {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(eng_);
    }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    cplx cnormal() {
        const double re = normal();
        return {re, normal()};
    }

    CVec cvec(std::ptrdiff_t n) {
        CVec v(n);
        for (auto& x : v) x = cnormal();
        return v;
    }
    CMat cmat(std::ptrdiff_t r, std::ptrdiff_t c) {
        CMat m(r, c);
        for (std::ptrdiff_t j = 0; j < c; ++j)
            for (std::ptrdiff_t i = 0; i < r; ++i) m(i, j) = cnormal();
        return m;
    }
    CMat hermitian(std::ptrdiff_t n) {
        CMat a = cmat(n, n);
        CMat h = 0.5 * (a + a.adjoint());
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            h(i, i) = h(i, i).real();
            for (std::ptrdiff_t j = i + 1; j < n; ++j) h(j, i) = std::conj(h(i, j));
        }
        return h;
    }
    // r x c matrix with orthonormal columns (r >= c).
    CMat isometry(std::ptrdiff_t r, std::ptrdiff_t c) {
        Eigen::HouseholderQR<CMat> qr(cmat(r, c));
        return qr.householderQ() * CMat::Identity(r, c);
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

} // namespace nelsonlab
