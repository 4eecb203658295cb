// Randomized verification of the second-quantization identities on small
// truncated Fock spaces.
#pragma once

#include "nelsonlab/split.hpp"

#include <string>
#include <vector>

namespace nelsonlab {

struct AlgebraConfig {
    int modes = 4;
    int n_max = 3;
    int draws = 100;
    std::uint64_t seed = 20240601;
    double tol = 1e-12;
    // Name of an identity whose left-hand operator is perturbed (test fixture).
    std::string inject_fault;
};

struct IdentityCheck {
    std::string name;
    double max_error = 0.0;  // worst residual (or inequality violation) over all draws
    double tol = 0.0;
    bool guarded = false;    // restricted to N <= n_max - 1
    bool vacuous = false;    // guarded sector empty
    bool passed = true;
};

struct AlgebraReport {
    AlgebraConfig config;
    std::vector<IdentityCheck> checks;
    double seconds = 0.0;

    bool passed() const;
    std::vector<std::string> failures() const;
};

// Random grid with distinct nonzero 1D nodes and non-uniform weights.
ModeGrid random_grid(int modes, std::uint64_t seed);

AlgebraReport run_algebra_suite(const AlgebraConfig& cfg);

} // namespace nelsonlab
