#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "afp/core.hpp"
#include "afp/integrator.hpp"
#include "afp/measures.hpp"
#include "afp/verifier.hpp"

namespace afp {

struct PoincareOptions {
    int m_sub = 256;
    int repeats = 16;
    bool continuation = false;  // evolve one path set across periods instead of
                                // resampling between applications (equal in law)
    SimOptions sim;
};

// one application of the period map on measures: resample n_paths starts from
// mu, run one period, unwind the endpoints by Q^{-1}
EmpiricalMeasure poincare_map(const ModelSpec& model, const EmpiricalMeasure& mu,
                              int n_paths, double dt, std::uint64_t seed,
                              const SimOptions& sim = {});

// trace of repeated applications; gaps[i] = d_{i+1} = dbl(mu_{i+1}, mu_i), so
// iteration count k = i + 1 in every reported field
struct PoincareIteration {
    std::vector<EmpiricalMeasure> measures;  // mu_0 .. mu_last
    std::vector<double> gaps;
    std::vector<double> floors;
    std::vector<double> ratios;  // d_{k+1}/d_k, NaN once d_k is floor noise
    std::optional<int> converged_at;  // first k with d_k <= 1.5 * floor_k
    bool diverged = false;            // five consecutive increases above floor

    bool contracting() const { return converged_at.has_value() && !diverged; }
};

PoincareIteration iterate_fixed_point(const ModelSpec& model, const EmpiricalMeasure& mu0,
                                      int k_max, int n_paths, double dt,
                                      std::uint64_t seed,
                                      const PoincareOptions& opts = {});

// ratio curve a_hat(t) = dbl(law_A(t), law_B(t)) / d(muA, muB); the two
// ensembles share noise streams, which only sharpens the law estimate.
// Rejects initial measures closer than five noise floors apart.
VerificationReport contraction_estimate_distribution(
    const ModelSpec& model, const EmpiricalMeasure& muA, const EmpiricalMeasure& muB,
    const std::vector<double>& t_grid, int n_paths, double dt, std::uint64_t seed,
    const PoincareOptions& opts = {});

// synchronously coupled mean-square ratio a2_hat(t) = msq(t)/msq(0); verdict
// left open, the slope diagnostics live in the notes
VerificationReport contraction_estimate_msq(const ModelSpec& model,
                                            const rng::InitialLaw& initialA,
                                            const rng::InitialLaw& initialB,
                                            const std::vector<double>& t_grid,
                                            int n_paths, double dt, std::uint64_t seed,
                                            const SimOptions& sim = {});

// least-squares slope of log v against t over the window, skipping
// nonpositive entries; NaN with fewer than two usable points
double fit_log_slope(const std::vector<double>& t, const std::vector<double>& v,
                     double t_min, double t_max);

// (1/t) * integral of the model's decay rate over [0, t]
double alpha_running_mean(const ModelSpec& model, double t);

}  // namespace afp
