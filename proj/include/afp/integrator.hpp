#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "afp/core.hpp"
#include "afp/measures.hpp"
#include "afp/rng.hpp"

namespace afp {

enum class Scheme { euler, tamed };

struct SimOptions {
    Scheme scheme = Scheme::euler;
    // store every stride-th node; integration still walks grid.dt
    int record_stride = 1;
    int n_workers = 1;
    double blowup_threshold = 1e6;
    double max_flagged_fraction = 1e-3;
};

// Strong Euler-Maruyama (optionally with tamed drift) over grid.dt steps.
// Path p is a function of (base_seed, p) alone: increments are indexed by
// absolute step, so worker count never changes the output and a run split at
// any grid node continues bit-identically.
Ensemble euler_maruyama(const ModelSpec& model, const rng::InitialLaw& initial,
                        const TimeGrid& grid, int n_paths, std::uint64_t base_seed,
                        const SimOptions& opts = {});

// same stepping from explicit per-path start states (row p starts path p)
Ensemble euler_maruyama_from_states(const ModelSpec& model, const Matrix& initial_states,
                                    const TimeGrid& grid, std::uint64_t base_seed,
                                    const SimOptions& opts = {});

// full control over the noise: dw(path, global_step, j) returns the already
// scaled increment of Brownian coordinate j.  For coupling and refinement
// studies.
using IncrementFn = std::function<double(int, std::uint64_t, int)>;
Ensemble euler_maruyama_with_increments(const ModelSpec& model,
                                        const Matrix& initial_states,
                                        const TimeGrid& grid, std::uint64_t base_seed,
                                        const IncrementFn& dw,
                                        const SimOptions& opts = {});

struct MomentCurve {
    std::vector<double> times;
    Vector mean_sq;   // E|X(t)|^2 per recorded node
    Vector std_err;
    double max_value = 0.0;  // sup over the grid
};

MomentCurve moment_curve(const Ensemble& ens);

// uniform empirical measures of the states at the requested times (snapped to
// recorded nodes)
std::vector<EmpiricalMeasure> sectioned_states(const Ensemble& ens,
                                               const std::vector<double>& times);

}  // namespace afp
