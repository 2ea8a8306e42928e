#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "afp/core.hpp"

namespace afp {

struct EmpiricalMeasure {
    Matrix support;  // n x l
    Vector weights;  // nonnegative, sums to 1 within 1e-12

    EmpiricalMeasure(Matrix support_, Vector weights_);
    static EmpiricalMeasure uniform(Matrix support_);

    int size() const { return int(support.rows()); }
    int dim() const { return int(support.cols()); }
};

// Bounded-Lipschitz distance (max convention: ||h||_inf <= 1 and Lip(h) <= 1
// separately) between finite-support measures.  Computed exactly; the LP over
// h values on the merged support collapses to optimal transport under the
// truncated ground metric min(|x-y|, 2), since the objective is shift
// invariant and any 1-Lipschitz h on a set of truncated diameter <= 2 can be
// centered into [-1, 1].
double dbl_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                 int n_max = 256);

struct DblEstimate {
    double estimate = 0.0;     // mean of per-repeat subsampled distances
    double noise_floor = 0.0;  // p95 of mu-vs-mu split distances
    bool floor_with_replacement = false;
    Vector repeat_values;
    Vector floor_values;
};

// Subsampled estimate with a self-distance noise floor: the floor is what an
// identical pair of laws would still show at this subsample size.
DblEstimate dbl_estimate(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                         int m_sub = 256, int repeats = 16,
                         std::uint64_t seed = 0);

struct MsqResult {
    double value = 0.0;
    double std_error = 0.0;
};

// Mean-square gap E|X^A(t) - X^B(t)|^2 under synchronous coupling; the
// ensembles must ride the same noise streams for path-by-path pairing to
// make sense.
MsqResult msq_distance(const Ensemble& a, const Ensemble& b, double t);

double wasserstein1_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

EmpiricalMeasure pushforward(const EmpiricalMeasure& mu, const Matrix& Q);
EmpiricalMeasure mixture(
    const std::vector<std::pair<double, EmpiricalMeasure>>& parts);

}  // namespace afp
