#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "afp/core.hpp"
#include "afp/integrator.hpp"
#include "afp/measures.hpp"

namespace afp {

// Every pass flag must be recomputable from what is stored here.
struct VerificationReport {
    std::string criterion;
    std::string model;
    std::uint64_t seed = 0;
    int n_paths = 0;
    double dt = 0.0;  // integration step of the underlying ensemble

    std::vector<double> index;             // period count n or section time t
    std::vector<double> statistics;        // s_n, D_N, M_N, or R(t)
    std::vector<double> partial_averages;  // running means where the criterion uses them
    std::vector<double> floors;            // per-statistic noise floors (empty if exact)

    double threshold = 0.0;     // number the deciding statistic was compared against
    double floor_factor = 0.0;  // when threshold = factor * mean floor
    std::optional<bool> pass;   // empty = informational only
    std::vector<std::string> notes;
};

// E|Q^{-n} X(nT)|^2 per period; bounded iff it stays under `bound` and the
// last third of log s_n has least-squares slope <= 0.05.
VerificationReport h3_boundedness(const Ensemble& ens, const AffineStructure& aff,
                                  int n_periods, double bound = 50.0);

// smallest n whose one-period relative change drops under 2%; 0 when the
// sequence never settles (reported through *plateau_found)
int select_burn_in(const std::vector<double>& s, bool* plateau_found = nullptr);

// averaged one-period law drift: D_N = d_BL(law Q^{-(N+1)}X((N+1)T),
// law Q^{-N}X(NT)), pass when the final partial average sinks to the floor
VerificationReport h4_average(const Ensemble& ens, const AffineStructure& aff,
                              int n_periods, int m_sub = 256, int repeats = 16,
                              std::uint64_t seed = 0, double floor_factor = 1.5);

// pathwise mean-square version; without an epsilon the verdict stays open
// (the hypothesis is strictly stronger than the averaged one)
VerificationReport h4prime_average(const Ensemble& ens, const AffineStructure& aff,
                                   int n_periods,
                                   std::optional<double> epsilon = std::nullopt);

// law of Q^{-1} X(burn + t + T) against law of X(burn + t) across one period
VerificationReport periodicity_residual(const Ensemble& ens, const AffineStructure& aff,
                                        const std::vector<double>& t_grid, int burn_in,
                                        int m_sub = 256, int repeats = 16,
                                        std::uint64_t seed = 0,
                                        double floor_factor = 1.5);

// distributional restart identity: running k periods then t more, unwound by
// Q^{-k}, must agree in law with a fresh t-run started from the unwound
// period-k states (resampled, independent noise)
VerificationReport restart_identity_check(const ModelSpec& model,
                                          const rng::InitialLaw& initial, int k,
                                          double t, int n_paths, double dt,
                                          std::uint64_t seed, int m_sub = 256,
                                          int repeats = 16, double floor_factor = 1.5,
                                          const SimOptions& sim = {});

// uniform mixture of the unwound period laws Q^{-N} X(NT), N = 0..k
EmpiricalMeasure halanay_mixture(const Ensemble& ens, const AffineStructure& aff, int k);

}  // namespace afp
