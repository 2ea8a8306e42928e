#include "afp/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "afp/rng.hpp"

namespace afp {

namespace {

int period_node(const Ensemble& ens, double t) { return ens.node_at(t); }

EmpiricalMeasure unwound_section(const Ensemble& ens, const AffineStructure& aff,
                                 int power, double t) {
    Matrix sec = ens.section(period_node(ens, t));
    if (power == 0) return EmpiricalMeasure::uniform(sec);
    return pushforward(EmpiricalMeasure::uniform(sec), aff.power(power));
}

// least-squares slope of log s over the last third of the sequence
double tail_log_slope(const std::vector<double>& s) {
    const int count = static_cast<int>(s.size());
    int start = (2 * count) / 3;
    if (count - start < 2) start = count - 2;
    double smax = 0.0;
    for (double v : s) smax = std::max(smax, v);
    if (smax <= 0.0) return 0.0;
    const double clamp = smax * 1e-15;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (int i = start; i < count; ++i) {
        const double x = static_cast<double>(i);
        const double y = std::log(std::max(s[static_cast<size_t>(i)], clamp));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    const double denom = n * sxx - sx * sx;
    return (n * sxy - sx * sy) / denom;
}

std::string fmt(const char* label, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s=%.6g", label, v);
    return buf;
}

void stamp_provenance(VerificationReport& r, const Ensemble& ens) {
    r.model = ens.model_name();
    r.seed = ens.base_seed();
    r.n_paths = ens.n_paths();
    r.dt = ens.sim_dt();
}

}  // namespace

VerificationReport h3_boundedness(const Ensemble& ens, const AffineStructure& aff,
                                  int n_periods, double bound) {
    if (n_periods < 1) throw std::invalid_argument("h3_boundedness: n_periods must be >= 1");
    if (!(bound > 0)) throw std::invalid_argument("h3_boundedness: bound must be positive");
    const double T = aff.period();

    VerificationReport r;
    r.criterion = "h3_boundedness";
    stamp_provenance(r, ens);
    r.threshold = bound;

    double running_max = 0.0;
    for (int n = 0; n <= n_periods; ++n) {
        Matrix sec = ens.section(period_node(ens, n * T));
        if (n != 0) sec = sec * aff.power(-n).transpose();
        const double sn = sec.rowwise().squaredNorm().mean();
        r.index.push_back(static_cast<double>(n));
        r.statistics.push_back(sn);
        running_max = std::max(running_max, sn);
    }
    const double slope = tail_log_slope(r.statistics);
    const double slope_limit = 0.05;
    r.pass = running_max <= bound && slope <= slope_limit;
    r.notes.push_back(fmt("max_stat", running_max));
    r.notes.push_back(fmt("tail_log_slope", slope));
    r.notes.push_back(fmt("slope_limit", slope_limit));
    return r;
}

int select_burn_in(const std::vector<double>& s, bool* plateau_found) {
    for (size_t n = 0; n + 1 < s.size(); ++n) {
        const double denom = std::max(std::abs(s[n]), 1e-12);
        if (std::abs(s[n + 1] - s[n]) / denom < 0.02) {
            if (plateau_found) *plateau_found = true;
            return static_cast<int>(n);
        }
    }
    if (plateau_found) *plateau_found = false;
    return 0;
}

VerificationReport h4_average(const Ensemble& ens, const AffineStructure& aff,
                              int n_periods, int m_sub, int repeats,
                              std::uint64_t seed, double floor_factor) {
    if (n_periods < 1) throw std::invalid_argument("h4_average: n_periods must be >= 1");
    const double T = aff.period();

    VerificationReport r;
    r.criterion = "h4_average";
    stamp_provenance(r, ens);
    r.seed = seed;
    r.floor_factor = floor_factor;

    double sum = 0.0, floor_sum = 0.0;
    for (int N = 0; N < n_periods; ++N) {
        EmpiricalMeasure cur = unwound_section(ens, aff, -N, N * T);
        EmpiricalMeasure next = unwound_section(ens, aff, -(N + 1), (N + 1) * T);
        DblEstimate est = dbl_estimate(next, cur, m_sub, repeats,
                                       seed + static_cast<std::uint64_t>(N));
        sum += est.estimate;
        floor_sum += est.noise_floor;
        r.index.push_back(static_cast<double>(N));
        r.statistics.push_back(est.estimate);
        r.floors.push_back(est.noise_floor);
        r.partial_averages.push_back(sum / (N + 1));
    }
    const double mean_floor = floor_sum / n_periods;
    r.threshold = floor_factor * mean_floor;
    r.pass = r.partial_averages.back() <= r.threshold;
    r.notes.push_back(fmt("mean_floor", mean_floor));
    return r;
}

VerificationReport h4prime_average(const Ensemble& ens, const AffineStructure& aff,
                                   int n_periods, std::optional<double> epsilon) {
    if (n_periods < 1) throw std::invalid_argument("h4prime_average: n_periods must be >= 1");
    const double T = aff.period();

    VerificationReport r;
    r.criterion = "h4prime_average";
    stamp_provenance(r, ens);

    double sum = 0.0;
    for (int N = 0; N < n_periods; ++N) {
        Matrix cur = ens.section(period_node(ens, N * T)) * aff.power(-N).transpose();
        Matrix next =
            ens.section(period_node(ens, (N + 1) * T)) * aff.power(-(N + 1)).transpose();
        const double mn = (next - cur).rowwise().squaredNorm().mean();
        sum += mn;
        r.index.push_back(static_cast<double>(N));
        r.statistics.push_back(mn);
        r.partial_averages.push_back(sum / (N + 1));
    }
    if (epsilon) {
        r.threshold = *epsilon;
        r.pass = r.partial_averages.back() <= *epsilon;
    } else {
        r.notes.push_back("informational: no epsilon configured, verdict left open");
    }
    return r;
}

VerificationReport periodicity_residual(const Ensemble& ens, const AffineStructure& aff,
                                        const std::vector<double>& t_grid, int burn_in,
                                        int m_sub, int repeats, std::uint64_t seed,
                                        double floor_factor) {
    if (t_grid.empty()) throw std::invalid_argument("periodicity_residual: empty t_grid");
    if (burn_in < 0) throw std::invalid_argument("periodicity_residual: negative burn_in");
    const double T = aff.period();
    for (double t : t_grid)
        if (t < -1e-12 || t > T * (1 + 1e-12))
            throw std::invalid_argument("periodicity_residual: t_grid outside [0, T]");

    VerificationReport r;
    r.criterion = "periodicity_residual";
    stamp_provenance(r, ens);
    r.seed = seed;
    r.floor_factor = floor_factor;

    bool all_ok = true;
    double floor_sum = 0.0;
    const double base = burn_in * T;
    for (size_t i = 0; i < t_grid.size(); ++i) {
        const double t = t_grid[i];
        EmpiricalMeasure shifted = pushforward(
            EmpiricalMeasure::uniform(ens.section(period_node(ens, base + t + T))),
            aff.power(-1));
        EmpiricalMeasure ref =
            EmpiricalMeasure::uniform(ens.section(period_node(ens, base + t)));
        DblEstimate est = dbl_estimate(shifted, ref, m_sub, repeats,
                                       seed + static_cast<std::uint64_t>(i));
        r.index.push_back(t);
        r.statistics.push_back(est.estimate);
        r.floors.push_back(est.noise_floor);
        floor_sum += est.noise_floor;
        if (est.estimate > floor_factor * est.noise_floor) all_ok = false;
    }
    r.threshold = floor_factor * floor_sum / static_cast<double>(t_grid.size());
    r.pass = all_ok;
    r.notes.push_back("pass rule: R(t) <= floor_factor * floor(t) at every t");
    r.notes.push_back(fmt("burn_in_periods", burn_in));
    return r;
}

VerificationReport restart_identity_check(const ModelSpec& model,
                                          const rng::InitialLaw& initial, int k,
                                          double t, int n_paths, double dt,
                                          std::uint64_t seed, int m_sub, int repeats,
                                          double floor_factor, const SimOptions& sim) {
    if (k < 1) throw std::invalid_argument("restart_identity_check: k must be >= 1");
    const double T = model.affine.period();
    if (t < 0 || t > T * (1 + 1e-12))
        throw std::invalid_argument("restart_identity_check: t must lie in [0, T]");
    if (!(dt > 0)) throw std::invalid_argument("restart_identity_check: dt must be positive");

    const long long n_head = std::llround(k * T / dt);
    const long long n_tail = std::llround(t / dt);
    if (n_head < 1 || n_tail < 1)
        throw std::invalid_argument("restart_identity_check: k*T and t must both cover at least one step");

    SimOptions head_opts = sim;
    head_opts.record_stride = static_cast<int>(n_head);  // keep endpoints only
    TimeGrid head_grid{0.0, dt, static_cast<int>(n_head)};
    Ensemble head = euler_maruyama(model, initial, head_grid, n_paths, seed, head_opts);

    SimOptions tail_opts = sim;
    tail_opts.record_stride = static_cast<int>(n_tail);
    Matrix at_kT = head.section(head.node_at(k * T));
    TimeGrid cont_grid{k * T, dt, static_cast<int>(n_tail)};
    Ensemble cont = euler_maruyama_from_states(model, at_kT, cont_grid, seed, tail_opts);

    Matrix unwind = model.affine.power(-k);
    EmpiricalMeasure mu_a = pushforward(
        EmpiricalMeasure::uniform(cont.section(cont.node_at(k * T + t))), unwind);
    EmpiricalMeasure nu0 =
        pushforward(EmpiricalMeasure::uniform(at_kT), unwind);

    // fresh run: resampled start, independent noise
    rng::InitialLaw restart = rng::InitialLaw::empirical(nu0.support, nu0.weights);
    TimeGrid tail_grid{0.0, dt, static_cast<int>(n_tail)};
    Ensemble fresh =
        euler_maruyama(model, restart, tail_grid, n_paths, seed + 1, tail_opts);
    EmpiricalMeasure mu_b = EmpiricalMeasure::uniform(fresh.section(fresh.node_at(t)));

    DblEstimate est = dbl_estimate(mu_a, mu_b, m_sub, repeats, seed + 2);

    VerificationReport r;
    r.criterion = "restart_identity";
    r.model = model.name;
    r.seed = seed;
    r.n_paths = n_paths;
    r.dt = dt;
    r.index.push_back(t);
    r.statistics.push_back(est.estimate);
    r.floors.push_back(est.noise_floor);
    r.floor_factor = floor_factor;
    r.threshold = floor_factor * est.noise_floor;
    r.pass = est.estimate <= r.threshold;
    r.notes.push_back(fmt("k_periods", k));
    r.notes.push_back("fresh streams seeded at seed+1, estimate streams at seed+2");
    return r;
}

EmpiricalMeasure halanay_mixture(const Ensemble& ens, const AffineStructure& aff, int k) {
    if (k < 0) throw std::invalid_argument("halanay_mixture: k must be >= 0");
    const double T = aff.period();
    std::vector<std::pair<double, EmpiricalMeasure>> parts;
    parts.reserve(static_cast<size_t>(k) + 1);
    const double w = 1.0 / (k + 1);
    for (int N = 0; N <= k; ++N)
        parts.emplace_back(w, unwound_section(ens, aff, -N, N * T));
    return mixture(parts);
}

}  // namespace afp
