#include "afp/poincare.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "afp/rng.hpp"

namespace afp {

namespace {

// one-period step count; the endpoint may sit off T by at most dt/2
int period_steps(double T, double dt) {
    if (!(dt > 0)) throw std::invalid_argument("poincare: dt must be positive");
    const long long n = std::llround(T / dt);
    if (n < 1 || std::abs(n * dt - T) > dt / 2)
        throw std::invalid_argument("poincare: dt does not resolve the period");
    return static_cast<int>(n);
}

std::string fmt(const char* label, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s=%.6g", label, v);
    return buf;
}

}  // namespace

EmpiricalMeasure poincare_map(const ModelSpec& model, const EmpiricalMeasure& mu,
                              int n_paths, double dt, std::uint64_t seed,
                              const SimOptions& sim) {
    const double T = model.affine.period();
    const int n = period_steps(T, dt);
    SimOptions opts = sim;
    opts.record_stride = n;  // endpoints only
    rng::InitialLaw start = rng::InitialLaw::empirical(mu.support, mu.weights);
    TimeGrid grid{0.0, dt, n};
    Ensemble ens = euler_maruyama(model, start, grid, n_paths, seed, opts);
    return pushforward(EmpiricalMeasure::uniform(ens.section(1)),
                       model.affine.power(-1));
}

PoincareIteration iterate_fixed_point(const ModelSpec& model, const EmpiricalMeasure& mu0,
                                      int k_max, int n_paths, double dt,
                                      std::uint64_t seed, const PoincareOptions& opts) {
    if (k_max < 2) throw std::invalid_argument("iterate_fixed_point: k_max must be >= 2");
    if (k_max > 10000) throw std::invalid_argument("iterate_fixed_point: k_max too large");
    const double T = model.affine.period();
    const int n = period_steps(T, dt);

    PoincareIteration out;
    out.measures.push_back(mu0);

    SimOptions sim = opts.sim;
    sim.record_stride = n;

    Matrix states;  // carried path states in continuation mode
    int rising = 0;
    for (int k = 1; k <= k_max; ++k) {
        EmpiricalMeasure next = [&] {
            if (!opts.continuation)
                return poincare_map(model, out.measures.back(), n_paths, dt,
                                    seed + static_cast<std::uint64_t>(k), sim);
            // discrete period n*dt keeps the global step offset exact, so the
            // carried paths draw the same streams a single long run would
            TimeGrid grid{(k - 1) * (n * dt), dt, n};
            Ensemble ens =
                k == 1 ? euler_maruyama(model,
                                        rng::InitialLaw::empirical(mu0.support, mu0.weights),
                                        grid, n_paths, seed, sim)
                       : euler_maruyama_from_states(model, states, grid, seed, sim);
            states = ens.section(1);
            return pushforward(EmpiricalMeasure::uniform(states), model.affine.power(-k));
        }();

        DblEstimate est =
            dbl_estimate(next, out.measures.back(), opts.m_sub, opts.repeats,
                         seed + 100000 + static_cast<std::uint64_t>(k));
        out.measures.push_back(std::move(next));
        out.gaps.push_back(est.estimate);
        out.floors.push_back(est.noise_floor);

        const size_t i = out.gaps.size() - 1;
        if (i > 0) {
            const bool resolvable = out.gaps[i - 1] > 3.0 * out.floors[i - 1];
            out.ratios.push_back(resolvable
                                     ? out.gaps[i] / out.gaps[i - 1]
                                     : std::numeric_limits<double>::quiet_NaN());
            if (out.gaps[i] > out.gaps[i - 1] && out.gaps[i] > 1.5 * out.floors[i])
                ++rising;
            else
                rising = 0;
        }
        if (!out.converged_at && est.estimate <= 1.5 * est.noise_floor) {
            out.converged_at = k;
            break;
        }
        if (rising >= 5) {
            out.diverged = true;
            break;
        }
    }
    return out;
}

VerificationReport contraction_estimate_distribution(
    const ModelSpec& model, const EmpiricalMeasure& muA, const EmpiricalMeasure& muB,
    const std::vector<double>& t_grid, int n_paths, double dt, std::uint64_t seed,
    const PoincareOptions& opts) {
    if (t_grid.empty())
        throw std::invalid_argument("contraction_estimate_distribution: empty t_grid");
    const double T = model.affine.period();

    DblEstimate initial =
        dbl_estimate(muA, muB, opts.m_sub, opts.repeats, seed + 901);
    if (!(initial.estimate > 5.0 * initial.noise_floor))
        throw std::invalid_argument(
            "contraction_estimate_distribution: initial measures not separated "
            "from the noise floor");
    const double denom = (muA.size() + muB.size() <= 256)
                             ? dbl_exact(muA, muB)
                             : initial.estimate;

    const double t_max = *std::max_element(t_grid.begin(), t_grid.end());
    const long long n_steps = std::llround(t_max / dt);
    if (n_steps < 1 || std::abs(n_steps * dt - t_max) > dt / 2)
        throw std::invalid_argument(
            "contraction_estimate_distribution: dt does not resolve max(t_grid)");

    TimeGrid grid{0.0, dt, static_cast<int>(n_steps)};
    // shared seed = shared increments; only the laws enter the estimate
    Ensemble a = euler_maruyama(model, rng::InitialLaw::empirical(muA.support, muA.weights),
                                grid, n_paths, seed, opts.sim);
    Ensemble b = euler_maruyama(model, rng::InitialLaw::empirical(muB.support, muB.weights),
                                grid, n_paths, seed, opts.sim);

    VerificationReport r;
    r.criterion = "h5_distribution";
    r.model = model.name;
    r.seed = seed;
    r.n_paths = n_paths;
    r.dt = dt;
    r.threshold = 1.0;
    r.notes.push_back(fmt("initial_distance", denom));
    r.notes.push_back(fmt("initial_floor", initial.noise_floor));

    std::vector<double> period_ratios;
    for (size_t i = 0; i < t_grid.size(); ++i) {
        const double t = t_grid[i];
        DblEstimate est = dbl_estimate(
            EmpiricalMeasure::uniform(a.section(a.node_at(t))),
            EmpiricalMeasure::uniform(b.section(b.node_at(t))), opts.m_sub,
            opts.repeats, seed + 2000 + static_cast<std::uint64_t>(i));
        r.index.push_back(t);
        r.statistics.push_back(est.estimate / denom);
        r.floors.push_back(est.noise_floor / denom);
        const long long k = std::llround(t / T);
        if (k >= 1 && std::abs(t - k * T) <= dt) period_ratios.push_back(r.statistics.back());
    }

    if (period_ratios.empty()) {
        r.notes.push_back("no period multiples in t_grid, verdict left open");
    } else {
        const size_t tail = (period_ratios.size() + 2) / 3;
        double worst = 0.0;
        for (size_t i = period_ratios.size() - tail; i < period_ratios.size(); ++i)
            worst = std::max(worst, period_ratios[i]);
        r.pass = worst < 1.0;
        r.notes.push_back(fmt("tail_max_period_ratio", worst));
    }
    return r;
}

VerificationReport contraction_estimate_msq(const ModelSpec& model,
                                            const rng::InitialLaw& initialA,
                                            const rng::InitialLaw& initialB,
                                            const std::vector<double>& t_grid,
                                            int n_paths, double dt, std::uint64_t seed,
                                            const SimOptions& sim) {
    if (t_grid.empty())
        throw std::invalid_argument("contraction_estimate_msq: empty t_grid");
    const double t_max = *std::max_element(t_grid.begin(), t_grid.end());
    const long long n_steps = std::llround(t_max / dt);
    if (n_steps < 1 || std::abs(n_steps * dt - t_max) > dt / 2)
        throw std::invalid_argument("contraction_estimate_msq: dt does not resolve max(t_grid)");

    TimeGrid grid{0.0, dt, static_cast<int>(n_steps)};
    Ensemble a = euler_maruyama(model, initialA, grid, n_paths, seed, sim);
    Ensemble b = euler_maruyama(model, initialB, grid, n_paths, seed, sim);

    MsqResult base = msq_distance(a, b, 0.0);
    if (!(base.value > 0))
        throw std::invalid_argument(
            "contraction_estimate_msq: identical initial ensembles, ratio undefined");

    VerificationReport r;
    r.criterion = "h5_msq";
    r.model = model.name;
    r.seed = seed;
    r.n_paths = n_paths;
    r.dt = dt;
    r.notes.push_back(fmt("initial_msq", base.value));

    const double T = model.affine.period();
    std::vector<double> mult_t, mult_v;
    for (double t : t_grid) {
        MsqResult m = msq_distance(a, b, t);
        r.index.push_back(t);
        r.statistics.push_back(m.value / base.value);
        r.floors.push_back(m.std_error / base.value);
        const long long k = std::llround(t / T);
        if (k >= 1 && std::abs(t - k * T) <= dt) {
            mult_t.push_back(t);
            mult_v.push_back(m.value / base.value);
        }
    }

    if (!mult_t.empty()) {
        const double slope = fit_log_slope(mult_t, mult_v, 0.0, t_max);
        r.notes.push_back(fmt("log_slope_period_multiples", slope));
        if (model.alpha)
            r.notes.push_back(fmt("alpha_running_mean", alpha_running_mean(model, t_max)));
    }
    return r;  // informational; callers judge slopes against their own bands
}

double fit_log_slope(const std::vector<double>& t, const std::vector<double>& v,
                     double t_min, double t_max) {
    if (t.size() != v.size())
        throw std::invalid_argument("fit_log_slope: length mismatch");
    const double tol = 1e-9 * std::max(1.0, std::abs(t_max));
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t_min - tol || t[i] > t_max + tol || !(v[i] > 0)) continue;
        const double y = std::log(v[i]);
        sx += t[i];
        sy += y;
        sxx += t[i] * t[i];
        sxy += t[i] * y;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double denom = n * sxx - sx * sx;
    if (denom <= 0) return std::numeric_limits<double>::quiet_NaN();
    return (n * sxy - sx * sy) / denom;
}

double alpha_running_mean(const ModelSpec& model, double t) {
    if (!model.alpha)
        throw std::invalid_argument("alpha_running_mean: model exposes no decay rate");
    if (!(t > 0)) throw std::invalid_argument("alpha_running_mean: t must be positive");
    const int n = 2000;  // Simpson panels
    const double h = t / (2 * n);
    double sum = model.alpha(0.0) + model.alpha(t);
    for (int i = 1; i < 2 * n; ++i) sum += model.alpha(i * h) * (i % 2 ? 4.0 : 2.0);
    return sum * h / 3.0 / t;
}

}  // namespace afp
