#include "afp/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace afp {

namespace {

// one increment provider per path, so counter-block caching survives across
// steps of the same path
using PathIncrements = std::function<double(std::uint64_t, int)>;
using IncrementFactory = std::function<PathIncrements(int)>;

void run_range(const ModelSpec& model, const Matrix& init, const TimeGrid& grid,
               int stride, std::uint64_t step_offset, const IncrementFactory& make_dw,
               const SimOptions& opts, int p0, int p1, Ensemble& out,
               std::vector<PathFlag>& flags) {
    int l = model.dim, m = model.noise_dim;
    Vector x(l), fx(l), xn(l), w(m);
    Matrix gx(l, m);
    for (int p = p0; p < p1; ++p) {
        PathIncrements dw = make_dw(p);
        x = init.row(p).transpose();
        out.state(p, 0) = x;
        bool frozen = false;
        for (int s = 0; s < grid.n_steps; ++s) {
            if (!frozen) {
                double t = grid.time(s);
                fx = model.drift(t, x);
                gx = model.diffusion(t, x);
                std::uint64_t sg = step_offset + std::uint64_t(s);
                for (int j = 0; j < m; ++j) w(j) = dw(sg, j);
                if (opts.scheme == Scheme::tamed) {
                    xn = x + fx * (grid.dt / (1.0 + grid.dt * fx.norm())) + gx * w;
                } else {
                    xn = x + fx * grid.dt + gx * w;
                }
                if (!xn.allFinite() || xn.norm() >= opts.blowup_threshold) {
                    flags.push_back(
                        {p, s + 1, xn.allFinite() ? xn.norm() : std::nan("")});
                    frozen = true;  // path keeps its last finite state
                } else {
                    x = xn;
                }
            }
            if ((s + 1) % stride == 0) out.state(p, (s + 1) / stride) = x;
        }
    }
}

Ensemble run(const ModelSpec& model, const Matrix& init, const TimeGrid& grid,
             std::uint64_t base_seed, const IncrementFactory& make_dw,
             const SimOptions& opts) {
    model.validate_shapes();
    if (init.rows() < 2) throw std::invalid_argument("simulate: need at least 2 paths");
    if (init.cols() != model.dim)
        throw std::invalid_argument("simulate: initial state dimension mismatch");
    if (!init.allFinite())
        throw std::invalid_argument("simulate: non-finite initial states");
    if (opts.record_stride < 1)
        throw std::invalid_argument("simulate: record_stride < 1");
    if (grid.n_steps % opts.record_stride != 0)
        throw std::invalid_argument("simulate: n_steps not divisible by record_stride");
    if (opts.n_workers < 1) throw std::invalid_argument("simulate: n_workers < 1");
    if (!(opts.blowup_threshold > 0.0))
        throw std::invalid_argument("simulate: blowup_threshold must be positive");

    int n_paths = int(init.rows());
    TimeGrid recorded(grid.t0, grid.dt * opts.record_stride,
                      grid.n_steps / opts.record_stride);
    Ensemble out(recorded, n_paths, model.dim, grid.dt, base_seed, model.name);

    double guard = 1e-3 * model.affine.period();
    if (grid.dt > guard) {
        std::ostringstream msg;
        msg << "dt " << grid.dt << " exceeds the stability guard 1e-3*T = " << guard
            << "; consider a finer grid or the tamed scheme";
        out.warnings().push_back(msg.str());
    }

    // absolute step index keeps increment draws aligned across restarts
    std::uint64_t step_offset = std::uint64_t(std::llround(grid.t0 / grid.dt));

    int workers = std::min(opts.n_workers, n_paths);
    std::vector<std::vector<PathFlag>> flag_parts(workers);
    if (workers == 1) {
        run_range(model, init, grid, opts.record_stride, step_offset, make_dw, opts,
                  0, n_paths, out, flag_parts[0]);
    } else {
        std::vector<std::thread> pool;
        int chunk = (n_paths + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            int p0 = w * chunk, p1 = std::min(n_paths, p0 + chunk);
            if (p0 >= p1) break;
            pool.emplace_back([&, w, p0, p1] {
                run_range(model, init, grid, opts.record_stride, step_offset, make_dw,
                          opts, p0, p1, out, flag_parts[w]);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (auto& part : flag_parts)
        out.flags().insert(out.flags().end(), part.begin(), part.end());

    if (double(out.flags().size()) > opts.max_flagged_fraction * n_paths) {
        const PathFlag& f = out.flags().front();
        std::ostringstream msg;
        msg << "simulate: " << out.flags().size() << " of " << n_paths
            << " paths flagged non-finite or beyond " << opts.blowup_threshold
            << " (first: path " << f.path << " step " << f.step << " |X| = " << f.norm
            << ")";
        throw std::runtime_error(msg.str());
    }
    return out;
}

IncrementFactory stream_increments(std::uint64_t base_seed, int noise_dim, double dt) {
    double root = std::sqrt(dt);
    return [base_seed, noise_dim, root](int p) -> PathIncrements {
        rng::NormalStream s({base_seed, std::uint64_t(p), rng::Tag::increments});
        return [s, noise_dim, root](std::uint64_t sg, int j) {
            return root * s.normal_at(sg * std::uint64_t(noise_dim) + std::uint64_t(j));
        };
    };
}

IncrementFactory wrap_custom(const IncrementFn& dw) {
    return [&dw](int p) -> PathIncrements {
        return [&dw, p](std::uint64_t sg, int j) { return dw(p, sg, j); };
    };
}

}  // namespace

Ensemble euler_maruyama(const ModelSpec& model, const rng::InitialLaw& initial,
                        const TimeGrid& grid, int n_paths, std::uint64_t base_seed,
                        const SimOptions& opts) {
    if (initial.dim() != model.dim)
        throw std::invalid_argument("simulate: initial law dimension mismatch");
    Matrix init =
        rng::sample_initial({base_seed, 0, rng::Tag::initial}, initial, n_paths);
    return run(model, init, grid, base_seed,
               stream_increments(base_seed, model.noise_dim, grid.dt), opts);
}

Ensemble euler_maruyama_from_states(const ModelSpec& model, const Matrix& initial_states,
                                    const TimeGrid& grid, std::uint64_t base_seed,
                                    const SimOptions& opts) {
    return run(model, initial_states, grid, base_seed,
               stream_increments(base_seed, model.noise_dim, grid.dt), opts);
}

Ensemble euler_maruyama_with_increments(const ModelSpec& model,
                                        const Matrix& initial_states,
                                        const TimeGrid& grid, std::uint64_t base_seed,
                                        const IncrementFn& dw, const SimOptions& opts) {
    if (!dw) throw std::invalid_argument("simulate: increment function required");
    return run(model, initial_states, grid, base_seed, wrap_custom(dw), opts);
}

MomentCurve moment_curve(const Ensemble& ens) {
    int nodes = ens.n_nodes(), N = ens.n_paths();
    MomentCurve mc;
    mc.times.resize(nodes);
    mc.mean_sq.resize(nodes);
    mc.std_err.resize(nodes);
    for (int i = 0; i < nodes; ++i) {
        mc.times[i] = ens.grid().time(i);
        double sum = 0.0, sumsq = 0.0;
        for (int p = 0; p < N; ++p) {
            double q = ens.state(p, i).squaredNorm();
            sum += q;
            sumsq += q * q;
        }
        double mean = sum / N;
        double var = std::max(0.0, (sumsq - N * mean * mean) / (N - 1));
        mc.mean_sq(i) = mean;
        mc.std_err(i) = std::sqrt(var / N);
    }
    mc.max_value = mc.mean_sq.maxCoeff();
    return mc;
}

std::vector<EmpiricalMeasure> sectioned_states(const Ensemble& ens,
                                               const std::vector<double>& times) {
    std::vector<EmpiricalMeasure> out;
    out.reserve(times.size());
    for (double t : times)
        out.push_back(EmpiricalMeasure::uniform(ens.section(ens.node_at(t))));
    return out;
}

}  // namespace afp
