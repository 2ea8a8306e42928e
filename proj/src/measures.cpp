#include "afp/measures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "afp/rng.hpp"

namespace afp {

namespace {

constexpr double kCut = 2.0;  // sup-norm cap makes mass farther than 2 equivalent

double truncated(double d) { return d < kCut ? d : kCut; }

// Square assignment by shortest augmenting paths with potentials, O(n^3).
// Returns the minimal total cost of a perfect matching.
double assignment_cost(const Matrix& C) {
    int n = int(C.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = C(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += C(p[j] - 1, j - 1);
    return total;
}

// Transportation problem with general masses: successive shortest paths on the
// dense bipartite residual graph, Dijkstra with potentials.
double transport_cost(const Matrix& C, Vector a, Vector b) {
    int S = int(a.size()), T = int(b.size());
    double total_mass = a.sum();
    double mass_tol = 1e-13 * std::max(1.0, total_mass);
    Matrix flow = Matrix::Zero(S, T);
    Vector ps = Vector::Zero(S), pt = Vector::Zero(T);
    const double inf = std::numeric_limits<double>::infinity();

    double shipped = 0.0;
    while (total_mass - shipped > mass_tol) {
        std::vector<double> ds(S, inf), dt(T, inf);
        std::vector<int> prev_t(T, -1);   // source feeding sink j on best path
        std::vector<int> prev_s(S, -1);   // sink feeding source i via residual
        std::vector<char> vs(S, 0), vt(T, 0);
        for (int i = 0; i < S; ++i)
            if (a(i) > mass_tol) ds[i] = 0.0;

        while (true) {
            int bi = -1, bj = -1;
            double best = inf;
            for (int i = 0; i < S; ++i)
                if (!vs[i] && ds[i] < best) best = ds[i], bi = i, bj = -1;
            for (int j = 0; j < T; ++j)
                if (!vt[j] && dt[j] < best) best = dt[j], bj = j, bi = -1;
            if (best == inf) break;
            if (bj < 0) {
                vs[bi] = 1;
                for (int j = 0; j < T; ++j) {
                    if (vt[j]) continue;
                    double rc = C(bi, j) + ps(bi) - pt(j);
                    if (rc < 0) rc = 0;  // fp slack
                    if (ds[bi] + rc < dt[j]) {
                        dt[j] = ds[bi] + rc;
                        prev_t[j] = bi;
                    }
                }
            } else {
                vt[bj] = 1;
                for (int i = 0; i < S; ++i) {
                    if (vs[i] || flow(i, bj) <= mass_tol) continue;
                    double rc = -C(i, bj) + pt(bj) - ps(i);
                    if (rc < 0) rc = 0;
                    if (dt[bj] + rc < ds[i]) {
                        ds[i] = dt[bj] + rc;
                        prev_s[i] = bj;
                    }
                }
            }
        }

        int end = -1;
        double endd = inf;
        for (int j = 0; j < T; ++j)
            if (b(j) > mass_tol && dt[j] < endd) endd = dt[j], end = j;
        if (end < 0) throw std::runtime_error("transport: no augmenting path");

        // walk back to find the bottleneck, then push
        double delta = b(end);
        int j = end;
        while (true) {
            int i = prev_t[j];
            if (prev_s[i] < 0) {
                delta = std::min(delta, a(i));
                break;
            }
            delta = std::min(delta, flow(i, prev_s[i]));
            j = prev_s[i];
        }
        j = end;
        while (true) {
            int i = prev_t[j];
            flow(i, j) += delta;
            if (prev_s[i] < 0) {
                a(i) -= delta;
                break;
            }
            flow(i, prev_s[i]) -= delta;
            j = prev_s[i];
        }
        b(end) -= delta;
        shipped += delta;

        for (int i = 0; i < S; ++i)
            if (ds[i] < inf) ps(i) += ds[i];
        for (int jj = 0; jj < T; ++jj)
            if (dt[jj] < inf) pt(jj) += dt[jj];
    }

    double cost = 0.0;
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < T; ++j)
            if (flow(i, j) > 0) cost += flow(i, j) * C(i, j);
    return cost;
}

bool uniform_weights(const Vector& w) {
    double w0 = w(0);
    return (w.array() - w0).abs().maxCoeff() <= 1e-15 * std::max(1.0, std::abs(w0));
}

// Exact d_BL without the public size gate; see dbl_exact for the reduction.
double dbl_core(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim() != nu.dim())
        throw std::invalid_argument("d_BL: dimension mismatch");

    // uniform equal-size case: optimal transport is an assignment, and
    // duplicate atoms cost the matching nothing, so skip coalescing
    if (mu.size() == nu.size() && uniform_weights(mu.weights) &&
        uniform_weights(nu.weights)) {
        int n = mu.size();
        Matrix C(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                C(i, j) = truncated((mu.support.row(i) - nu.support.row(j)).norm());
        return assignment_cost(C) / double(n);
    }

    // general masses: merge and cancel shared atoms, then ship the rest
    int nm = mu.size(), nn = nu.size(), l = mu.dim();
    Matrix pts(nm + nn, l);
    pts.topRows(nm) = mu.support;
    pts.bottomRows(nn) = nu.support;
    Vector signedw(nm + nn);
    signedw.head(nm) = mu.weights;
    signedw.tail(nn) = -nu.weights;

    std::vector<int> order(nm + nn);
    std::iota(order.begin(), order.end(), 0);
    auto less_row = [&](int x, int y) {
        for (int k = 0; k < l; ++k) {
            if (pts(x, k) < pts(y, k)) return true;
            if (pts(x, k) > pts(y, k)) return false;
        }
        return false;
    };
    std::sort(order.begin(), order.end(), less_row);

    std::vector<Vector> ppts, npts;
    std::vector<double> pw, nw;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        double c = signedw(order[i]);
        while (j < order.size() && !less_row(order[i], order[j])) {
            c += signedw(order[j]);
            ++j;
        }
        if (c > 1e-15)
            ppts.push_back(pts.row(order[i]).transpose()), pw.push_back(c);
        else if (c < -1e-15)
            npts.push_back(pts.row(order[i]).transpose()), nw.push_back(-c);
        i = j;
    }
    if (ppts.empty() || npts.empty()) return 0.0;

    int S = int(ppts.size()), T = int(npts.size());
    Matrix C(S, T);
    for (int s = 0; s < S; ++s)
        for (int t = 0; t < T; ++t) C(s, t) = truncated((ppts[s] - npts[t]).norm());
    Vector a = Eigen::Map<Vector>(pw.data(), S);
    Vector b = Eigen::Map<Vector>(nw.data(), T);
    // cancellation can leave the two sides off by accumulated rounding
    double tot = std::min(a.sum(), b.sum());
    a *= tot / a.sum();
    b *= tot / b.sum();
    return transport_cost(C, a, b);
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(Matrix support_, Vector weights_)
    : support(std::move(support_)), weights(std::move(weights_)) {
    if (support.rows() == 0 || support.cols() == 0)
        throw std::invalid_argument("measure: empty support");
    if (weights.size() != support.rows())
        throw std::invalid_argument("measure: weight count mismatch");
    if (!support.allFinite() || !weights.allFinite())
        throw std::invalid_argument("measure: non-finite entries");
    if (weights.minCoeff() < 0.0)
        throw std::invalid_argument("measure: negative weight");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("measure: weights must sum to 1");
}

EmpiricalMeasure EmpiricalMeasure::uniform(Matrix support_) {
    int n = int(support_.rows());
    if (n == 0) throw std::invalid_argument("measure: empty support");
    return EmpiricalMeasure(std::move(support_), Vector::Constant(n, 1.0 / n));
}

double dbl_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int n_max) {
    if (n_max < 2) throw std::invalid_argument("dbl_exact: n_max < 2");
    if (mu.size() + nu.size() > n_max) {
        std::ostringstream msg;
        msg << "dbl_exact: combined support " << mu.size() + nu.size() << " exceeds "
            << n_max << "; use dbl_estimate for large ensembles";
        throw std::invalid_argument(msg.str());
    }
    return dbl_core(mu, nu);
}

namespace {

// m intact draws proportional to weights, with replacement; uniform indices
// come from the caller's stream starting at draw index `base`.
std::vector<int> draw_with_replacement(const rng::NormalStream& s, std::uint64_t base,
                                       const Vector& w, int m) {
    int n = int(w.size());
    std::vector<double> cum(n);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += w(i);
        cum[i] = acc;
    }
    cum[n - 1] = 1.0;
    std::vector<int> out(m);
    for (int k = 0; k < m; ++k) {
        double u = s.uniform_at(base + k);
        out[k] = int(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    }
    return out;
}

// weighted sampling without replacement: top-k by exponential race keys
std::vector<int> draw_without_replacement(const rng::NormalStream& s, const Vector& w,
                                          int m) {
    int n = int(w.size());
    std::vector<std::pair<double, int>> keyed;
    keyed.reserve(n);
    for (int i = 0; i < n; ++i) {
        if (w(i) <= 0.0) continue;
        double u = s.uniform_at(std::uint64_t(i));
        keyed.emplace_back(-std::log(u) / w(i), i);
    }
    if (int(keyed.size()) < m)
        throw std::invalid_argument("subsample: not enough positive-weight atoms");
    std::partial_sort(keyed.begin(), keyed.begin() + m, keyed.end());
    std::vector<int> out(m);
    for (int k = 0; k < m; ++k) out[k] = keyed[k].second;
    return out;
}

EmpiricalMeasure gather(const EmpiricalMeasure& src, const std::vector<int>& idx) {
    Matrix sup(int(idx.size()), src.dim());
    for (int k = 0; k < int(idx.size()); ++k) sup.row(k) = src.support.row(idx[k]);
    return EmpiricalMeasure::uniform(std::move(sup));
}

double percentile95(Vector v) {
    std::sort(v.data(), v.data() + v.size());
    double pos = 0.95 * double(v.size() - 1);
    int lo = int(std::floor(pos));
    int hi = std::min<int>(lo + 1, int(v.size()) - 1);
    double frac = pos - lo;
    return v(lo) * (1.0 - frac) + v(hi) * frac;
}

}  // namespace

DblEstimate dbl_estimate(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                         int m_sub, int repeats, std::uint64_t seed) {
    if (m_sub < 2) throw std::invalid_argument("dbl_estimate: m_sub < 2");
    if (repeats < 3) throw std::invalid_argument("dbl_estimate: repeats < 3");
    if (mu.dim() != nu.dim())
        throw std::invalid_argument("dbl_estimate: dimension mismatch");

    DblEstimate out;
    out.repeat_values.resize(repeats);
    out.floor_values.resize(repeats);

    int positive = 0;
    for (int i = 0; i < mu.size(); ++i)
        if (mu.weights(i) > 0.0) ++positive;
    bool disjoint_ok = positive >= 2 * m_sub;
    out.floor_with_replacement = !disjoint_ok;

    for (int r = 0; r < repeats; ++r) {
        rng::NormalStream est({seed, std::uint64_t(2 * r), rng::Tag::subsample});
        EmpiricalMeasure mu_s =
            gather(mu, draw_with_replacement(est, 0, mu.weights, m_sub));
        EmpiricalMeasure nu_s = gather(
            nu, draw_with_replacement(est, std::uint64_t(m_sub), nu.weights, m_sub));
        out.repeat_values(r) = dbl_core(mu_s, nu_s);

        rng::NormalStream flr({seed, std::uint64_t(2 * r + 1), rng::Tag::subsample});
        EmpiricalMeasure half1 = mu, half2 = mu;
        if (disjoint_ok) {
            std::vector<int> both = draw_without_replacement(flr, mu.weights, 2 * m_sub);
            half1 = gather(mu, std::vector<int>(both.begin(), both.begin() + m_sub));
            half2 = gather(mu, std::vector<int>(both.begin() + m_sub, both.end()));
        } else {
            half1 = gather(mu, draw_with_replacement(flr, 0, mu.weights, m_sub));
            half2 = gather(
                mu, draw_with_replacement(flr, std::uint64_t(m_sub), mu.weights, m_sub));
        }
        out.floor_values(r) = dbl_core(half1, half2);
    }

    out.estimate = out.repeat_values.mean();
    out.noise_floor = percentile95(out.floor_values);
    return out;
}

MsqResult msq_distance(const Ensemble& a, const Ensemble& b, double t) {
    if (a.n_paths() != b.n_paths())
        throw std::invalid_argument("msq_distance: path count mismatch");
    if (a.dim() != b.dim()) throw std::invalid_argument("msq_distance: dimension mismatch");
    if (a.grid().t0 != b.grid().t0 || a.grid().dt != b.grid().dt ||
        a.grid().n_steps != b.grid().n_steps)
        throw std::invalid_argument("msq_distance: grids differ");
    if (a.base_seed() != b.base_seed())
        throw std::invalid_argument("msq_distance: ensembles ride different noise streams");

    int node = a.node_at(t);
    int N = a.n_paths();
    double sum = 0.0, sumsq = 0.0;
    for (int p = 0; p < N; ++p) {
        double q = (a.state(p, node) - b.state(p, node)).squaredNorm();
        sum += q;
        sumsq += q * q;
    }
    MsqResult res;
    res.value = sum / N;
    double var = std::max(0.0, sumsq / N - res.value * res.value);
    res.std_error = std::sqrt(var / N);
    return res;
}

double wasserstein1_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim() != 1 || nu.dim() != 1)
        throw std::invalid_argument("wasserstein1_1d: measures must be 1-dimensional");
    struct Atom {
        double x, w;
    };
    std::vector<Atom> atoms;
    atoms.reserve(mu.size() + nu.size());
    for (int i = 0; i < mu.size(); ++i) atoms.push_back({mu.support(i, 0), mu.weights(i)});
    for (int i = 0; i < nu.size(); ++i) atoms.push_back({nu.support(i, 0), -nu.weights(i)});
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& p, const Atom& q) { return p.x < q.x; });
    double w1 = 0.0, cdf = 0.0;
    for (std::size_t k = 0; k + 1 < atoms.size(); ++k) {
        cdf += atoms[k].w;
        w1 += std::abs(cdf) * (atoms[k + 1].x - atoms[k].x);
    }
    return w1;
}

EmpiricalMeasure pushforward(const EmpiricalMeasure& mu, const Matrix& Q) {
    if (Q.cols() != mu.dim())
        throw std::invalid_argument("pushforward: matrix dimension mismatch");
    return EmpiricalMeasure(mu.support * Q.transpose(), mu.weights);
}

EmpiricalMeasure mixture(const std::vector<std::pair<double, EmpiricalMeasure>>& parts) {
    if (parts.empty()) throw std::invalid_argument("mixture: no components");
    int l = parts.front().second.dim();
    int total = 0;
    double wsum = 0.0;
    for (const auto& [lam, m] : parts) {
        if (lam < 0.0) throw std::invalid_argument("mixture: negative component weight");
        if (m.dim() != l) throw std::invalid_argument("mixture: dimension mismatch");
        total += m.size();
        wsum += lam;
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw std::invalid_argument("mixture: component weights must sum to 1");
    Matrix sup(total, l);
    Vector w(total);
    int at = 0;
    for (const auto& [lam, m] : parts) {
        sup.middleRows(at, m.size()) = m.support;
        w.segment(at, m.size()) = lam * m.weights;
        at += m.size();
    }
    // rounding in lam*w can push the sum a hair off 1
    w /= w.sum();
    return EmpiricalMeasure(std::move(sup), std::move(w));
}

}  // namespace afp
