#include "afp/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "afp/rng.hpp"

namespace afp {

namespace {

void check_symmetric(const Matrix& M, double tol_scale, const char* what) {
    const double scale = tol_scale * (1.0 + M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > scale)
        throw std::invalid_argument(std::string(what) + " is not symmetric");
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string(what) + " evaluated to a non-finite value");
}

// random (x, y) probe pairs: uniform box samples plus every radius pair of a
// log-spaced ladder, so both the linearized and the superlinear regime appear
std::vector<std::pair<Vector, Vector>> probe_pairs(int dim, int n_samples,
                                                   std::uint64_t seed,
                                                   const SampleBox& box) {
    rng::NormalStream stream({seed, 0, rng::Tag::subsample});
    std::uint64_t idx = 0;
    auto box_point = [&] {
        Vector p(dim);
        for (int j = 0; j < dim; ++j)
            p[j] = (2.0 * stream.uniform_at(idx++) - 1.0) * box.radius;
        return p;
    };
    auto sphere_point = [&](double r) {
        Vector p(dim);
        for (int j = 0; j < dim; ++j) p[j] = stream.normal_at(idx++);
        const double norm = p.norm();
        return norm > 0 ? Vector((r / norm) * p) : Vector(r * Vector::Unit(dim, 0));
    };

    std::vector<std::pair<Vector, Vector>> pairs;
    for (int i = 0; i < n_samples; ++i) pairs.emplace_back(box_point(), box_point());
    const int per_combo =
        std::max<int>(1, n_samples / int(box.ladder.size() * box.ladder.size()));
    for (double rx : box.ladder)
        for (double ry : box.ladder)
            for (int i = 0; i < per_combo; ++i)
                pairs.emplace_back(sphere_point(rx), sphere_point(ry));
    return pairs;
}

// cumulative trapezoid of alpha on [0, t_max], reported at the marks
std::vector<double> alpha_integral_marks(const std::function<double(double)>& alpha,
                                         const std::vector<double>& marks, double step) {
    std::vector<double> out;
    double t = 0.0, acc = 0.0, prev = alpha(0.0);
    for (double mark : marks) {
        while (t < mark - 1e-12) {
            const double h = std::min(step, mark - t);
            const double next = alpha(t + h);
            acc += 0.5 * (prev + next) * h;
            prev = next;
            t += h;
        }
        out.push_back(acc);
    }
    return out;
}

bool decreasing_below_minus_one(const std::vector<double>& v) {
    for (size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return !v.empty() && v.back() < -1.0;
}

}  // namespace

LyapunovSpec LyapunovSpec::quadratic(std::function<Matrix(double)> D,
                                     std::function<Matrix(double)> D_prime) {
    if (!D) throw std::invalid_argument("LyapunovSpec: quadratic form needs D");
    LyapunovSpec v;
    v.D = std::move(D);
    v.D_prime = std::move(D_prime);
    return v;
}

LyapunovSpec LyapunovSpec::quadratic_constant(const Matrix& D) {
    check_symmetric(D, 1e-10, "LyapunovSpec D");
    const int l = int(D.rows());
    return quadratic([D](double) { return D; },
                     [l](double) { return Matrix::Zero(l, l).eval(); });
}

LyapunovSpec LyapunovSpec::general(std::function<double(double, const Vector&)> value,
                                   std::function<Vector(double, const Vector&)> gradient,
                                   std::function<Matrix(double, const Vector&)> hessian,
                                   std::function<double(double, const Vector&)> dV_dt) {
    if (!value || !gradient || !hessian)
        throw std::invalid_argument("LyapunovSpec: general form needs value, gradient, hessian");
    LyapunovSpec v;
    v.value = std::move(value);
    v.gradient = std::move(gradient);
    v.hessian = std::move(hessian);
    v.dV_dt = std::move(dV_dt);
    return v;
}

bool LyapunovSpec::analytic() const {
    return is_quadratic() ? bool(D_prime) : bool(dV_dt);
}

double LyapunovSpec::eval(double t, const Vector& z) const {
    if (is_quadratic()) {
        Matrix Dt = D(t);
        check_symmetric(Dt, 1e-10, "LyapunovSpec D");
        return z.dot(Dt * z);
    }
    if (!value) throw std::invalid_argument("LyapunovSpec: empty specification");
    return value(t, z);
}

double generator_LV(const ModelSpec& model, const LyapunovSpec& V, double t,
                    const Vector& x, const Vector& y) {
    if (x.size() != model.dim || y.size() != model.dim)
        throw std::invalid_argument("generator_LV: argument dimension mismatch");
    const Vector d = x - y;

    double dVdt;
    Vector grad;
    Matrix hess;
    if (V.is_quadratic()) {
        Matrix Dt = V.D(t);
        check_symmetric(Dt, 1e-10, "LyapunovSpec D");
        if (V.D_prime) {
            dVdt = d.dot(V.D_prime(t) * d);
        } else {
            const double h = 1e-5 * model.affine.period();
            dVdt = d.dot(((V.D(t + h) - V.D(t - h)) / (2.0 * h)) * d);
        }
        grad = 2.0 * Dt * d;
        hess = 2.0 * Dt;
    } else {
        if (V.dV_dt) {
            dVdt = V.dV_dt(t, d);
        } else {
            const double h = 1e-6 * (1.0 + std::abs(t));
            dVdt = (V.value(t + h, d) - V.value(t - h, d)) / (2.0 * h);
        }
        grad = V.gradient(t, d);
        hess = V.hessian(t, d);
        check_symmetric(hess, 1e-8, "LyapunovSpec Hessian");
    }

    const Vector df = model.drift(t, x) - model.drift(t, y);
    const Matrix dg = model.diffusion(t, x) - model.diffusion(t, y);
    const double out = dVdt + df.dot(grad) + 0.5 * (dg.transpose() * hess * dg).trace();
    check_finite(out, "generator_LV");
    return out;
}

Matrix fd_drift_jacobian(const ModelSpec& model, double t, const Vector& x) {
    const int l = model.dim;
    Matrix J(l, l);
    for (int j = 0; j < l; ++j) {
        const double h = 1e-6 * (1.0 + std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (model.drift(t, xp) - model.drift(t, xm)) / (2.0 * h);
    }
    if (!J.allFinite()) throw std::runtime_error("fd_drift_jacobian: non-finite entries");
    return J;
}

Matrix fd_diffusion_jacobian(const ModelSpec& model, double t, const Vector& x, int i) {
    if (i < 0 || i >= model.noise_dim)
        throw std::invalid_argument("fd_diffusion_jacobian: column out of range");
    const int l = model.dim;
    Matrix J(l, l);
    for (int j = 0; j < l; ++j) {
        const double h = 1e-6 * (1.0 + std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        J.col(j) = (model.diffusion(t, xp).col(i) - model.diffusion(t, xm).col(i)) / (2.0 * h);
    }
    if (!J.allFinite()) throw std::runtime_error("fd_diffusion_jacobian: non-finite entries");
    return J;
}

H6Result h6_check(const LyapunovSpec& V, const std::vector<double>& t_samples,
                  const std::vector<Vector>& x_samples) {
    if (t_samples.empty()) throw std::invalid_argument("h6_check: empty t_samples");
    H6Result out;
    if (V.is_quadratic()) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (double t : t_samples) {
            Matrix Dt = V.D(t);
            check_symmetric(Dt, 1e-10, "LyapunovSpec D");
            Eigen::SelfAdjointEigenSolver<Matrix> es(
                Matrix(0.5 * (Dt + Dt.transpose())));
            lo = std::min(lo, es.eigenvalues().minCoeff());
            hi = std::max(hi, es.eigenvalues().maxCoeff());
        }
        out.A_est = lo;
        out.B_est = hi;
        out.sampled = false;
    } else {
        if (x_samples.empty()) throw std::invalid_argument("h6_check: empty x_samples");
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (double t : t_samples)
            for (const Vector& x : x_samples) {
                const double n2 = x.squaredNorm();
                if (n2 < 1e-24) continue;
                const double r = V.eval(t, x) / n2;
                lo = std::min(lo, r);
                hi = std::max(hi, r);
            }
        out.A_est = lo;
        out.B_est = hi;
        out.sampled = true;
    }
    out.pass = out.A_est > 0 && std::isfinite(out.B_est);
    return out;
}

H7Result h7_check(const ModelSpec& model, const LyapunovSpec& V,
                  const std::function<double(double)>& alpha,
                  const std::vector<double>& t_grid, int n_samples,
                  std::uint64_t seed, const SampleBox& box,
                  std::optional<double> tol) {
    if (!alpha) throw std::invalid_argument("h7_check: alpha is required");
    if (t_grid.empty()) throw std::invalid_argument("h7_check: empty t_grid");
    if (n_samples < 1) throw std::invalid_argument("h7_check: n_samples must be >= 1");

    H7Result out;
    out.tol = tol.value_or(V.analytic() ? 1e-8 : 1e-6);
    out.max_residual = -std::numeric_limits<double>::infinity();

    auto pairs = probe_pairs(model.dim, n_samples, seed, box);
    for (double t : t_grid)
        for (const auto& [x, y] : pairs) {
            const double res =
                generator_LV(model, V, t, x, y) - alpha(t) * V.eval(t, x - y);
            if (res > out.max_residual) {
                out.max_residual = res;
                out.argmax_t = t;
                out.argmax_x = x;
                out.argmax_y = y;
            }
        }

    const double T = model.affine.period();
    out.alpha_integrals =
        alpha_integral_marks(alpha, {10 * T, 20 * T, 40 * T}, T / 100.0);
    out.integral_ok = decreasing_below_minus_one(out.alpha_integrals);
    // the integral trend is reported, not gating: a zero rate with zero
    // residual is still a valid certificate of non-expansion
    out.pass = out.max_residual <= out.tol;
    return out;
}

H8Result h8_check(const ModelSpec& model, const std::function<Matrix(double)>& D,
                  const std::function<double(double)>& alpha,
                  const std::vector<double>& t_grid, int n_samples,
                  std::uint64_t seed, int K_periods, const SampleBox& box,
                  const std::function<Matrix(double)>& D_prime) {
    if (!D || !alpha) throw std::invalid_argument("h8_check: D and alpha are required");
    if (t_grid.empty()) throw std::invalid_argument("h8_check: empty t_grid");
    if (K_periods < 1) throw std::invalid_argument("h8_check: K_periods must be >= 1");
    const double T = model.affine.period();
    const double hD = 1e-5 * T;

    auto jac_f = [&](double t, const Vector& x) {
        return model.drift_jacobian ? model.drift_jacobian(t, x)
                                    : fd_drift_jacobian(model, t, x);
    };
    auto jac_g = [&](double t, const Vector& x, int i) {
        return model.diffusion_jacobian ? model.diffusion_jacobian(t, x, i)
                                        : fd_diffusion_jacobian(model, t, x, i);
    };

    H8Result out;
    out.min_margin = std::numeric_limits<double>::infinity();

    auto pairs = probe_pairs(model.dim, n_samples, seed, box);
    for (double t : t_grid) {
        Matrix Dt = D(t);
        check_symmetric(Dt, 1e-10, "h8_check D");
        Matrix Dp = D_prime ? D_prime(t) : Matrix(((D(t + hD) - D(t - hD)) / (2.0 * hD)));
        for (const auto& [x, y] : pairs) {
            Matrix M = alpha(t) * Dt - Dp - 2.0 * jac_f(t, x).transpose() * Dt;
            for (int i = 0; i < model.noise_dim; ++i)
                M -= jac_g(t, x, i).transpose() * Dt * jac_g(t, y, i);
            Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(0.5 * (M + M.transpose())));
            const double margin = es.eigenvalues().minCoeff();
            if (!std::isfinite(margin))
                throw std::runtime_error("h8_check: non-finite margin");
            if (margin < out.min_margin) {
                out.min_margin = margin;
                out.argmin_t = t;
            }
        }
    }

    const Matrix D0 = D(0.0);
    out.periodicity_defect = 0.0;
    std::vector<double> marks;
    for (int k = 1; k <= K_periods; ++k) {
        out.periodicity_defect =
            std::max(out.periodicity_defect, (D(k * T) - D0).cwiseAbs().maxCoeff());
        marks.push_back(k * T);
    }
    out.alpha_integrals = alpha_integral_marks(alpha, marks, T / 100.0);
    out.integral_ok = decreasing_below_minus_one(out.alpha_integrals);
    out.pass = out.min_margin > 1e-10 && out.periodicity_defect <= 1e-9 && out.integral_ok;
    return out;
}

GronwallEnvelope gronwall_envelope(const std::function<double(double)>& A,
                                   const std::function<double(double)>& B,
                                   const std::function<double(double)>& K,
                                   double t1, double t2, int n_nodes) {
    if (!A || !B || !K) throw std::invalid_argument("gronwall_envelope: missing callable");
    if (n_nodes < 8) throw std::invalid_argument("gronwall_envelope: n_nodes must be >= 8");
    if (!(t2 > t1)) throw std::invalid_argument("gronwall_envelope: need t2 > t1");

    GronwallEnvelope out;
    out.times.resize(n_nodes);
    for (int j = 0; j < n_nodes; ++j)
        out.times[j] = t1 + (t2 - t1) * j / (n_nodes - 1);

    std::vector<double> prev;
    for (int level = 0;; ++level) {
        const int stride = 1 << level;
        const int n_grid = (n_nodes - 1) * stride + 1;
        const double h = (t2 - t1) / (n_grid - 1);

        std::vector<double> bk(n_grid), ak(n_grid);
        for (int i = 0; i < n_grid; ++i) {
            const double s = t1 + i * h;
            const double bs = B(s), ks = K(s);
            if (bs < -1e-12 || ks < -1e-12)
                throw std::invalid_argument("gronwall_envelope: B and K must be nonnegative");
            bk[i] = bs * ks;
            ak[i] = A(s) * ks;
        }
        std::vector<double> P(n_grid, 0.0), Q(n_grid, 0.0);
        for (int i = 1; i < n_grid; ++i) {
            P[i] = P[i - 1] + 0.5 * (bk[i - 1] + bk[i]) * h;
            const double wprev = ak[i - 1] * std::exp(-P[i - 1]);
            const double wcur = ak[i] * std::exp(-P[i]);
            Q[i] = Q[i - 1] + 0.5 * (wprev + wcur) * h;
        }

        std::vector<double> cur(n_nodes);
        for (int j = 0; j < n_nodes; ++j) {
            const int i = j * stride;
            cur[j] = A(out.times[j]) + B(out.times[j]) * std::exp(P[i]) * Q[i];
        }

        if (!prev.empty()) {
            double rel = 0.0;
            for (int j = 0; j < n_nodes; ++j)
                rel = std::max(rel, std::abs(cur[j] - prev[j]) /
                                        std::max(std::abs(prev[j]), 1e-12));
            if (rel < 1e-6) {
                out.values = std::move(cur);
                out.refinements = level;
                return out;
            }
        }
        if (level >= 12)
            throw std::runtime_error("gronwall_envelope: quadrature did not converge");
        prev = std::move(cur);
    }
}

}  // namespace afp
