#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "afp/core.hpp"

namespace afp {

// V(t,x) as either a quadratic form x^T D(t) x or a general function with
// supplied derivatives; missing time derivatives fall back to central
// differences
struct LyapunovSpec {
    std::function<Matrix(double)> D;        // symmetric within 1e-10 at probes
    std::function<Matrix(double)> D_prime;  // optional

    std::function<double(double, const Vector&)> value;
    std::function<double(double, const Vector&)> dV_dt;  // optional
    std::function<Vector(double, const Vector&)> gradient;
    std::function<Matrix(double, const Vector&)> hessian;  // symmetric within 1e-8

    static LyapunovSpec quadratic(std::function<Matrix(double)> D,
                                  std::function<Matrix(double)> D_prime = nullptr);
    static LyapunovSpec quadratic_constant(const Matrix& D);
    static LyapunovSpec general(std::function<double(double, const Vector&)> value,
                                std::function<Vector(double, const Vector&)> gradient,
                                std::function<Matrix(double, const Vector&)> hessian,
                                std::function<double(double, const Vector&)> dV_dt = nullptr);

    bool is_quadratic() const { return bool(D); }
    // true when no finite differencing is needed to evaluate the generator
    bool analytic() const;
    double eval(double t, const Vector& z) const;
};

// generator applied to V at the difference of two solution arguments:
// dV/dt (t, x-y) + <f(t,x)-f(t,y), grad V> + (1/2) tr[(g(t,x)-g(t,y))^T
// Hess V (g(t,x)-g(t,y))]
double generator_LV(const ModelSpec& model, const LyapunovSpec& V, double t,
                    const Vector& x, const Vector& y);

// central finite differences, per-coordinate step 1e-6 * (1 + |x_i|)
Matrix fd_drift_jacobian(const ModelSpec& model, double t, const Vector& x);
Matrix fd_diffusion_jacobian(const ModelSpec& model, double t, const Vector& x, int i);

struct H6Result {
    double A_est = 0.0;
    double B_est = 0.0;
    bool pass = false;
    bool sampled = false;  // general route: bounds observed, not certified
};

H6Result h6_check(const LyapunovSpec& V, const std::vector<double>& t_samples,
                  const std::vector<Vector>& x_samples);

// sampling region: a cube plus log-spaced radius pairs probing both the
// linearized and the superlinear regime
struct SampleBox {
    double radius = 5.0;
    std::vector<double> ladder{0.01, 0.1, 1.0, 5.0, 25.0};
};

struct H7Result {
    double max_residual = 0.0;
    double argmax_t = 0.0;
    Vector argmax_x, argmax_y;
    double tol = 0.0;
    std::vector<double> alpha_integrals;  // at 10T, 20T, 40T
    bool integral_ok = false;
    bool pass = false;
};

// sampled check of LV(t, x-y) <= alpha(t) V(t, x-y); a pass is evidence over
// the probed box and ladder, not a proof
H7Result h7_check(const ModelSpec& model, const LyapunovSpec& V,
                  const std::function<double(double)>& alpha,
                  const std::vector<double>& t_grid, int n_samples,
                  std::uint64_t seed, const SampleBox& box = {},
                  std::optional<double> tol = std::nullopt);

struct H8Result {
    double min_margin = 0.0;
    double argmin_t = 0.0;
    double periodicity_defect = 0.0;
    std::vector<double> alpha_integrals;  // at kT, k = 1..K
    bool integral_ok = false;
    bool pass = false;
};

// margin(t,x,y) = lambda_min of [alpha D - (D' + 2 Jac_f(t,x)^T D
// + sum_i Jac_gi(t,x)^T D Jac_gi(t,y))] symmetrized; the two diffusion
// factors take independent arguments, matching the mean-value derivation
H8Result h8_check(const ModelSpec& model, const std::function<Matrix(double)>& D,
                  const std::function<double(double)>& alpha,
                  const std::vector<double>& t_grid, int n_samples,
                  std::uint64_t seed, int K_periods = 3, const SampleBox& box = {},
                  const std::function<Matrix(double)>& D_prime = nullptr);

struct GronwallEnvelope {
    std::vector<double> times;
    std::vector<double> values;
    int refinements = 0;
};

// E(t) = A(t) + B(t) * integral_{t1}^{t} A(s)K(s) exp(integral_s^t B K) ds by
// cumulative trapezoids, Richardson-refined until the relative change at the
// output nodes drops under 1e-6
GronwallEnvelope gronwall_envelope(const std::function<double(double)>& A,
                                   const std::function<double(double)>& B,
                                   const std::function<double(double)>& K,
                                   double t1, double t2, int n_nodes);

}  // namespace afp
