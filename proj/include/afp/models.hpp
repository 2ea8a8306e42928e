#pragma once

#include <functional>
#include <vector>

#include "afp/core.hpp"

namespace afp::models {

// block-diagonal rotation advancing each forcing pair by omega_i * T
AffineStructure build_Q(const std::vector<double>& omegas, double T);

// (sin w1 t, cos w1 t, ..., sin wm t, cos wm t)
Vector e_of_t(const std::vector<double>& omegas, double t);

struct ForcedCubicParams {
    std::function<double(double)> a;  // nonnegative, T-periodic
    double b = 0.5;                   // linear damping, in (0, 1)
    std::function<double(double)> c;  // T-periodic noise gain
    std::vector<double> omegas{1.0};
    double T = 0.0;

    static ForcedCubicParams defaults();
};

// dX = (-a(t)|X|^2 X - b X + e(t)) dt + (c(t) X + e(t)) dW, scalar noise.
// Construction verifies the mean contraction condition
// int_0^T (c^2(t) - 2b) dt < 0 by quadrature and probes a(t) >= 0.
ModelSpec forced_cubic(const ForcedCubicParams& p = ForcedCubicParams::defaults());

struct MomentSolution {
    std::vector<double> times;
    std::vector<Vector> mean;     // E[X(t)]
    std::vector<Matrix> second;   // E[X X^T](t)
    double mean_sq(int k) const { return second[std::size_t(k)].trace(); }
};

struct LinearOracle {
    ModelSpec model;
    double b = 0.0;
    double c = 0.0;
    std::vector<double> omegas;
    double T = 0.0;

    // exact moment dynamics m' = -b m + e, S' = -2b S + (1+c)(e m^T + m e^T)
    // + c^2 S + e e^T, integrated by RK4 at step sim_dt/10 so the ODE error
    // is negligible against Monte Carlo noise
    MomentSolution moments(const Vector& m0, const Matrix& S0,
                           const std::vector<double>& t_eval, double sim_dt) const;
};

// a == 0 specialization with closed moment dynamics; empty omegas means zero
// forcing, in which case the state dimension must be passed explicitly
LinearOracle linear_oracle(double b, double c_const, const std::vector<double>& omegas,
                           double T, int dim_when_unforced = 0);

// constant drift plus unit noise: intentionally breaks periodicity and decay
ModelSpec drift_control(const Vector& v);

// inputs of the mean-square a-priori envelope for the cubic model:
// x(t) <= A + B(t) int_0^t K(s) x(s) ds with A = E|X(0)|^2 + 3m/(2b),
// B(t) = ((2C+1-b)/2) e^{-t}, K(t) = e^{bt}, C = sup c^2
struct EnvelopeInputs {
    double A = 0.0;
    std::function<double(double)> B;
    std::function<double(double)> K;
};

EnvelopeInputs forced_cubic_envelope_inputs(const ForcedCubicParams& p,
                                            double initial_mean_sq);

// start point of the T-periodic orbit of x' = -b x + e(t)
Vector skeleton_periodic_start(double b, const std::vector<double>& omegas);

// squared gap |x_Euler(T) - x*(0)|^2 after one Euler period launched on the
// periodic orbit: the discretization part of any period-map residual
double skeleton_discretization_floor(double b, const std::vector<double>& omegas,
                                     double T, double dt);

}  // namespace afp::models
