#include "afp/models.hpp"

#include <cmath>
#include <sstream>

namespace afp::models {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// composite Simpson on [0, T], n even
double simpson(const std::function<double(double)>& f, double T, int n) {
    double h = T / n;
    double acc = f(0.0) + f(T);
    for (int i = 1; i < n; ++i) acc += f(i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

// block-diagonal generator of the forcing phase: e'(t) = Omega e(t)
Matrix phase_generator(const std::vector<double>& omegas) {
    int l = 2 * int(omegas.size());
    Matrix Om = Matrix::Zero(l, l);
    for (int i = 0; i < int(omegas.size()); ++i) {
        Om(2 * i, 2 * i + 1) = omegas[i];
        Om(2 * i + 1, 2 * i) = -omegas[i];
    }
    return Om;
}

void check_periodic_scalar(const std::function<double(double)>& f, double T,
                           const char* name) {
    for (int k = 0; k < 8; ++k) {
        double t = T * (k + 0.37) / 8.0;
        if (std::abs(f(t + T) - f(t)) > 1e-9 * (1.0 + std::abs(f(t)))) {
            std::ostringstream msg;
            msg << "forced_cubic: " << name << " is not T-periodic at t = " << t;
            throw std::invalid_argument(msg.str());
        }
    }
}

}  // namespace

AffineStructure build_Q(const std::vector<double>& omegas, double T) {
    if (omegas.empty()) throw std::invalid_argument("build_Q: need at least one frequency");
    if (!(T > 0.0)) throw std::invalid_argument("build_Q: period must be positive");
    int l = 2 * int(omegas.size());
    Matrix Q = Matrix::Zero(l, l);
    for (int i = 0; i < int(omegas.size()); ++i) {
        double ct = std::cos(omegas[i] * T), st = std::sin(omegas[i] * T);
        Q(2 * i, 2 * i) = ct;
        Q(2 * i, 2 * i + 1) = st;
        Q(2 * i + 1, 2 * i) = -st;
        Q(2 * i + 1, 2 * i + 1) = ct;
    }
    return AffineStructure(std::move(Q), T);
}

Vector e_of_t(const std::vector<double>& omegas, double t) {
    Vector e(2 * int(omegas.size()));
    for (int i = 0; i < int(omegas.size()); ++i) {
        e(2 * i) = std::sin(omegas[i] * t);
        e(2 * i + 1) = std::cos(omegas[i] * t);
    }
    return e;
}

ForcedCubicParams ForcedCubicParams::defaults() {
    ForcedCubicParams p;
    p.T = kTwoPi;
    p.a = [](double t) { return 1.0 + 0.5 * std::sin(t); };
    p.b = 0.5;
    p.c = [](double t) { return 0.2 + 0.2 * std::sin(t); };
    p.omegas = {1.0};
    return p;
}

ModelSpec forced_cubic(const ForcedCubicParams& p) {
    if (!p.a || !p.c) throw std::invalid_argument("forced_cubic: a and c required");
    if (!(p.b > 0.0 && p.b < 1.0))
        throw std::invalid_argument("forced_cubic: b must lie in (0, 1)");
    if (!(p.T > 0.0)) throw std::invalid_argument("forced_cubic: period must be positive");
    if (p.omegas.empty()) throw std::invalid_argument("forced_cubic: need frequencies");

    for (int k = 0; k <= 1000; ++k) {
        double t = p.T * k / 1000.0;
        if (p.a(t) < 0.0) {
            std::ostringstream msg;
            msg << "forced_cubic: a(" << t << ") = " << p.a(t) << " is negative";
            throw std::invalid_argument(msg.str());
        }
    }
    check_periodic_scalar(p.a, p.T, "a");
    check_periodic_scalar(p.c, p.T, "c");

    auto c = p.c;
    double integral = simpson([&](double t) { return c(t) * c(t) - 2.0 * p.b; }, p.T, 2000);
    if (!(integral < 0.0)) {
        std::ostringstream msg;
        msg << "forced_cubic: mean contraction fails, int(c^2 - 2b) = " << integral;
        throw std::invalid_argument(msg.str());
    }

    auto a = p.a;
    double b = p.b;
    std::vector<double> omegas = p.omegas;
    int l = 2 * int(omegas.size());

    auto drift = [a, b, omegas](double t, const Vector& x) -> Vector {
        return -a(t) * x.squaredNorm() * x - b * x + e_of_t(omegas, t);
    };
    auto diffusion = [c, omegas](double t, const Vector& x) -> Matrix {
        Matrix g(x.size(), 1);
        g.col(0) = c(t) * x + e_of_t(omegas, t);
        return g;
    };
    ModelSpec spec("forced_cubic", l, 1, drift, diffusion, build_Q(omegas, p.T));
    spec.drift_jacobian = [a, b, l](double t, const Vector& x) -> Matrix {
        Matrix I = Matrix::Identity(l, l);
        return -a(t) * (x.squaredNorm() * I + 2.0 * x * x.transpose()) - b * I;
    };
    spec.diffusion_jacobian = [c, l](double t, const Vector&, int i) -> Matrix {
        if (i != 0) throw std::invalid_argument("forced_cubic: single noise column");
        return c(t) * Matrix::Identity(l, l);
    };
    spec.alpha = [c, b](double t) { return c(t) * c(t) - 2.0 * b; };
    return spec;
}

LinearOracle linear_oracle(double b, double c_const, const std::vector<double>& omegas,
                           double T, int dim_when_unforced) {
    if (!(b > 0.0)) throw std::invalid_argument("linear_oracle: b must be positive");
    if (!(T > 0.0)) throw std::invalid_argument("linear_oracle: period must be positive");

    int l;
    AffineStructure aff = omegas.empty()
                              ? (dim_when_unforced < 1
                                     ? throw std::invalid_argument(
                                           "linear_oracle: dimension needed when unforced")
                                     : AffineStructure(
                                           Matrix::Identity(dim_when_unforced,
                                                            dim_when_unforced),
                                           T))
                              : build_Q(omegas, T);
    l = aff.dim();

    auto e_fn = [omegas, l](double t) -> Vector {
        return omegas.empty() ? Vector::Zero(l) : e_of_t(omegas, t);
    };
    auto drift = [b, e_fn](double t, const Vector& x) -> Vector {
        return -b * x + e_fn(t);
    };
    auto diffusion = [c_const, e_fn](double t, const Vector& x) -> Matrix {
        Matrix g(x.size(), 1);
        g.col(0) = c_const * x + e_fn(t);
        return g;
    };
    ModelSpec spec("linear_oracle", l, 1, drift, diffusion, std::move(aff));
    spec.drift_jacobian = [b, l](double, const Vector&) -> Matrix {
        return -b * Matrix::Identity(l, l);
    };
    spec.diffusion_jacobian = [c_const, l](double, const Vector&, int i) -> Matrix {
        if (i != 0) throw std::invalid_argument("linear_oracle: single noise column");
        return c_const * Matrix::Identity(l, l);
    };
    spec.alpha = [c_const, b](double) { return c_const * c_const - 2.0 * b; };

    LinearOracle oracle{std::move(spec), b, c_const, omegas, T};
    return oracle;
}

MomentSolution LinearOracle::moments(const Vector& m0, const Matrix& S0,
                                     const std::vector<double>& t_eval,
                                     double sim_dt) const {
    int l = model.dim;
    if (m0.size() != l || S0.rows() != l || S0.cols() != l)
        throw std::invalid_argument("moments: initial moment shape mismatch");
    if (!(sim_dt > 0.0)) throw std::invalid_argument("moments: sim_dt must be positive");
    for (std::size_t k = 0; k < t_eval.size(); ++k) {
        if (t_eval[k] < 0.0 || (k > 0 && t_eval[k] < t_eval[k - 1]))
            throw std::invalid_argument("moments: eval times must be ascending and >= 0");
    }

    auto e_fn = [this, l](double t) -> Vector {
        return omegas.empty() ? Vector::Zero(l) : e_of_t(omegas, t);
    };
    double bb = b, cc = c;
    auto rhs = [&](double t, const Vector& m, const Matrix& S, Vector& dm, Matrix& dS) {
        Vector e = e_fn(t);
        Matrix cross = e * m.transpose() + m * e.transpose();
        dm = -bb * m + e;
        dS = -2.0 * bb * S + cross + cc * cc * S + cc * cross + e * e.transpose();
    };

    MomentSolution out;
    Vector m = m0, k1m(l), k2m(l), k3m(l), k4m(l);
    Matrix S = S0, k1S(l, l), k2S(l, l), k3S(l, l), k4S(l, l);
    double t = 0.0;
    double h0 = sim_dt / 10.0;
    for (double te : t_eval) {
        double span = te - t;
        if (span > 0.0) {
            int n_sub = std::max(1, int(std::ceil(span / h0 - 1e-12)));
            double h = span / n_sub;
            for (int s = 0; s < n_sub; ++s) {
                rhs(t, m, S, k1m, k1S);
                rhs(t + 0.5 * h, m + 0.5 * h * k1m, S + 0.5 * h * k1S, k2m, k2S);
                rhs(t + 0.5 * h, m + 0.5 * h * k2m, S + 0.5 * h * k2S, k3m, k3S);
                rhs(t + h, m + h * k3m, S + h * k3S, k4m, k4S);
                m += (h / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
                S += (h / 6.0) * (k1S + 2.0 * k2S + 2.0 * k3S + k4S);
                t += h;
            }
            t = te;  // kill accumulated rounding
        }
        out.times.push_back(te);
        out.mean.push_back(m);
        out.second.push_back(S);
    }
    return out;
}

ModelSpec drift_control(const Vector& v) {
    if (v.size() == 0 || v.norm() == 0.0)
        throw std::invalid_argument("drift_control: v must be nonzero");
    int l = int(v.size());
    Vector vc = v;
    auto drift = [vc](double, const Vector&) -> Vector { return vc; };
    auto diffusion = [l](double, const Vector&) -> Matrix {
        return Matrix::Identity(l, l);
    };
    ModelSpec spec("drift_control", l, l, drift, diffusion,
                   AffineStructure(Matrix::Identity(l, l), 1.0));
    spec.drift_jacobian = [l](double, const Vector&) -> Matrix {
        return Matrix::Zero(l, l);
    };
    spec.diffusion_jacobian = [l](double, const Vector&, int) -> Matrix {
        return Matrix::Zero(l, l);
    };
    return spec;
}

EnvelopeInputs forced_cubic_envelope_inputs(const ForcedCubicParams& p,
                                            double initial_mean_sq) {
    if (!p.c) throw std::invalid_argument("envelope: c required");
    if (initial_mean_sq < 0.0)
        throw std::invalid_argument("envelope: negative initial second moment");
    double C = 0.0;
    for (int k = 0; k <= 2000; ++k) {
        double ct = p.c(p.T * k / 2000.0);
        C = std::max(C, ct * ct);
    }
    double m_half = double(p.omegas.size());  // |e(t)|^2 = m for l = 2m
    EnvelopeInputs env;
    env.A = initial_mean_sq + 3.0 * m_half / (2.0 * p.b);
    double slope = 0.5 * (2.0 * C + 1.0 - p.b);
    env.B = [slope](double t) { return slope * std::exp(-t); };
    double b = p.b;
    env.K = [b](double t) { return std::exp(b * t); };
    return env;
}

Vector skeleton_periodic_start(double b, const std::vector<double>& omegas) {
    if (omegas.empty())
        throw std::invalid_argument("skeleton: need at least one frequency");
    if (!(b > 0.0)) throw std::invalid_argument("skeleton: b must be positive");
    int l = 2 * int(omegas.size());
    Matrix Om = phase_generator(omegas);
    return (b * Matrix::Identity(l, l) + Om).lu().solve(e_of_t(omegas, 0.0));
}

double skeleton_discretization_floor(double b, const std::vector<double>& omegas,
                                     double T, double dt) {
    if (!(dt > 0.0) || !(T > 0.0))
        throw std::invalid_argument("skeleton: positive T and dt required");
    long n = std::lround(T / dt);
    if (n < 1 || std::abs(n * dt - T) > 1e-9 * T)
        throw std::invalid_argument("skeleton: dt must divide the period");
    Vector x = skeleton_periodic_start(b, omegas);
    Vector x0 = x;
    for (long i = 0; i < n; ++i) {
        double t = i * dt;
        x += dt * (-b * x + e_of_t(omegas, t));
    }
    return (x - x0).squaredNorm();
}

}  // namespace afp::models
