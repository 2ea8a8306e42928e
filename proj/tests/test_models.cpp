#include "doctest.h"

#include <cmath>

#include "afp/integrator.hpp"
#include "afp/models.hpp"
#include "afp/rng.hpp"

using namespace afp;
using namespace afp::models;
using afp::rng::InitialLaw;
using afp::rng::NormalStream;
using afp::rng::Tag;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("rotation blocks evaluate to the closed forms") {
    AffineStructure quarter = build_Q({1.0}, kPi / 2.0);
    Matrix want(2, 2);
    want << 0.0, 1.0, -1.0, 0.0;
    CHECK((quarter.Q() - want).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(quarter.orthogonal());

    AffineStructure full = build_Q({1.0}, 2.0 * kPi);
    CHECK((full.Q() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);

    AffineStructure two = build_Q({1.0, 3.0}, 2.0 * kPi);
    CHECK((two.Q() - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-14);

    CHECK_THROWS_AS(build_Q({}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(build_Q({1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("forcing vector identities") {
    Vector e0 = e_of_t({1.0, 2.0}, 0.0);
    CHECK(e0(0) == 0.0);
    CHECK(e0(1) == 1.0);
    CHECK(e0(2) == 0.0);
    CHECK(e0(3) == 1.0);

    Vector eq = e_of_t({1.0}, kPi / 2.0);
    CHECK(eq(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(eq(1)) < 1e-15);

    // |e(t)|^2 = number of frequency pairs, at random times
    NormalStream s({555, 0, Tag::subsample});
    std::vector<double> omegas = {1.0, 2.0, 5.0};
    for (int k = 0; k < 100; ++k) {
        double t = 20.0 * (s.uniform_at(k) - 0.5);
        CHECK(std::abs(e_of_t(omegas, t).squaredNorm() - 3.0) < 1e-12);
    }

    // the affine structure advances the forcing phase by exactly one period
    double T = 2.0;
    AffineStructure aff = build_Q(omegas, T);
    for (int k = 0; k < 100; ++k) {
        double t = 20.0 * (s.uniform_at(200 + k) - 0.5);
        Vector lhs = aff.apply(1, e_of_t(omegas, t));
        Vector rhs = e_of_t(omegas, t + T);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("cubic model satisfies the affine periodicity identity") {
    ModelSpec m = forced_cubic();
    CHECK(m.name == "forced_cubic");
    CHECK(m.dim == 2);
    CHECK(m.noise_dim == 1);

    std::vector<double> ts = {0.0, 0.9, 2.7, 5.1};
    std::vector<Vector> xs;
    NormalStream s({556, 0, Tag::subsample});
    for (int k = 0; k < 5; ++k) {
        Vector x(2);
        x << 2.0 * s.normal_at(2 * k), 2.0 * s.normal_at(2 * k + 1);
        xs.push_back(x);
    }
    AffineResidual res = check_affine_periodicity(m, ts, xs, 1e-9);
    CHECK(res.pass);

    // a second frequency set with a genuinely non-identity Q
    ForcedCubicParams p = ForcedCubicParams::defaults();
    p.T = kPi / 2.0;
    p.a = [](double t) { return 1.0 + 0.5 * std::sin(4.0 * t); };
    p.c = [](double t) { return 0.2 + 0.2 * std::sin(4.0 * t); };
    ModelSpec m2 = forced_cubic(p);
    CHECK((m2.affine.Q() - (Matrix(2, 2) << 0, 1, -1, 0).finished())
              .cwiseAbs()
              .maxCoeff() < 1e-15);
    AffineResidual res2 = check_affine_periodicity(m2, ts, xs, 1e-9);
    CHECK(res2.pass);
}

TEST_CASE("cubic model jacobians match finite differences") {
    ModelSpec m = forced_cubic();
    NormalStream s({557, 0, Tag::subsample});
    for (int trial = 0; trial < 20; ++trial) {
        double t = 7.0 * s.uniform_at(100 + trial);
        Vector x(2);
        x << 2.0 * s.normal_at(2 * trial), 2.0 * s.normal_at(2 * trial + 1);

        Matrix Jf = m.drift_jacobian(t, x);
        Matrix Jg = m.diffusion_jacobian(t, x, 0);
        double h = 1e-6 * (1.0 + x.norm());
        for (int j = 0; j < 2; ++j) {
            Vector xp = x, xm = x;
            xp(j) += h;
            xm(j) -= h;
            Vector df = (m.drift(t, xp) - m.drift(t, xm)) / (2.0 * h);
            Vector dg = (m.diffusion(t, xp).col(0) - m.diffusion(t, xm).col(0)) / (2.0 * h);
            CHECK((df - Jf.col(j)).norm() < 1e-5 * (1.0 + Jf.col(j).norm()));
            CHECK((dg - Jg.col(j)).norm() < 1e-5 * (1.0 + Jg.col(j).norm()));
        }
    }
}

TEST_CASE("cubic model constructor enforces its gates") {
    ForcedCubicParams p = ForcedCubicParams::defaults();
    p.b = 0.01;
    p.c = [](double) { return 1.0; };
    CHECK_THROWS_WITH_AS(forced_cubic(p), doctest::Contains("mean contraction"),
                         std::invalid_argument);

    p = ForcedCubicParams::defaults();
    p.a = [](double t) { return std::sin(t); };  // dips negative
    CHECK_THROWS_WITH_AS(forced_cubic(p), doctest::Contains("negative"),
                         std::invalid_argument);

    p = ForcedCubicParams::defaults();
    p.b = 1.5;
    CHECK_THROWS_AS(forced_cubic(p), std::invalid_argument);

    p = ForcedCubicParams::defaults();
    p.a = [](double) { return 0.0; };
    p.c = [](double) { return 0.0; };
    CHECK_NOTHROW(forced_cubic(p));  // linear submodel, condition -2bT < 0

    // alpha integrates to the same sign as the acceptance gate
    ModelSpec m = forced_cubic();
    double acc = 0.0;
    int n = 400;
    for (int i = 0; i < n; ++i) acc += m.alpha(2.0 * kPi * i / n) * (2.0 * kPi / n);
    CHECK(acc < 0.0);
    CHECK(acc == doctest::Approx(2.0 * kPi * (0.06 - 1.0)).epsilon(1e-3));
}

TEST_CASE("moment solver reproduces the scalar decay law") {
    LinearOracle lo = linear_oracle(0.7, 0.0, {}, 1.0, 1);
    Vector m0(1);
    m0 << 2.0;
    Matrix S0(1, 1);
    S0 << 4.0;  // deterministic start: S = m m^T
    MomentSolution sol = lo.moments(m0, S0, {0.0, 0.5, 1.0, 2.0}, 1e-2);
    for (int k = 0; k < 4; ++k) {
        double t = sol.times[k];
        double want = 2.0 * std::exp(-0.7 * t);
        CHECK(std::abs(sol.mean[k](0) - want) < 1e-10);
        // with c = 0 and no forcing the second moment follows e^{-2bt}
        CHECK(std::abs(sol.second[k](0, 0) - 4.0 * std::exp(-1.4 * t)) < 1e-9);
    }
}

TEST_CASE("moment solver self converges under step halving") {
    LinearOracle lo = linear_oracle(0.5, 0.2, {1.0}, 2.0 * kPi);
    Vector m0 = Vector::Zero(2);
    Matrix S0 = Matrix::Zero(2, 2);
    MomentSolution coarse = lo.moments(m0, S0, {5.0}, 1e-2);
    MomentSolution fine = lo.moments(m0, S0, {5.0}, 5e-3);
    CHECK((coarse.mean[0] - fine.mean[0]).norm() < 1e-9);
    CHECK((coarse.second[0] - fine.second[0]).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("moment solver matches frozen reference trajectories") {
    // reference: adaptive high-order integration of the same ODEs at
    // rtol 1e-12, frozen; start at the origin
    LinearOracle lo = linear_oracle(0.5, 0.2, {1.0}, 2.0 * kPi);
    MomentSolution sol =
        lo.moments(Vector::Zero(2), Matrix::Zero(2, 2), {1.0, 5.0, 10.0}, 1e-3);

    CHECK(sol.mean[0](0) == doctest::Approx(0.389571076998761).epsilon(1e-9));
    CHECK(sol.mean[0](1) == doctest::Approx(0.646685446308523).epsilon(1e-9));
    CHECK(sol.mean_sq(0) == doctest::Approx(1.335135905191103).epsilon(1e-9));

    CHECK(sol.mean[1](0) == doctest::Approx(-0.544831459336715).epsilon(1e-9));
    CHECK(sol.mean[1](1) == doctest::Approx(-0.686508544994782).epsilon(1e-9));
    CHECK(sol.mean_sq(1) == doctest::Approx(2.000509767431367).epsilon(1e-9));

    CHECK(sol.mean[2](0) == doctest::Approx(0.459039136504682).epsilon(1e-9));
    CHECK(sol.mean[2](1) == doctest::Approx(-0.773540679141711).epsilon(1e-9));
    CHECK(sol.mean_sq(2) == doctest::Approx(2.052912551024450).epsilon(1e-9));
}

TEST_CASE("monte carlo second moment tracks the oracle") {
    LinearOracle lo = linear_oracle(0.5, 0.2, {1.0}, 2.0 * kPi);
    Ensemble e = euler_maruyama(lo.model, InitialLaw::point_mass(Vector::Zero(2)),
                                TimeGrid(0.0, 1e-3, 1000), 4000, 2024);
    MomentCurve mc = moment_curve(e);
    MomentSolution sol =
        lo.moments(Vector::Zero(2), Matrix::Zero(2, 2), {1.0}, 1e-3);
    double gap = std::abs(mc.mean_sq(1000) - sol.mean_sq(0));
    CHECK(gap < 4.0 * mc.std_err(1000) + 2e-3);  // MC error plus Euler bias headroom
}

TEST_CASE("oracle validation") {
    CHECK_THROWS_AS(linear_oracle(0.0, 0.1, {1.0}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(linear_oracle(0.5, 0.1, {}, 1.0), std::invalid_argument);
    LinearOracle lo = linear_oracle(0.5, 0.1, {1.0}, 1.0);
    CHECK_THROWS_AS(lo.moments(Vector::Zero(3), Matrix::Zero(3, 3), {1.0}, 1e-2),
                    std::invalid_argument);
    CHECK_THROWS_AS(lo.moments(Vector::Zero(2), Matrix::Zero(2, 2), {2.0, 1.0}, 1e-2),
                    std::invalid_argument);
}

TEST_CASE("drift control moves its mean linearly and spreads") {
    Vector v(2);
    v << 1.0, 0.0;
    ModelSpec m = drift_control(v);
    CHECK(m.name == "drift_control");
    CHECK(m.noise_dim == 2);
    CHECK(m.affine.period() == 1.0);

    Vector x0(2);
    x0 << 0.5, -0.5;
    Ensemble e = euler_maruyama(m, InitialLaw::point_mass(x0),
                                TimeGrid(0.0, 1e-3, 3000), 3000, 99);
    // E X(3) = x0 + 3v, E|X(3)|^2 = |x0 + 3v|^2 + l t
    int node = e.node_at(3.0);
    Vector mean = Vector::Zero(2);
    for (int p = 0; p < e.n_paths(); ++p) mean += e.state(p, node);
    mean /= e.n_paths();
    CHECK((mean - (x0 + 3.0 * v)).norm() < 4.0 * std::sqrt(2.0 * 3.0 / 3000.0));

    MomentCurve mc = moment_curve(e);
    double want = (x0 + 3.0 * v).squaredNorm() + 2.0 * 3.0;
    CHECK(std::abs(mc.mean_sq(node) - want) < 4.0 * mc.std_err(node));

    CHECK_THROWS_AS(drift_control(Vector::Zero(2)), std::invalid_argument);
}

TEST_CASE("envelope inputs carry the a priori constants") {
    ForcedCubicParams p = ForcedCubicParams::defaults();
    EnvelopeInputs env = forced_cubic_envelope_inputs(p, 1.0);
    // sup c^2 = 0.16, so B(0) = (0.32 + 1 - 0.5)/2 = 0.41
    CHECK(env.A == doctest::Approx(1.0 + 3.0 / (2.0 * 0.5)).epsilon(1e-12));
    CHECK(env.B(0.0) == doctest::Approx(0.41).epsilon(1e-9));
    CHECK(env.B(1.0) == doctest::Approx(0.41 * std::exp(-1.0)).epsilon(1e-9));
    CHECK(env.K(2.0) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("periodic skeleton start and discretization floor") {
    Vector x0 = skeleton_periodic_start(0.5, {1.0});
    CHECK(x0(0) == doctest::Approx(-0.8).epsilon(1e-12));
    CHECK(x0(1) == doctest::Approx(0.4).epsilon(1e-12));

    // frozen from an independent run of the same recurrence
    double T = 2.0 * kPi;
    CHECK(skeleton_discretization_floor(0.5, {1.0}, T, T / 1000.0) ==
          doctest::Approx(5.799573e-6).epsilon(1e-6));
    CHECK(skeleton_discretization_floor(0.5, {1.0}, T, T / 2000.0) ==
          doctest::Approx(1.447746e-6).epsilon(1e-6));

    CHECK_THROWS_AS(skeleton_discretization_floor(0.5, {1.0}, T, 0.0013),
                    std::invalid_argument);
}
