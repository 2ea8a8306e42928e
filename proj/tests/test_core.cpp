#include "doctest.h"

#include <cmath>

#include "afp/core.hpp"

using namespace afp;

namespace {

Matrix rotation2(double theta) {
    Matrix Q(2, 2);
    Q << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return Q;
}

}  // namespace

TEST_CASE("affine structure detects orthogonality and caches inverse powers") {
    AffineStructure aff(rotation2(0.3), 1.0, 8);
    CHECK(aff.orthogonal());
    CHECK(aff.dim() == 2);

    // composition law across the cache boundary
    for (int a : {-20, -8, -3, 0, 2, 8, 19}) {
        for (int b : {-9, -1, 0, 4, 15}) {
            Matrix lhs = aff.power(a + b);
            Matrix rhs = aff.power(a) * aff.power(b);
            CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
        }
    }

    // rotations act as isometries
    Vector x(2);
    x << 1.7, -0.4;
    for (int k : {-33, -5, 1, 12, 40}) {
        CHECK(aff.apply(k, x).norm() == doctest::Approx(x.norm()).epsilon(1e-12));
    }
    // power(k) agrees with the closed form
    Matrix direct = rotation2(17 * 0.3);
    CHECK((aff.power(17) - direct).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("affine structure handles non orthogonal invertible matrices") {
    Matrix Q(2, 2);
    Q << 2.0, 1.0, 0.0, 0.5;
    AffineStructure aff(Q, 2.0, 6);
    CHECK_FALSE(aff.orthogonal());
    Matrix I = Matrix::Identity(2, 2);
    CHECK((aff.power(3) * aff.power(-3) - I).cwiseAbs().maxCoeff() < 1e-10);
    Vector x(2);
    x << 1.0, 1.0;
    CHECK((aff.apply(-1, aff.apply(1, x)) - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("affine structure rejects bad input") {
    Matrix Q = Matrix::Zero(2, 2);
    CHECK_THROWS_AS(AffineStructure(Q, 1.0), std::invalid_argument);

    Matrix sing(2, 2);
    sing << 1.0, 2.0, 2.0, 4.0;
    CHECK_THROWS_AS(AffineStructure(sing, 1.0), std::invalid_argument);

    CHECK_THROWS_AS(AffineStructure(rotation2(0.1), -1.0), std::invalid_argument);
    CHECK_THROWS_AS(AffineStructure(Matrix::Identity(2, 3), 1.0), std::invalid_argument);
}

TEST_CASE("time grid basics") {
    TimeGrid g(0.5, 0.25, 4);
    CHECK(g.time(0) == 0.5);
    CHECK(g.time(4) == doctest::Approx(1.5));
    CHECK(g.t_end() == doctest::Approx(1.5));
    CHECK_THROWS_AS(TimeGrid(0.0, 0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(0.0, 0.1, 0), std::invalid_argument);
}

namespace {

ModelSpec toy_periodic_model(double T) {
    // rotating linear drift: f(t, x) = R(t) x with R(t+T) = Q R(t) Q^{-1}
    Matrix Q = rotation2(0.7);
    auto drift = [Q, T](double t, const Vector& x) -> Vector {
        int k = int(std::floor(t / T));
        Matrix Rt = Q;
        (void)Rt;
        // scalar gain periodic in t times a Q-conjugated fixed matrix
        Matrix A(2, 2);
        A << -1.0, 0.2, -0.2, -1.0;  // commutes with rotations
        return (1.0 + 0.5 * std::sin(2.0 * M_PI * t / T)) * (A * x) + Vector::Zero(2) * k;
    };
    auto diff = [T](double t, const Vector& x) -> Matrix {
        Matrix g(2, 1);
        g << 0.1 * std::cos(2.0 * M_PI * t / T) * x(0), 0.1 * x(1);
        return g;
    };
    return ModelSpec("toy", 2, 1, drift, diff, AffineStructure(Q, T));
}

}  // namespace

TEST_CASE("affine periodicity check passes commuting construction and flags breakage") {
    ModelSpec m = toy_periodic_model(1.0);
    m.validate_shapes();

    std::vector<double> ts = {0.0, 0.3, 0.77, 1.4};
    std::vector<Vector> xs;
    Vector a(2), b(2);
    a << 1.0, -2.0;
    b << 0.25, 0.1;
    xs.push_back(a);
    xs.push_back(b);

    // diffusion above is diagonal with distinct entries, so it does not commute
    // with the rotation: expect the g residual to be caught
    AffineResidual res = check_affine_periodicity(m, ts, xs, 1e-9);
    CHECK(res.max_residual_f < 1e-9);
    CHECK(res.max_residual_g > 1e-3);
    CHECK_FALSE(res.pass);

    // scalar diffusion commutes with everything
    ModelSpec ok = m;
    ok.diffusion = [](double t, const Vector& x) -> Matrix {
        Matrix g(2, 1);
        g.col(0) = (0.1 + 0.05 * std::sin(2.0 * M_PI * t)) * x;
        return g;
    };
    AffineResidual res2 = check_affine_periodicity(ok, ts, xs, 1e-9);
    CHECK(res2.pass);
}

TEST_CASE("model spec validates dimensions") {
    Matrix Q = Matrix::Identity(2, 2);
    auto f = [](double, const Vector& x) -> Vector { return -x; };
    auto g = [](double, const Vector& x) -> Matrix {
        Matrix out(2, 1);
        out.col(0) = 0.1 * x;
        return out;
    };
    CHECK_THROWS_AS(ModelSpec("bad", 0, 1, f, g, AffineStructure(Q, 1.0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(ModelSpec("bad", 17, 1, f, g, AffineStructure(Matrix::Identity(17, 17), 1.0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(ModelSpec("bad", 3, 1, f, g, AffineStructure(Q, 1.0)),
                    std::invalid_argument);

    ModelSpec good("ok", 2, 1, f, g, AffineStructure(Q, 1.0));
    good.validate_shapes();

    ModelSpec wrong = good;
    wrong.diffusion = [](double, const Vector& x) -> Matrix {
        return Matrix::Zero(3, 1) * x.sum();
    };
    CHECK_THROWS_AS(wrong.validate_shapes(), std::invalid_argument);
}

TEST_CASE("ensemble storage and sections") {
    TimeGrid grid(0.0, 0.5, 4);
    Ensemble e(grid, 3, 2, 0.1, 42, "toy");
    CHECK(e.n_nodes() == 5);
    CHECK(e.sim_dt() == 0.1);
    CHECK(e.base_seed() == 42);
    CHECK(e.model_name() == "toy");

    for (int p = 0; p < 3; ++p)
        for (int i = 0; i <= 4; ++i) {
            e.state(p, i)(0) = 10.0 * p + i;
            e.state(p, i)(1) = -double(i);
        }

    CHECK(e.state(2, 3)(0) == 23.0);
    Matrix sec = e.section(4);
    CHECK(sec.rows() == 3);
    CHECK(sec.cols() == 2);
    CHECK(sec(1, 0) == 14.0);
    CHECK(sec(0, 1) == -4.0);

    CHECK(e.node_at(1.5) == 3);
    CHECK(e.node_at(1.3) == 3);  // snaps to the nearest node within dt/2
    CHECK_THROWS_AS(e.node_at(-0.7), std::invalid_argument);
    CHECK_THROWS_AS(e.node_at(2.3), std::invalid_argument);
    CHECK_THROWS_AS(e.section(5), std::invalid_argument);

    e.check_finite();
    e.state(1, 2)(0) = std::nan("");
    CHECK_THROWS_AS(e.check_finite(), std::runtime_error);

    CHECK_THROWS_AS(Ensemble(grid, 1, 2, 0.1, 0, "x"), std::invalid_argument);
}
