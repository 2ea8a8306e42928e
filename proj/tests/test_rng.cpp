#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <set>

#include "afp/rng.hpp"

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using afp::rng::NormalStream;
using afp::rng::StreamKey;
using afp::rng::Tag;

TEST_CASE("philox counter block known answers") {
    uint32_t out[4];

    const uint32_t zeros[4] = {0, 0, 0, 0};
    const uint32_t zkey[2] = {0, 0};
    afp::rng::philox4x32_10(zeros, zkey, out);
    CHECK(out[0] == 0x6627e8d5u);
    CHECK(out[1] == 0xe169c58du);
    CHECK(out[2] == 0xbc57ac4cu);
    CHECK(out[3] == 0x9b00dbd8u);

    const uint32_t ones[4] = {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu};
    const uint32_t okey[2] = {0xffffffffu, 0xffffffffu};
    afp::rng::philox4x32_10(ones, okey, out);
    CHECK(out[0] == 0x408f276du);
    CHECK(out[1] == 0x41c83b0eu);
    CHECK(out[2] == 0xa20bc7c6u);
    CHECK(out[3] == 0x6d5451fdu);

    const uint32_t pic[4] = {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u};
    const uint32_t pik[2] = {0xa4093822u, 0x299f31d0u};
    afp::rng::philox4x32_10(pic, pik, out);
    CHECK(out[0] == 0xd16cfe09u);
    CHECK(out[1] == 0x94fdccebu);
    CHECK(out[2] == 0x5001e420u);
    CHECK(out[3] == 0x24126ea1u);
}

TEST_CASE("indexed draws are order independent and reproducible") {
    NormalStream s({42, 7, Tag::increments});
    double fwd0 = s.normal_at(0);
    double fwd5 = s.normal_at(5);
    double fwd999 = s.normal_at(999);

    NormalStream r({42, 7, Tag::increments});
    CHECK(r.normal_at(999) == fwd999);
    CHECK(r.normal_at(0) == fwd0);
    CHECK(r.normal_at(5) == fwd5);

    // same base seed, different path or tag must decorrelate at index level
    NormalStream other_path({42, 8, Tag::increments});
    NormalStream other_tag({42, 7, Tag::initial});
    CHECK(other_path.normal_at(0) != fwd0);
    CHECK(other_tag.normal_at(0) != fwd0);
}

TEST_CASE("uniform lane stays inside the open unit interval") {
    NormalStream s({1234, 0, Tag::subsample});
    for (uint64_t i = 0; i < 4096; ++i) {
        double u = s.uniform_at(i);
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("normal draws match standard moments") {
    NormalStream s({2026, 3, Tag::increments});
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = s.normal_at(uint64_t(i));
        sum += z;
        sumsq += z * z;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    // 4 sigma bounds: sd(mean) = 1/sqrt(n), sd(var) ~ sqrt(2/n)
    CHECK(std::abs(mean) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("streams for distinct paths are uncorrelated") {
    NormalStream a({555, 0, Tag::increments});
    NormalStream b({555, 1, Tag::increments});
    const int n = 10000;
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += a.normal_at(uint64_t(i)) * b.normal_at(uint64_t(i));
    CHECK(std::abs(dot / n) < 4.0 / std::sqrt(double(n)));
}

TEST_CASE("gaussian increments carry the step variance") {
    const double dt = 0.25;
    const int n = 100000;
    Vector dw = afp::rng::gaussian_increments({99, 0, Tag::increments}, n, dt);
    REQUIRE(dw.size() == n);
    double mean = dw.mean();
    double var = dw.squaredNorm() / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 * std::sqrt(dt / n));
    CHECK(std::abs(var - dt) < 4.0 * dt * std::sqrt(2.0 / n));

    CHECK_THROWS_AS(afp::rng::gaussian_increments({99, 0, Tag::increments}, 0, dt),
                    std::invalid_argument);
    CHECK_THROWS_AS(afp::rng::gaussian_increments({99, 0, Tag::increments}, 8, -1.0),
                    std::invalid_argument);
}

TEST_CASE("point mass initial law replicates the atom") {
    Vector x0(2);
    x0 << -0.8, 0.4;
    auto law = afp::rng::InitialLaw::point_mass(x0);
    Matrix s = afp::rng::sample_initial({7, 0, Tag::initial}, law, 17);
    REQUIRE(s.rows() == 17);
    REQUIRE(s.cols() == 2);
    for (int p = 0; p < s.rows(); ++p) {
        CHECK(s(p, 0) == -0.8);
        CHECK(s(p, 1) == 0.4);
    }
}

TEST_CASE("gaussian initial law matches mean and covariance") {
    Vector mu(2);
    mu << 1.0, -2.0;
    Matrix cov(2, 2);
    cov << 0.5, 0.2, 0.2, 0.3;
    auto law = afp::rng::InitialLaw::gaussian(mu, cov);
    const int n = 200000;
    Matrix s = afp::rng::sample_initial({11, 0, Tag::initial}, law, n);
    Vector m = s.colwise().mean();
    Matrix centered = s.rowwise() - m.transpose();
    Matrix c = centered.transpose() * centered / double(n);
    CHECK(std::abs(m(0) - 1.0) < 0.02);
    CHECK(std::abs(m(1) + 2.0) < 0.02);
    CHECK((c - cov).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("gaussian initial law rejects indefinite covariance") {
    Vector mu = Vector::Zero(2);
    Matrix bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
    CHECK_THROWS_AS(afp::rng::InitialLaw::gaussian(mu, bad), std::invalid_argument);
}

TEST_CASE("empirical initial law draws only listed atoms with the right rates") {
    Matrix support(3, 1);
    support << 0.0, 1.0, 5.0;
    Vector w(3);
    w << 0.5, 0.3, 0.2;
    auto law = afp::rng::InitialLaw::empirical(support, w);
    const int n = 100000;
    Matrix s = afp::rng::sample_initial({13, 0, Tag::initial}, law, n);
    int counts[3] = {0, 0, 0};
    for (int p = 0; p < n; ++p) {
        double v = s(p, 0);
        if (v == 0.0)
            ++counts[0];
        else if (v == 1.0)
            ++counts[1];
        else if (v == 5.0)
            ++counts[2];
        else
            FAIL("atom not in support: ", v);
    }
    CHECK(std::abs(counts[0] / double(n) - 0.5) < 0.01);
    CHECK(std::abs(counts[1] / double(n) - 0.3) < 0.01);
    CHECK(std::abs(counts[2] / double(n) - 0.2) < 0.01);
}

TEST_CASE("empirical initial law validates weights") {
    Matrix support(2, 1);
    support << 0.0, 1.0;
    Vector neg(2);
    neg << 1.2, -0.2;
    CHECK_THROWS_AS(afp::rng::InitialLaw::empirical(support, neg), std::invalid_argument);
    Vector off(2);
    off << 0.6, 0.6;
    CHECK_THROWS_AS(afp::rng::InitialLaw::empirical(support, off), std::invalid_argument);
}
