#include "afp/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace afp::rng {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::uint32_t c[4], const std::uint32_t k[2]) {
    const std::uint64_t p0 = std::uint64_t(kPhiloxM0) * c[0];
    const std::uint64_t p1 = std::uint64_t(kPhiloxM1) * c[2];
    const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
    const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
    const std::uint32_t n0 = hi1 ^ c[1] ^ k[0];
    const std::uint32_t n2 = hi0 ^ c[3] ^ k[1];
    c[0] = n0;
    c[1] = lo1;
    c[2] = n2;
    c[3] = lo0;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline double lane_uniform(std::uint32_t lo, std::uint32_t hi) {
    const std::uint64_t bits = (std::uint64_t(hi) << 32) | lo;
    // 53 mantissa bits, offset half an ulp: result lies strictly inside (0,1)
    return (double(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

const char* tag_name(Tag t) {
    switch (t) {
        case Tag::increments: return "increments";
        case Tag::initial: return "initial";
        case Tag::subsample: return "subsample";
    }
    return "?";
}

void philox4x32_10(const std::uint32_t ctr[4], const std::uint32_t key[2],
                   std::uint32_t out[4]) {
    std::uint32_t c[4] = {ctr[0], ctr[1], ctr[2], ctr[3]};
    std::uint32_t k[2] = {key[0], key[1]};
    philox_round(c, k);
    for (int r = 1; r < 10; ++r) {
        k[0] += kPhiloxW0;
        k[1] += kPhiloxW1;
        philox_round(c, k);
    }
    for (int i = 0; i < 4; ++i) out[i] = c[i];
}

NormalStream::NormalStream(const StreamKey& key) {
    const std::uint64_t k =
        splitmix64(splitmix64(key.base_seed) ^ std::uint64_t(key.tag));
    key0_ = std::uint32_t(k);
    key1_ = std::uint32_t(k >> 32);
    c2_ = std::uint32_t(key.path_index);
    c3_ = std::uint32_t(key.path_index >> 32);
}

void NormalStream::load(std::uint64_t block) const {
    const std::uint32_t ctr[4] = {std::uint32_t(block), std::uint32_t(block >> 32),
                                  c2_, c3_};
    const std::uint32_t key[2] = {key0_, key1_};
    std::uint32_t x[4];
    philox4x32_10(ctr, key, x);
    u_[0] = lane_uniform(x[0], x[1]);
    u_[1] = lane_uniform(x[2], x[3]);
    const double r = std::sqrt(-2.0 * std::log(u_[0]));
    const double th = 2.0 * std::numbers::pi * u_[1];
    z_[0] = r * std::cos(th);
    z_[1] = r * std::sin(th);
    cached_block_ = block;
}

double NormalStream::normal_at(std::uint64_t i) const {
    const std::uint64_t block = i >> 1;
    if (block != cached_block_) load(block);
    return z_[i & 1];
}

double NormalStream::uniform_at(std::uint64_t i) const {
    const std::uint64_t block = i >> 1;
    if (block != cached_block_) load(block);
    return u_[i & 1];
}

Eigen::VectorXd gaussian_increments(const StreamKey& key, int n, double dt) {
    if (n < 1) throw std::invalid_argument("gaussian_increments: n must be >= 1");
    if (!(dt > 0)) throw std::invalid_argument("gaussian_increments: dt must be > 0");
    NormalStream s(key);
    const double sd = std::sqrt(dt);
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) out[i] = sd * s.normal_at(std::uint64_t(i));
    return out;
}

InitialLaw InitialLaw::point_mass(const Eigen::VectorXd& x0) {
    InitialLaw law;
    law.kind = Kind::point;
    law.point = x0;
    return law;
}

InitialLaw InitialLaw::gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    if (cov.rows() != cov.cols() || cov.rows() != mean.size())
        throw std::invalid_argument("InitialLaw: covariance shape mismatch");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() >
        1e-10 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("InitialLaw: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (eig.eigenvalues().minCoeff() < -1e-12 * scale)
        throw std::invalid_argument("InitialLaw: covariance not positive semidefinite");
    InitialLaw law;
    law.kind = Kind::gaussian;
    law.mean = mean;
    law.cov = cov;
    return law;
}

InitialLaw InitialLaw::empirical(const Eigen::MatrixXd& support, const Eigen::VectorXd& weights) {
    if (support.rows() != weights.size() || support.rows() == 0)
        throw std::invalid_argument("InitialLaw: empirical support/weights mismatch");
    if (weights.minCoeff() < 0)
        throw std::invalid_argument("InitialLaw: negative weight");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("InitialLaw: weights must sum to 1");
    InitialLaw law;
    law.kind = Kind::empirical;
    law.support = support;
    law.weights = weights;
    return law;
}

int InitialLaw::dim() const {
    switch (kind) {
        case Kind::point: return int(point.size());
        case Kind::gaussian: return int(mean.size());
        case Kind::empirical: return int(support.cols());
    }
    return 0;
}

Eigen::MatrixXd sample_initial(const StreamKey& key, const InitialLaw& law, int n) {
    if (n < 1) throw std::invalid_argument("sample_initial: n must be >= 1");
    const int l = law.dim();
    if (l < 1) throw std::invalid_argument("sample_initial: empty law");
    Eigen::MatrixXd out(n, l);

    switch (law.kind) {
        case InitialLaw::Kind::point:
            out.rowwise() = law.point.transpose();
            break;

        case InitialLaw::Kind::gaussian: {
            // Symmetric square root; tolerates semidefinite covariances
            // (degenerate directions sample as exact zeros).
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(law.cov);
            const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
            if (es.eigenvalues().minCoeff() < -1e-12 * scale)
                throw std::invalid_argument("sample_initial: covariance not positive semidefinite");
            const Eigen::MatrixXd root =
                es.eigenvectors() *
                es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                es.eigenvectors().transpose();
            NormalStream s(key);
            Eigen::VectorXd z(l);
            for (int p = 0; p < n; ++p) {
                for (int j = 0; j < l; ++j)
                    z[j] = s.normal_at(std::uint64_t(p) * l + j);
                out.row(p) = (law.mean + root * z).transpose();
            }
            break;
        }

        case InitialLaw::Kind::empirical: {
            const int ns = int(law.support.rows());
            Eigen::VectorXd cum(ns);
            double acc = 0;
            for (int i = 0; i < ns; ++i) {
                acc += law.weights[i];
                cum[i] = acc;
            }
            cum[ns - 1] = 1.0;  // guard against rounding at the top end
            NormalStream s(key);
            for (int p = 0; p < n; ++p) {
                const double u = s.uniform_at(std::uint64_t(p));
                const double* lo = std::lower_bound(cum.data(), cum.data() + ns, u);
                out.row(p) = law.support.row(int(lo - cum.data()));
            }
            break;
        }
    }
    return out;
}

}  // namespace afp::rng
