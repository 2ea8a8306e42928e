#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace afp::rng {

// Substream tags keep noise, initial sampling, and subsampling draws on
// non-overlapping streams even when they share a base seed.
enum class Tag : std::uint32_t { increments = 1, initial = 2, subsample = 3 };

const char* tag_name(Tag t);

struct StreamKey {
    std::uint64_t base_seed = 0;
    std::uint64_t path_index = 0;
    Tag tag = Tag::increments;
};

// Counter-based Gaussian/uniform stream (Philox4x32-10 underneath).  Draw i of
// any stream is addressable directly, so path p's noise never depends on
// whether paths 0..p-1 were generated, and a run can resume mid-stream
// bit-identically.  Box-Muller on full 64-bit lanes; two draws per block.
class NormalStream {
public:
    explicit NormalStream(const StreamKey& key);

    double normal_at(std::uint64_t i) const;
    double uniform_at(std::uint64_t i) const;  // strictly inside (0,1)

private:
    std::uint32_t key0_, key1_;  // derived from (base_seed, tag)
    std::uint32_t c2_, c3_;      // path index occupies the counter's high half
    mutable std::uint64_t cached_block_ = ~std::uint64_t(0);
    mutable double u_[2];
    mutable double z_[2];
    void load(std::uint64_t block) const;
};

// Raw Philox block, exposed for the known-answer tests.
void philox4x32_10(const std::uint32_t ctr[4], const std::uint32_t key[2],
                   std::uint32_t out[4]);

// n i.i.d. N(0, dt) draws, fully determined by the key.
Eigen::VectorXd gaussian_increments(const StreamKey& key, int n, double dt);

// Initial-law descriptor: point mass, Gaussian(mean, cov), or resampling of a
// stored empirical support.
struct InitialLaw {
    enum class Kind { point, gaussian, empirical };
    Kind kind = Kind::point;

    Eigen::VectorXd point;

    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    Eigen::MatrixXd support;   // n x l
    Eigen::VectorXd weights;   // n, summing to 1

    static InitialLaw point_mass(const Eigen::VectorXd& x0);
    static InitialLaw gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);
    static InitialLaw empirical(const Eigen::MatrixXd& support, const Eigen::VectorXd& weights);

    int dim() const;
};

// n states in R^l, deterministic given the key.  Row p uses draw indices
// derived from p alone, so per-path initial states are worker-count invariant.
Eigen::MatrixXd sample_initial(const StreamKey& key, const InitialLaw& law, int n);

}  // namespace afp::rng
