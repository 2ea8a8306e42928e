#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "afp/rng.hpp"

namespace afp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Spatial shift structure of the coefficients: f(t+T, x) = Q f(t, Q^{-1}x),
// likewise for g.  Immutable after construction; power tables are filled up
// front so shared read-only use across workers is safe.
class AffineStructure {
public:
    AffineStructure(Matrix Q, double T, int cache_depth = 32);

    const Matrix& Q() const { return Q_; }
    double period() const { return T_; }
    int dim() const { return int(Q_.rows()); }
    bool orthogonal() const { return orthogonal_; }
    int cache_depth() const { return depth_; }

    // Q^k for any integer k; cached through |k| <= cache_depth, composed from
    // cached blocks beyond that.
    Matrix power(int k) const;
    Vector apply(int k, const Vector& x) const;

private:
    Matrix Q_;
    double T_;
    bool orthogonal_;
    int depth_;
    std::vector<Matrix> pos_;  // pos_[k] = Q^k,    k = 0..depth
    std::vector<Matrix> neg_;  // neg_[k] = Q^{-k}, k = 0..depth
};

inline Vector apply_affine(const AffineStructure& aff, int k, const Vector& x) {
    return aff.apply(k, x);
}

struct TimeGrid {
    double t0 = 0.0;
    double dt = 0.0;
    int n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double t0_, double dt_, int n_steps_);
    double time(int i) const { return t0 + i * dt; }
    double t_end() const { return time(n_steps); }
};

struct ModelSpec {
    std::string name;
    int dim = 0;        // state dimension l (<= 16 in every built-in)
    int noise_dim = 0;  // Brownian dimension m

    std::function<Vector(double, const Vector&)> drift;              // l
    std::function<Matrix(double, const Vector&)> diffusion;          // l x m
    AffineStructure affine;

    // Optional analytic derivatives; checkers fall back to finite differences.
    std::function<Matrix(double, const Vector&)> drift_jacobian;          // l x l
    std::function<Matrix(double, const Vector&, int)> diffusion_jacobian; // l x l, column i

    // Decay-rate function exposed by models that have one; contraction
    // estimators compare measured slopes against its running mean.
    std::function<double(double)> alpha;

    ModelSpec(std::string name_, int dim_, int noise_dim_,
              std::function<Vector(double, const Vector&)> drift_,
              std::function<Matrix(double, const Vector&)> diffusion_,
              AffineStructure affine_);

    void validate_shapes() const;  // probes drift/diffusion once
};

struct AffineResidual {
    double max_residual_f = 0.0;
    double max_residual_g = 0.0;
    bool pass = false;
};

// Largest violation of f(t+T,x) = Q f(t, Q^{-1}x) and the g analogue over the
// sample lists (max-abs entry).
AffineResidual check_affine_periodicity(const ModelSpec& model,
                                        const std::vector<double>& t_samples,
                                        const std::vector<Vector>& x_samples,
                                        double tol);

struct PathFlag {
    int path = 0;
    int step = 0;
    double norm = 0.0;  // |X| at the flagged step (NaN if non-finite)
};

// Simulated paths stored on a recorded sub-grid.  grid.dt is the recording
// step; sim_dt is the integration step actually taken (grid.dt = stride *
// sim_dt).  Storage is path-major; workers write disjoint path ranges.
class Ensemble {
public:
    Ensemble(TimeGrid grid, int n_paths, int dim, double sim_dt,
             std::uint64_t base_seed, std::string model_name);

    const TimeGrid& grid() const { return grid_; }
    int n_paths() const { return n_paths_; }
    int dim() const { return dim_; }
    int n_nodes() const { return grid_.n_steps + 1; }
    double sim_dt() const { return sim_dt_; }
    std::uint64_t base_seed() const { return base_seed_; }
    const std::string& model_name() const { return model_name_; }

    Eigen::Map<const Vector> state(int path, int node) const;
    Eigen::Map<Vector> state(int path, int node);

    // Nearest node for t; throws when t misses every node by more than dt/2.
    int node_at(double t) const;
    Matrix section(int node) const;  // n_paths x dim

    std::vector<PathFlag>& flags() { return flags_; }
    const std::vector<PathFlag>& flags() const { return flags_; }
    std::vector<std::string>& warnings() { return warnings_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    void check_finite() const;  // throws with path/node context

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

private:
    TimeGrid grid_;
    int n_paths_, dim_;
    double sim_dt_;
    std::uint64_t base_seed_;
    std::string model_name_;
    std::vector<double> data_;
    std::vector<PathFlag> flags_;
    std::vector<std::string> warnings_;
};

}  // namespace afp
