#include "afp/core.hpp"

#include <cmath>
#include <sstream>

namespace afp {

AffineStructure::AffineStructure(Matrix Q, double T, int cache_depth)
    : Q_(std::move(Q)), T_(T), depth_(cache_depth) {
    if (Q_.rows() != Q_.cols() || Q_.rows() == 0)
        throw std::invalid_argument("affine structure: Q must be square and nonempty");
    if (!(T_ > 0.0))
        throw std::invalid_argument("affine structure: period must be positive");
    if (depth_ < 1) throw std::invalid_argument("affine structure: cache depth < 1");

    int l = int(Q_.rows());
    Matrix I = Matrix::Identity(l, l);

    double scale = Q_.cwiseAbs().maxCoeff();
    if (!(scale > 0.0) || !Q_.allFinite())
        throw std::invalid_argument("affine structure: Q has non-finite or all-zero entries");

    orthogonal_ = (Q_.transpose() * Q_ - I).cwiseAbs().maxCoeff() <= 1e-10;

    Matrix Qinv;
    if (orthogonal_) {
        Qinv = Q_.transpose();
    } else {
        Eigen::FullPivLU<Matrix> lu(Q_);
        // relative threshold: |det| compared against scale^l
        double det = std::abs(lu.determinant());
        if (det <= 1e-12 * std::pow(scale, l))
            throw std::invalid_argument("affine structure: Q is numerically singular");
        Qinv = lu.inverse();
    }

    pos_.resize(depth_ + 1);
    neg_.resize(depth_ + 1);
    pos_[0] = I;
    neg_[0] = I;
    for (int k = 1; k <= depth_; ++k) {
        pos_[k] = pos_[k - 1] * Q_;
        neg_[k] = neg_[k - 1] * Qinv;
    }

    // round-trip check at full depth catches inverses poisoned by conditioning
    double rt = (pos_[depth_] * neg_[depth_] - I).cwiseAbs().maxCoeff();
    if (rt > 1e-9)
        throw std::invalid_argument(
            "affine structure: Q^depth * Q^-depth deviates from identity by " +
            std::to_string(rt));
}

Matrix AffineStructure::power(int k) const {
    const std::vector<Matrix>& table = k >= 0 ? pos_ : neg_;
    int a = std::abs(k);
    if (a <= depth_) return table[a];
    Matrix out = table[depth_];
    a -= depth_;
    while (a > depth_) {
        out = out * table[depth_];
        a -= depth_;
    }
    return out * table[a];
}

Vector AffineStructure::apply(int k, const Vector& x) const {
    if (x.size() != Q_.rows())
        throw std::invalid_argument("affine apply: dimension mismatch");
    int a = std::abs(k);
    if (a <= depth_) {
        const std::vector<Matrix>& table = k >= 0 ? pos_ : neg_;
        return table[a] * x;
    }
    return power(k) * x;
}

TimeGrid::TimeGrid(double t0_, double dt_, int n_steps_)
    : t0(t0_), dt(dt_), n_steps(n_steps_) {
    if (!(dt > 0.0)) throw std::invalid_argument("time grid: dt must be positive");
    if (n_steps < 1) throw std::invalid_argument("time grid: need at least one step");
    if (!std::isfinite(t0)) throw std::invalid_argument("time grid: t0 not finite");
}

ModelSpec::ModelSpec(std::string name_, int dim_, int noise_dim_,
                     std::function<Vector(double, const Vector&)> drift_,
                     std::function<Matrix(double, const Vector&)> diffusion_,
                     AffineStructure affine_)
    : name(std::move(name_)),
      dim(dim_),
      noise_dim(noise_dim_),
      drift(std::move(drift_)),
      diffusion(std::move(diffusion_)),
      affine(std::move(affine_)) {
    if (dim < 1 || dim > 16)
        throw std::invalid_argument("model: state dimension must be in [1, 16]");
    if (noise_dim < 1) throw std::invalid_argument("model: noise dimension < 1");
    if (!drift || !diffusion) throw std::invalid_argument("model: drift/diffusion required");
    if (affine.dim() != dim)
        throw std::invalid_argument("model: affine structure dimension mismatch");
}

void ModelSpec::validate_shapes() const {
    Vector x = Vector::Zero(dim);
    Vector f = drift(0.0, x);
    if (f.size() != dim) throw std::invalid_argument("model: drift returns wrong dimension");
    Matrix g = diffusion(0.0, x);
    if (g.rows() != dim || g.cols() != noise_dim)
        throw std::invalid_argument("model: diffusion returns wrong shape");
}

AffineResidual check_affine_periodicity(const ModelSpec& model,
                                        const std::vector<double>& t_samples,
                                        const std::vector<Vector>& x_samples,
                                        double tol) {
    if (t_samples.empty() || x_samples.empty())
        throw std::invalid_argument("affine check: empty sample lists");
    const AffineStructure& aff = model.affine;
    double T = aff.period();
    AffineResidual res;
    for (double t : t_samples) {
        for (const Vector& x : x_samples) {
            if (x.size() != model.dim)
                throw std::invalid_argument("affine check: sample dimension mismatch");
            Vector xi = aff.apply(-1, x);
            double rf = (model.drift(t + T, x) - aff.apply(1, model.drift(t, xi)))
                            .cwiseAbs()
                            .maxCoeff();
            Matrix gs = aff.power(1) * model.diffusion(t, xi);
            double rg = (model.diffusion(t + T, x) - gs).cwiseAbs().maxCoeff();
            res.max_residual_f = std::max(res.max_residual_f, rf);
            res.max_residual_g = std::max(res.max_residual_g, rg);
        }
    }
    res.pass = res.max_residual_f <= tol && res.max_residual_g <= tol;
    return res;
}

Ensemble::Ensemble(TimeGrid grid, int n_paths, int dim, double sim_dt,
                   std::uint64_t base_seed, std::string model_name)
    : grid_(grid),
      n_paths_(n_paths),
      dim_(dim),
      sim_dt_(sim_dt),
      base_seed_(base_seed),
      model_name_(std::move(model_name)) {
    if (n_paths_ < 2) throw std::invalid_argument("ensemble: need at least 2 paths");
    if (dim_ < 1) throw std::invalid_argument("ensemble: dimension < 1");
    if (!(sim_dt_ > 0.0)) throw std::invalid_argument("ensemble: sim_dt must be positive");
    std::size_t total = std::size_t(n_paths_) * std::size_t(grid_.n_steps + 1) * dim_;
    data_.assign(total, 0.0);
}

Eigen::Map<const Vector> Ensemble::state(int path, int node) const {
    std::size_t off =
        (std::size_t(path) * (grid_.n_steps + 1) + std::size_t(node)) * dim_;
    return Eigen::Map<const Vector>(data_.data() + off, dim_);
}

Eigen::Map<Vector> Ensemble::state(int path, int node) {
    std::size_t off =
        (std::size_t(path) * (grid_.n_steps + 1) + std::size_t(node)) * dim_;
    return Eigen::Map<Vector>(data_.data() + off, dim_);
}

int Ensemble::node_at(double t) const {
    double pos = (t - grid_.t0) / grid_.dt;
    int node = int(std::lround(pos));
    if (node < 0 || node > grid_.n_steps ||
        std::abs(t - grid_.time(node)) > 0.5 * grid_.dt) {
        std::ostringstream msg;
        msg << "ensemble: t = " << t << " not on recorded grid [" << grid_.t0 << ", "
            << grid_.t_end() << "] step " << grid_.dt;
        throw std::invalid_argument(msg.str());
    }
    return node;
}

Matrix Ensemble::section(int node) const {
    if (node < 0 || node > grid_.n_steps)
        throw std::invalid_argument("ensemble: section node out of range");
    Matrix out(n_paths_, dim_);
    for (int p = 0; p < n_paths_; ++p) out.row(p) = state(p, node).transpose();
    return out;
}

void Ensemble::check_finite() const {
    for (int p = 0; p < n_paths_; ++p) {
        for (int i = 0; i <= grid_.n_steps; ++i) {
            if (!state(p, i).allFinite()) {
                std::ostringstream msg;
                msg << "ensemble: non-finite state at path " << p << " node " << i
                    << " (t = " << grid_.time(i) << ")";
                throw std::runtime_error(msg.str());
            }
        }
    }
}

}  // namespace afp
