// Batch front end: configure, run, and report the verification pipelines.
// One JSON config drives every command; flags override config fields, the
// AFP_SEED environment variable overrides the default seed, and outputs are
// bit-identical for a fixed config + seed regardless of worker count.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "afp/core.hpp"
#include "afp/integrator.hpp"
#include "afp/lyapunov.hpp"
#include "afp/measures.hpp"
#include "afp/models.hpp"
#include "afp/poincare.hpp"
#include "afp/report.hpp"
#include "afp/rng.hpp"
#include "afp/verifier.hpp"

namespace {

using afp::Matrix;
using afp::Vector;
using afp::report::Json;

constexpr int kExitConfig = 2;
constexpr int kExitBlowup = 3;
constexpr int kExitCriterion = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- config access with field-path diagnostics ----

void check_keys(const Json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known)
            throw ConfigError(where + "." + it.key() + ": unknown field");
    }
}

const Json& section(const Json& root, const char* name) {
    static const Json empty = Json::object();
    auto it = root.find(name);
    if (it == root.end()) return empty;
    if (!it->is_object())
        throw ConfigError(std::string(name) + ": expected an object");
    return *it;
}

bool has(const Json& obj, const char* key) { return obj.contains(key); }

double get_num(const Json& obj, const std::string& sec, const char* key,
               double def) {
    auto it = obj.find(key);
    if (it == obj.end()) return def;
    if (!it->is_number())
        throw ConfigError(sec + "." + key + ": expected a number");
    return it->get<double>();
}

int get_int(const Json& obj, const std::string& sec, const char* key, int def) {
    auto it = obj.find(key);
    if (it == obj.end()) return def;
    if (!it->is_number_integer())
        throw ConfigError(sec + "." + key + ": expected an integer");
    return it->get<int>();
}

std::uint64_t get_u64(const Json& obj, const std::string& sec, const char* key,
                      std::uint64_t def) {
    auto it = obj.find(key);
    if (it == obj.end()) return def;
    if (!it->is_number_integer() ||
        (!it->is_number_unsigned() && it->get<long long>() < 0))
        throw ConfigError(sec + "." + key + ": expected a nonnegative integer");
    return it->get<std::uint64_t>();
}

bool get_bool(const Json& obj, const std::string& sec, const char* key, bool def) {
    auto it = obj.find(key);
    if (it == obj.end()) return def;
    if (!it->is_boolean())
        throw ConfigError(sec + "." + key + ": expected a boolean");
    return it->get<bool>();
}

std::string get_str(const Json& obj, const std::string& sec, const char* key,
                    const std::string& def) {
    auto it = obj.find(key);
    if (it == obj.end()) return def;
    if (!it->is_string())
        throw ConfigError(sec + "." + key + ": expected a string");
    return it->get<std::string>();
}

std::vector<double> get_num_list(const Json& obj, const std::string& sec,
                                 const char* key,
                                 const std::vector<double>& def) {
    auto it = obj.find(key);
    if (it == obj.end()) return def;
    if (!it->is_array())
        throw ConfigError(sec + "." + key + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : *it) {
        if (!v.is_number())
            throw ConfigError(sec + "." + key + ": expected an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

Matrix get_matrix(const Json& obj, const std::string& sec, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_array() || it->empty())
        throw ConfigError(sec + "." + key + ": expected an array of rows");
    int rows = int(it->size());
    int cols = -1;
    Matrix m;
    for (int i = 0; i < rows; ++i) {
        const auto& row = (*it)[std::size_t(i)];
        if (!row.is_array())
            throw ConfigError(sec + "." + key + ": expected an array of rows");
        if (cols < 0) {
            cols = int(row.size());
            m.resize(rows, cols);
        }
        if (int(row.size()) != cols)
            throw ConfigError(sec + "." + key + ": ragged rows");
        for (int j = 0; j < cols; ++j) {
            if (!row[std::size_t(j)].is_number())
                throw ConfigError(sec + "." + key + ": entries must be numbers");
            m(i, j) = row[std::size_t(j)].get<double>();
        }
    }
    return m;
}

Json vec_to_json(const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(x);
    return a;
}

// ---- flag overrides and resolved run setup ----

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<int> n_paths;
    std::optional<double> dt;
    std::optional<std::string> out_dir;
    std::optional<std::string> prefix;
    std::optional<std::vector<std::string>> criteria;
    std::optional<bool> csv;
};

struct ModelBundle {
    afp::ModelSpec model;
    std::optional<afp::models::LinearOracle> oracle;
    Json echo;  // resolved model settings, part of the hashed config
};

ModelBundle build_model(const Json& root) {
    const Json& m = section(root, "model");
    check_keys(m, "model",
               {"name", "b", "c", "a_const", "c_const", "omegas", "T", "v", "dim"});
    std::string name = get_str(m, "model", "name", "");
    if (name.empty()) throw ConfigError("model.name: required");

    Json echo = Json::object();
    echo["name"] = name;
    try {
        if (name == "forced_cubic") {
            afp::models::ForcedCubicParams p = afp::models::ForcedCubicParams::defaults();
            p.b = get_num(m, "model", "b", p.b);
            if (has(m, "omegas")) {
                p.omegas = get_num_list(m, "model", "omegas", p.omegas);
                if (!has(m, "T"))
                    throw ConfigError("model.T: required when omegas are overridden");
            }
            p.T = get_num(m, "model", "T", p.T);
            if (has(m, "a_const")) {
                double a0 = get_num(m, "model", "a_const", 0.0);
                p.a = [a0](double) { return a0; };
                echo["a_const"] = a0;
            }
            if (has(m, "c_const")) {
                double c0 = get_num(m, "model", "c_const", 0.0);
                p.c = [c0](double) { return c0; };
                echo["c_const"] = c0;
            }
            echo["b"] = p.b;
            echo["omegas"] = vec_to_json(p.omegas);
            echo["T"] = p.T;
            return {afp::models::forced_cubic(p), std::nullopt, echo};
        }
        if (name == "linear_oracle") {
            double b = get_num(m, "model", "b", 0.5);
            double c = get_num(m, "model", "c", 0.2);
            std::vector<double> omegas = get_num_list(m, "model", "omegas", {1.0});
            double T = get_num(m, "model", "T", 2 * M_PI);
            int dim = get_int(m, "model", "dim", 0);
            echo["b"] = b;
            echo["c"] = c;
            echo["omegas"] = vec_to_json(omegas);
            echo["T"] = T;
            if (dim > 0) echo["dim"] = dim;
            afp::models::LinearOracle lo =
                afp::models::linear_oracle(b, c, omegas, T, dim);
            afp::ModelSpec model = lo.model;
            return {std::move(model), std::move(lo), echo};
        }
        if (name == "drift_control") {
            std::vector<double> v = get_num_list(m, "model", "v", {1.0, 0.0});
            Vector vv(int(v.size()));
            for (int i = 0; i < vv.size(); ++i) vv[i] = v[std::size_t(i)];
            echo["v"] = vec_to_json(v);
            return {afp::models::drift_control(vv), std::nullopt, echo};
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    throw ConfigError("model.name: unknown model '" + name +
                      "' (expected forced_cubic, linear_oracle, or drift_control)");
}

struct GridSetup {
    afp::TimeGrid grid;  // integration grid
    int record_stride = 1;
    int steps_per_period = 0;
    int n_periods = 0;
    Json echo;
};

GridSetup build_grid(const Json& root, const afp::ModelSpec& model,
                     const Overrides& ov, int default_periods,
                     bool default_period_stride) {
    const Json& g = section(root, "grid");
    check_keys(g, "grid", {"t0", "dt", "t_end", "n_periods", "record_stride"});
    const double T = model.affine.period();

    double t0 = get_num(g, "grid", "t0", 0.0);
    double dt = ov.dt ? *ov.dt : get_num(g, "grid", "dt", T / 1256);
    if (!(dt > 0)) throw ConfigError("grid.dt: must be positive");

    GridSetup out;
    out.steps_per_period = int(std::llround(T / dt));
    if (has(g, "t_end") && has(g, "n_periods"))
        throw ConfigError("grid.t_end: give either t_end or n_periods, not both");
    double t_end;
    if (has(g, "t_end")) {
        t_end = get_num(g, "grid", "t_end", 0.0);
        out.n_periods = int(std::floor((t_end - t0) / T + 1e-9));
    } else {
        out.n_periods = get_int(g, "grid", "n_periods", default_periods);
        if (out.n_periods < 1) throw ConfigError("grid.n_periods: must be >= 1");
        t_end = t0 + out.n_periods * T;
    }
    if (!(t_end > t0)) throw ConfigError("grid.t_end: must exceed t0");

    int n_steps = int(std::llround((t_end - t0) / dt));
    if (n_steps < 1 || std::abs(n_steps * dt - (t_end - t0)) > dt / 2)
        throw ConfigError("grid.dt: does not resolve the horizon t_end - t0");

    int stride = get_int(g, "grid", "record_stride", 0);
    if (stride == 0) {
        stride = 1;
        if (default_period_stride && out.steps_per_period % 8 == 0 &&
            n_steps % (out.steps_per_period / 8) == 0)
            stride = out.steps_per_period / 8;  // recorded nodes hit T/8 offsets
    }
    if (stride < 1) throw ConfigError("grid.record_stride: must be >= 1");
    if (n_steps % stride != 0)
        throw ConfigError("grid.record_stride: must divide the step count " +
                          std::to_string(n_steps));

    out.grid = afp::TimeGrid(t0, dt, n_steps);
    out.record_stride = stride;
    out.echo = Json::object();
    out.echo["t0"] = t0;
    out.echo["dt"] = dt;
    out.echo["n_steps"] = n_steps;
    out.echo["record_stride"] = stride;
    return out;
}

struct EnsembleSetup {
    int n_paths = 0;
    std::uint64_t seed = 0;
    int workers = 1;
    afp::Scheme scheme = afp::Scheme::euler;
    afp::rng::InitialLaw initial;
    Json echo;  // workers excluded: execution detail, not part of the result
};

afp::rng::InitialLaw build_initial(const Json& e, int dim, Json& echo) {
    if (!has(e, "initial")) {
        echo["initial"] = {{"type", "point"}, {"x", vec_to_json(std::vector<double>(std::size_t(dim), 0.0))}};
        return afp::rng::InitialLaw::point_mass(Vector::Zero(dim));
    }
    const Json& init = e["initial"];
    if (!init.is_object()) throw ConfigError("ensemble.initial: expected an object");
    check_keys(init, "ensemble.initial", {"type", "x", "mean", "cov", "var"});
    std::string type = get_str(init, "ensemble.initial", "type", "point");
    if (type == "point") {
        std::vector<double> x = get_num_list(init, "ensemble.initial", "x",
                                             std::vector<double>(std::size_t(dim), 0.0));
        if (int(x.size()) != dim)
            throw ConfigError("ensemble.initial.x: expected " + std::to_string(dim) +
                              " entries");
        Vector xv(dim);
        for (int i = 0; i < dim; ++i) xv[i] = x[std::size_t(i)];
        echo["initial"] = {{"type", "point"}, {"x", vec_to_json(x)}};
        return afp::rng::InitialLaw::point_mass(xv);
    }
    if (type == "gaussian") {
        std::vector<double> mean = get_num_list(init, "ensemble.initial", "mean",
                                                std::vector<double>(std::size_t(dim), 0.0));
        if (int(mean.size()) != dim)
            throw ConfigError("ensemble.initial.mean: expected " +
                              std::to_string(dim) + " entries");
        Vector mv(dim);
        for (int i = 0; i < dim; ++i) mv[i] = mean[std::size_t(i)];
        Matrix cov;
        if (has(init, "cov")) {
            cov = get_matrix(init, "ensemble.initial", "cov");
            if (cov.rows() != dim || cov.cols() != dim)
                throw ConfigError("ensemble.initial.cov: expected " +
                                  std::to_string(dim) + "x" + std::to_string(dim));
        } else {
            double var = get_num(init, "ensemble.initial", "var", 1.0);
            if (!(var >= 0)) throw ConfigError("ensemble.initial.var: must be >= 0");
            cov = var * Matrix::Identity(dim, dim);
        }
        echo["initial"] = {{"type", "gaussian"}, {"mean", vec_to_json(mean)}};
        Json cj = Json::array();
        for (int i = 0; i < dim; ++i) {
            Json row = Json::array();
            for (int j = 0; j < dim; ++j) row.push_back(cov(i, j));
            cj.push_back(row);
        }
        echo["initial"]["cov"] = cj;
        return afp::rng::InitialLaw::gaussian(mv, cov);
    }
    throw ConfigError("ensemble.initial.type: expected point or gaussian");
}

EnsembleSetup build_ensemble(const Json& root, const afp::ModelSpec& model,
                             const Overrides& ov, int default_paths) {
    const Json& e = section(root, "ensemble");
    check_keys(e, "ensemble", {"n_paths", "seed", "scheme", "workers", "initial"});

    EnsembleSetup out;
    out.echo = Json::object();
    out.n_paths = ov.n_paths ? *ov.n_paths : get_int(e, "ensemble", "n_paths", default_paths);
    if (out.n_paths < 2) throw ConfigError("ensemble.n_paths: must be >= 2");

    if (ov.seed) {
        out.seed = *ov.seed;
    } else if (has(e, "seed")) {
        out.seed = get_u64(e, "ensemble", "seed", 1);
    } else if (const char* env = std::getenv("AFP_SEED")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw ConfigError("AFP_SEED: expected a nonnegative integer, got '" +
                              std::string(env) + "'");
        out.seed = v;
    } else {
        out.seed = 1;
    }

    out.workers = ov.workers ? *ov.workers : get_int(e, "ensemble", "workers", 1);
    if (out.workers < 1) throw ConfigError("ensemble.workers: must be >= 1");

    std::string scheme = get_str(e, "ensemble", "scheme", "euler");
    if (scheme == "euler")
        out.scheme = afp::Scheme::euler;
    else if (scheme == "tamed")
        out.scheme = afp::Scheme::tamed;
    else
        throw ConfigError("ensemble.scheme: expected euler or tamed");

    out.echo["n_paths"] = out.n_paths;
    out.echo["seed"] = out.seed;
    out.echo["scheme"] = scheme;
    out.initial = build_initial(e, model.dim, out.echo);
    return out;
}

struct OutputSetup {
    std::filesystem::path dir;
    std::string prefix;
    bool csv = false;
};

OutputSetup build_output(const Json& root, const Overrides& ov,
                         const std::string& command) {
    const Json& o = section(root, "output");
    check_keys(o, "output", {"dir", "prefix", "csv"});
    OutputSetup out;
    out.dir = ov.out_dir ? *ov.out_dir : get_str(o, "output", "dir", "out");
    out.prefix = ov.prefix ? *ov.prefix : get_str(o, "output", "prefix", command);
    out.csv = ov.csv ? *ov.csv : get_bool(o, "output", "csv", false);
    std::error_code ec;
    std::filesystem::create_directories(out.dir, ec);
    if (ec)
        throw ConfigError("output.dir: cannot create '" + out.dir.string() + "'");
    return out;
}

std::string file_path(const OutputSetup& out, const std::string& tail) {
    return (out.dir / (out.prefix + "_" + tail)).string();
}

// the hash covers everything that determines file contents; worker count and
// output location deliberately stay out of it
afp::report::Manifest make_manifest(const Json& effective, std::uint64_t seed) {
    afp::report::Manifest man;
    man.seed = seed;
    man.config_hash = afp::report::fnv1a64(effective.dump());
    return man;
}

double initial_mean_sq(const afp::rng::InitialLaw& law) {
    using Kind = afp::rng::InitialLaw::Kind;
    switch (law.kind) {
        case Kind::point:
            return law.point.squaredNorm();
        case Kind::gaussian:
            return law.mean.squaredNorm() + law.cov.trace();
        case Kind::empirical: {
            double s = 0;
            for (int i = 0; i < law.support.rows(); ++i)
                s += law.weights[i] * law.support.row(i).squaredNorm();
            return s;
        }
    }
    return 0.0;
}

void console_done(const char* command, std::chrono::steady_clock::time_point t_start,
                  const std::vector<std::string>& files) {
    // wall time stays on the console so the files are bit-reproducible
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                t_start)
                      .count();
    std::printf("%s: wrote %zu files in %.2f s\n", command, files.size(), secs);
    for (const auto& f : files) std::printf("  %s\n", f.c_str());
}

Json load_config(const std::string& path) {
    if (path.empty()) return Json::object();
    std::string text;
    try {
        text = afp::report::read_text(path);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw ConfigError("config: " + path + " is not valid JSON");
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    check_keys(j, "config", {"model", "grid", "ensemble", "criteria", "poincare",
                             "lyapunov", "output"});
    return j;
}

// ---- commands ----

int cmd_simulate(const Json& cfg, const Overrides& ov) {
    auto t_start = std::chrono::steady_clock::now();
    ModelBundle mb = build_model(cfg);
    GridSetup gs = build_grid(cfg, mb.model, ov, 3, false);
    EnsembleSetup es = build_ensemble(cfg, mb.model, ov, 1000);
    OutputSetup out = build_output(cfg, ov, "simulate");

    Json eff = Json::object();
    eff["command"] = "simulate";
    eff["model"] = mb.echo;
    eff["grid"] = gs.echo;
    eff["ensemble"] = es.echo;
    afp::report::Manifest man = make_manifest(eff, es.seed);

    afp::SimOptions opts;
    opts.scheme = es.scheme;
    opts.record_stride = gs.record_stride;
    opts.n_workers = es.workers;
    afp::Ensemble ens =
        afp::euler_maruyama(mb.model, es.initial, gs.grid, es.n_paths, es.seed, opts);

    std::vector<std::string> files;
    files.push_back(file_path(out, "ensemble.afpe"));
    afp::report::write_ensemble_binary(files.back(), ens, man);
    if (out.csv) {
        files.push_back(file_path(out, "ensemble.csv"));
        afp::report::write_ensemble_csv(files.back(), ens, man);
    }

    afp::MomentCurve mc = afp::moment_curve(ens);
    files.push_back(file_path(out, "moments.csv"));
    afp::report::write_moment_csv(files.back(), mc, man);

    afp::report::Series s;
    s.label = "E|X(t)|^2";
    s.x = mc.times;
    for (std::size_t i = 0; i < mc.times.size(); ++i)
        s.y.push_back(mc.mean_sq[Eigen::Index(i)]);
    files.push_back(file_path(out, "moments.svg"));
    afp::report::write_text(
        files.back(),
        afp::report::svg_line_plot("mean square of " + mb.model.name, "t",
                                   "E|X|^2", {s}, man));

    Json manifest = Json::object();
    manifest["manifest"] = man.json();
    manifest["command"] = "simulate";
    manifest["model"] = mb.model.name;
    manifest["N"] = es.n_paths;
    manifest["dt"] = gs.grid.dt;
    manifest["n_flagged"] = ens.flags().size();
    manifest["warnings"] = ens.warnings();
    manifest["config"] = eff;
    files.push_back(file_path(out, "manifest.json"));
    afp::report::write_json(files.back(), manifest);

    console_done("simulate", t_start, files);
    return 0;
}

const std::vector<std::string> kCriteria = {"h3", "h4", "h4prime", "periodicity",
                                            "restart"};

int cmd_verify(const Json& cfg, const Overrides& ov) {
    auto t_start = std::chrono::steady_clock::now();
    ModelBundle mb = build_model(cfg);
    const double T = mb.model.affine.period();

    const Json& c = section(cfg, "criteria");
    check_keys(c, "criteria",
               {"list", "bound", "m_sub", "repeats", "floor_factor", "burn_in",
                "t_points", "epsilon", "restart_k", "restart_t"});

    std::vector<std::string> criteria;
    if (ov.criteria) {
        criteria = *ov.criteria;
    } else if (has(c, "list")) {
        const Json& lst = c["list"];
        if (!lst.is_array())
            throw ConfigError("criteria.list: expected an array of strings");
        for (const auto& v : lst) {
            if (!v.is_string())
                throw ConfigError("criteria.list: expected an array of strings");
            criteria.push_back(v.get<std::string>());
        }
    }
    if (criteria.empty())
        throw ConfigError(
            "criteria.list: at least one of h3, h4, h4prime, periodicity, restart "
            "is required");
    for (const auto& name : criteria) {
        if (std::find(kCriteria.begin(), kCriteria.end(), name) == kCriteria.end())
            throw ConfigError("criteria.list: unknown criterion '" + name + "'");
    }

    GridSetup gs = build_grid(cfg, mb.model, ov, 12, true);
    EnsembleSetup es = build_ensemble(cfg, mb.model, ov, 1000);
    OutputSetup out = build_output(cfg, ov, "verify");

    double bound = get_num(c, "criteria", "bound", 50.0);
    int m_sub = get_int(c, "criteria", "m_sub", 256);
    int repeats = get_int(c, "criteria", "repeats", 16);
    double floor_factor = get_num(c, "criteria", "floor_factor", 1.5);
    int burn_in = get_int(c, "criteria", "burn_in", -1);  // -1 = plateau rule
    int t_points = get_int(c, "criteria", "t_points", 8);
    if (t_points < 1) throw ConfigError("criteria.t_points: must be >= 1");
    int restart_k = get_int(c, "criteria", "restart_k", 3);
    double restart_t = get_num(c, "criteria", "restart_t", T / 3);
    std::optional<double> epsilon;
    if (has(c, "epsilon")) epsilon = get_num(c, "criteria", "epsilon", 0.0);

    Json eff = Json::object();
    eff["command"] = "verify";
    eff["model"] = mb.echo;
    eff["grid"] = gs.echo;
    eff["ensemble"] = es.echo;
    Json ce = Json::object();
    ce["list"] = criteria;
    ce["bound"] = bound;
    ce["m_sub"] = m_sub;
    ce["repeats"] = repeats;
    ce["floor_factor"] = floor_factor;
    ce["burn_in"] = burn_in;
    ce["t_points"] = t_points;
    ce["restart_k"] = restart_k;
    ce["restart_t"] = restart_t;
    if (epsilon) ce["epsilon"] = *epsilon;
    eff["criteria"] = ce;
    afp::report::Manifest man = make_manifest(eff, es.seed);

    afp::SimOptions opts;
    opts.scheme = es.scheme;
    opts.record_stride = gs.record_stride;
    opts.n_workers = es.workers;
    afp::Ensemble ens =
        afp::euler_maruyama(mb.model, es.initial, gs.grid, es.n_paths, es.seed, opts);

    const afp::AffineStructure& aff = mb.model.affine;
    std::vector<std::string> files;
    std::vector<afp::VerificationReport> reports;

    for (const auto& name : criteria) {
        afp::VerificationReport rep;
        if (name == "h3") {
            rep = afp::h3_boundedness(ens, aff, gs.n_periods, bound);
        } else if (name == "h4") {
            rep = afp::h4_average(ens, aff, gs.n_periods, m_sub, repeats, es.seed,
                                  floor_factor);
        } else if (name == "h4prime") {
            rep = afp::h4prime_average(ens, aff, gs.n_periods, epsilon);
        } else if (name == "periodicity") {
            int burn = burn_in;
            if (burn < 0) {
                afp::VerificationReport h3 =
                    afp::h3_boundedness(ens, aff, gs.n_periods, bound);
                burn = afp::select_burn_in(h3.statistics);
            }
            if (burn + 2 > gs.n_periods)
                throw ConfigError("criteria.burn_in: horizon too short, need " +
                                  std::to_string(burn + 2) + " periods");
            std::vector<double> t_grid;
            for (int i = 0; i < t_points; ++i) t_grid.push_back(T * i / t_points);
            rep = afp::periodicity_residual(ens, aff, t_grid, burn, m_sub, repeats,
                                            es.seed, floor_factor);
        } else {
            rep = afp::restart_identity_check(mb.model, es.initial, restart_k,
                                              restart_t, es.n_paths, gs.grid.dt,
                                              es.seed, m_sub, repeats, floor_factor,
                                              opts);
        }
        reports.push_back(rep);

        files.push_back(file_path(out, name + ".json"));
        afp::report::write_json(files.back(), afp::report::report_json(rep, man));

        afp::report::Series stat;
        stat.label = rep.criterion;
        stat.x = rep.index;
        stat.y = rep.statistics;
        std::vector<afp::report::Series> series{stat};
        if (!rep.floors.empty()) {
            afp::report::Series fl;
            fl.label = "noise floor";
            fl.x = rep.index;
            fl.y = rep.floors;
            series.push_back(fl);
        }
        files.push_back(file_path(out, name + ".svg"));
        afp::report::write_text(files.back(),
                                afp::report::svg_line_plot(
                                    rep.criterion + " on " + rep.model,
                                    name == "periodicity" ? "t" : "period", "value",
                                    series, man));
    }

    bool all_pass = true;
    Json summary = Json::object();
    summary["manifest"] = man.json();
    summary["command"] = "verify";
    Json rows = Json::array();
    for (const auto& rep : reports) {
        Json row = Json::object();
        row["criterion"] = rep.criterion;
        if (rep.pass.has_value()) {
            row["pass"] = *rep.pass;
            if (!*rep.pass) all_pass = false;
        } else {
            row["pass"] = nullptr;  // informational, excluded from the verdict
        }
        rows.push_back(row);
        std::printf("criterion %-12s %s\n", rep.criterion.c_str(),
                    !rep.pass.has_value() ? "INFO"
                    : *rep.pass           ? "PASS"
                                          : "FAIL");
    }
    summary["criteria"] = rows;
    summary["all_pass"] = all_pass;
    summary["config"] = eff;
    files.push_back(file_path(out, "verify.json"));
    afp::report::write_json(files.back(), summary);

    console_done("verify", t_start, files);
    return all_pass ? 0 : kExitCriterion;
}

int cmd_poincare(const Json& cfg, const Overrides& ov) {
    auto t_start = std::chrono::steady_clock::now();
    ModelBundle mb = build_model(cfg);
    GridSetup gs = build_grid(cfg, mb.model, ov, 1, false);
    EnsembleSetup es = build_ensemble(cfg, mb.model, ov, 10000);
    OutputSetup out = build_output(cfg, ov, "poincare");

    const Json& p = section(cfg, "poincare");
    check_keys(p, "poincare", {"k_max", "m_sub", "repeats", "continuation"});
    int k_max = get_int(p, "poincare", "k_max", 20);
    afp::PoincareOptions po;
    po.m_sub = get_int(p, "poincare", "m_sub", 256);
    po.repeats = get_int(p, "poincare", "repeats", 16);
    po.continuation = get_bool(p, "poincare", "continuation", false);
    po.sim.scheme = es.scheme;
    po.sim.n_workers = es.workers;

    Json eff = Json::object();
    eff["command"] = "poincare";
    eff["model"] = mb.echo;
    eff["grid"] = gs.echo;
    eff["ensemble"] = es.echo;
    Json pe = Json::object();
    pe["k_max"] = k_max;
    pe["m_sub"] = po.m_sub;
    pe["repeats"] = po.repeats;
    pe["continuation"] = po.continuation;
    eff["poincare"] = pe;
    afp::report::Manifest man = make_manifest(eff, es.seed);

    // the iteration starts from the configured initial law as a measure
    afp::EmpiricalMeasure mu0 = [&]() {
        using Kind = afp::rng::InitialLaw::Kind;
        if (es.initial.kind == Kind::point) {
            Matrix sup(1, mb.model.dim);
            sup.row(0) = es.initial.point.transpose();
            return afp::EmpiricalMeasure::uniform(sup);
        }
        if (es.initial.kind == Kind::empirical)
            return afp::EmpiricalMeasure(es.initial.support, es.initial.weights);
        Matrix sup = afp::rng::sample_initial(
            {es.seed, 0, afp::rng::Tag::initial}, es.initial, es.n_paths);
        return afp::EmpiricalMeasure::uniform(sup);
    }();

    afp::PoincareIteration it = afp::iterate_fixed_point(
        mb.model, mu0, k_max, es.n_paths, gs.grid.dt, es.seed, po);

    std::vector<std::string> files;
    files.push_back(file_path(out, "poincare.json"));
    afp::report::write_json(files.back(), afp::report::iteration_json(it, man));

    files.push_back(file_path(out, "fixed_point.csv"));
    afp::report::write_measure_csv(files.back(), it.measures.back(), man);

    afp::report::Series gap, floor;
    gap.label = "gap d_k";
    floor.label = "noise floor";
    for (std::size_t i = 0; i < it.gaps.size(); ++i) {
        gap.x.push_back(double(i + 1));
        gap.y.push_back(it.gaps[i]);
        floor.x.push_back(double(i + 1));
        floor.y.push_back(it.floors[i]);
    }
    files.push_back(file_path(out, "gaps.svg"));
    afp::report::write_text(
        files.back(), afp::report::svg_line_plot("period map iteration on " +
                                                     mb.model.name,
                                                 "iteration k", "d_BL", {gap, floor},
                                                 man));

    bool ok = it.contracting();
    if (ok)
        std::printf("poincare: converged at k = %d\n", *it.converged_at);
    else
        std::printf("poincare: non-contracting after %zu iterations\n",
                    it.gaps.size());
    console_done("poincare", t_start, files);
    return ok ? 0 : kExitCriterion;
}

int cmd_lyapunov(const Json& cfg, const Overrides& ov) {
    auto t_start = std::chrono::steady_clock::now();
    ModelBundle mb = build_model(cfg);
    const double T = mb.model.affine.period();
    EnsembleSetup es = build_ensemble(cfg, mb.model, ov, 2);
    OutputSetup out = build_output(cfg, ov, "lyapunov");

    const Json& l = section(cfg, "lyapunov");
    check_keys(l, "lyapunov",
               {"V", "alpha", "alpha_shift", "checks", "t_points", "n_samples",
                "radius", "ladder", "h8_periods", "envelope"});
    if (!has(l, "V"))
        throw ConfigError("lyapunov.V: required (e.g. {\"type\": \"quadratic\", "
                          "\"scale\": 0.5})");
    const Json& vspec = l["V"];
    if (!vspec.is_object()) throw ConfigError("lyapunov.V: expected an object");
    check_keys(vspec, "lyapunov.V", {"type", "scale", "D"});
    std::string vtype = get_str(vspec, "lyapunov.V", "type", "quadratic");
    if (vtype != "quadratic")
        throw ConfigError("lyapunov.V.type: only quadratic forms are configurable");
    Matrix D;
    if (has(vspec, "D")) {
        D = get_matrix(vspec, "lyapunov.V", "D");
        if (D.rows() != mb.model.dim || D.cols() != mb.model.dim)
            throw ConfigError("lyapunov.V.D: expected " +
                              std::to_string(mb.model.dim) + "x" +
                              std::to_string(mb.model.dim));
    } else {
        double scale = get_num(vspec, "lyapunov.V", "scale", 0.5);
        D = scale * Matrix::Identity(mb.model.dim, mb.model.dim);
    }
    afp::LyapunovSpec V = [&]() {
        try {
            return afp::LyapunovSpec::quadratic_constant(D);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("lyapunov.V.D: ") + e.what());
        }
    }();

    double alpha_shift = get_num(l, "lyapunov", "alpha_shift", 0.0);
    std::function<double(double)> alpha;
    std::string alpha_desc;
    if (!has(l, "alpha") ||
        (l["alpha"].is_string() && l["alpha"].get<std::string>() == "model")) {
        if (!mb.model.alpha)
            throw ConfigError("lyapunov.alpha: model '" + mb.model.name +
                              "' has no built-in rate, give a number");
        alpha = [base = mb.model.alpha, alpha_shift](double t) {
            return base(t) + alpha_shift;
        };
        alpha_desc = "model";
    } else if (l["alpha"].is_number()) {
        double a0 = l["alpha"].get<double>() + alpha_shift;
        alpha = [a0](double) { return a0; };
        alpha_desc = "constant";
    } else {
        throw ConfigError("lyapunov.alpha: expected \"model\" or a number");
    }

    std::vector<std::string> checks{"h7"};
    if (has(l, "checks")) {
        checks.clear();
        const Json& cl = l["checks"];
        if (!cl.is_array())
            throw ConfigError("lyapunov.checks: expected an array of strings");
        for (const auto& v : cl) {
            if (!v.is_string())
                throw ConfigError("lyapunov.checks: expected an array of strings");
            std::string name = v.get<std::string>();
            if (name != "h6" && name != "h7" && name != "h8")
                throw ConfigError("lyapunov.checks: unknown check '" + name + "'");
            checks.push_back(name);
        }
        if (checks.empty())
            throw ConfigError("lyapunov.checks: at least one check is required");
    }

    int t_points = get_int(l, "lyapunov", "t_points", 16);
    if (t_points < 1) throw ConfigError("lyapunov.t_points: must be >= 1");
    int n_samples = get_int(l, "lyapunov", "n_samples", 60);
    int h8_periods = get_int(l, "lyapunov", "h8_periods", 3);
    afp::SampleBox box;
    box.radius = get_num(l, "lyapunov", "radius", box.radius);
    box.ladder = get_num_list(l, "lyapunov", "ladder", box.ladder);

    Json eff = Json::object();
    eff["command"] = "lyapunov";
    eff["model"] = mb.echo;
    Json le = Json::object();
    Json dj = Json::array();
    for (int i = 0; i < D.rows(); ++i) {
        Json row = Json::array();
        for (int j = 0; j < D.cols(); ++j) row.push_back(D(i, j));
        dj.push_back(row);
    }
    le["D"] = dj;
    le["alpha"] = alpha_desc;
    le["alpha_shift"] = alpha_shift;
    le["checks"] = checks;
    le["t_points"] = t_points;
    le["n_samples"] = n_samples;
    le["radius"] = box.radius;
    le["ladder"] = vec_to_json(box.ladder);
    le["h8_periods"] = h8_periods;
    le["seed"] = es.seed;
    eff["lyapunov"] = le;
    afp::report::Manifest man = make_manifest(eff, es.seed);

    std::vector<double> t_grid;
    for (int i = 0; i < t_points; ++i) t_grid.push_back(T * i / t_points);

    std::vector<std::string> files;
    bool all_pass = true;
    for (const auto& name : checks) {
        if (name == "h6") {
            afp::H6Result r = afp::h6_check(V, t_grid, {});
            files.push_back(file_path(out, "h6.json"));
            afp::report::write_json(files.back(), afp::report::h6_json(r, man));
            all_pass = all_pass && r.pass;
            std::printf("check h6  %s\n", r.pass ? "PASS" : "FAIL");
        } else if (name == "h7") {
            afp::H7Result r =
                afp::h7_check(mb.model, V, alpha, t_grid, n_samples, es.seed, box);
            files.push_back(file_path(out, "h7.json"));
            afp::report::write_json(files.back(), afp::report::h7_json(r, man));
            all_pass = all_pass && r.pass;
            std::printf("check h7  %s  (max residual %.3g)\n",
                        r.pass ? "PASS" : "FAIL", r.max_residual);
        } else {
            auto D_fn = [&D](double) { return D; };
            auto D_prime = [&D](double) { return Matrix::Zero(D.rows(), D.cols()).eval(); };
            afp::H8Result r = afp::h8_check(mb.model, D_fn, alpha, t_grid, n_samples,
                                            es.seed, h8_periods, box, D_prime);
            files.push_back(file_path(out, "h8.json"));
            afp::report::write_json(files.back(), afp::report::h8_json(r, man));
            all_pass = all_pass && r.pass;
            std::printf("check h8  %s  (min margin %.3g)\n",
                        r.pass ? "PASS" : "FAIL", r.min_margin);
        }
    }

    if (has(l, "envelope")) {
        const Json& ej = l["envelope"];
        if (!ej.is_object()) throw ConfigError("lyapunov.envelope: expected an object");
        check_keys(ej, "lyapunov.envelope", {"t_end", "n_nodes"});
        if (mb.model.name != "forced_cubic")
            throw ConfigError("lyapunov.envelope: only available for forced_cubic");
        double t_end = get_num(ej, "lyapunov.envelope", "t_end", 2 * T);
        int n_nodes = get_int(ej, "lyapunov.envelope", "n_nodes", 65);
        afp::models::ForcedCubicParams fp = afp::models::ForcedCubicParams::defaults();
        fp.b = get_num(section(cfg, "model"), "model", "b", fp.b);
        afp::models::EnvelopeInputs in = afp::models::forced_cubic_envelope_inputs(
            fp, initial_mean_sq(es.initial));
        afp::GronwallEnvelope env = afp::gronwall_envelope(
            [&in](double) { return in.A; }, in.B, in.K, 0.0, t_end, n_nodes);
        files.push_back(file_path(out, "envelope.csv"));
        afp::report::write_envelope_csv(files.back(), env, man);
    }

    console_done("lyapunov", t_start, files);
    return all_pass ? 0 : kExitCriterion;
}

int cmd_report(const std::vector<std::string>& inputs, const Overrides& ov) {
    auto t_start = std::chrono::steady_clock::now();
    if (inputs.empty())
        throw ConfigError("report: at least one JSON file is required");
    OutputSetup out = build_output(Json::object(), ov, "report");

    Json runs = Json::array();
    int n_pass = 0, n_fail = 0, n_open = 0;
    std::uint64_t seed = 0;
    for (const auto& path : inputs) {
        Json j = Json::parse(afp::report::read_text(path), nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ConfigError("report: " + path + " is not a JSON report");
        Json row = Json::object();
        row["file"] = path;
        if (j.contains("manifest") && j["manifest"].is_object()) {
            row["manifest"] = j["manifest"];
            if (j["manifest"].contains("seed") &&
                j["manifest"]["seed"].is_number_unsigned())
                seed = j["manifest"]["seed"].get<std::uint64_t>();
        }
        for (const char* key : {"criterion", "model", "command"})
            if (j.contains(key) && j[key].is_string()) row[key] = j[key];
        if (j.contains("pass")) {
            row["pass"] = j["pass"];
            if (j["pass"].is_null())
                ++n_open;
            else if (j["pass"].get<bool>())
                ++n_pass;
            else
                ++n_fail;
        } else if (j.contains("contracting") && j["contracting"].is_boolean()) {
            row["pass"] = j["contracting"];
            (j["contracting"].get<bool>() ? n_pass : n_fail) += 1;
        } else if (j.contains("all_pass") && j["all_pass"].is_boolean()) {
            row["pass"] = j["all_pass"];
            (j["all_pass"].get<bool>() ? n_pass : n_fail) += 1;
        } else {
            row["pass"] = nullptr;
            ++n_open;
        }
        runs.push_back(row);
    }

    Json summary = Json::object();
    afp::report::Manifest man;
    man.seed = seed;
    std::string joined;
    for (const auto& p : inputs) joined += p + "\n";
    man.config_hash = afp::report::fnv1a64(joined);
    summary["manifest"] = man.json();
    summary["command"] = "report";
    summary["runs"] = runs;
    summary["n_pass"] = n_pass;
    summary["n_fail"] = n_fail;
    summary["n_open"] = n_open;

    std::vector<std::string> files{file_path(out, "summary.json")};
    afp::report::write_json(files.front(), summary);
    std::printf("report: %d pass, %d fail, %d open\n", n_pass, n_fail, n_open);
    console_done("report", t_start, files);
    return n_fail == 0 ? 0 : kExitCriterion;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"affine-periodic SDE verification workbench"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    std::uint64_t seed_flag = 0;
    int workers_flag = 0, n_paths_flag = 0;
    double dt_flag = 0;
    std::string out_flag, prefix_flag, criteria_flag;
    bool csv_flag = false;

    auto add_common = [&](CLI::App* sub, bool with_sim_flags) {
        sub->add_option("-c,--config", config_path, "JSON config file");
        sub->add_option("--seed", seed_flag, "override the base seed");
        sub->add_option("--out", out_flag, "output directory");
        sub->add_option("--prefix", prefix_flag, "output file prefix");
        if (with_sim_flags) {
            sub->add_option("--workers", workers_flag, "parallel path workers");
            sub->add_option("--n-paths", n_paths_flag, "ensemble size");
            sub->add_option("--dt", dt_flag, "integration step");
        }
    };

    CLI::App* sim = app.add_subcommand("simulate", "run an ensemble and persist it");
    add_common(sim, true);
    sim->add_flag("--csv", csv_flag, "also write the ensemble as CSV");

    CLI::App* ver = app.add_subcommand("verify", "run hypothesis checks");
    add_common(ver, true);
    ver->add_option("--criteria", criteria_flag,
                    "comma-separated subset of h3,h4,h4prime,periodicity,restart");

    CLI::App* poi = app.add_subcommand("poincare", "iterate the period map");
    add_common(poi, true);

    CLI::App* lya = app.add_subcommand("lyapunov", "evaluate sampled certificates");
    add_common(lya, false);

    CLI::App* rep = app.add_subcommand("report", "aggregate report JSONs");
    std::vector<std::string> report_inputs;
    add_common(rep, false);
    rep->add_option("inputs", report_inputs, "report JSON files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    // bound variables are written at the end of parsing, so overrides are
    // collected here rather than in per-option callbacks
    CLI::App* active = app.get_subcommands().front();
    auto given = [&](const char* name) {
        const CLI::Option* opt = active->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (given("--seed")) ov.seed = seed_flag;
    if (given("--out")) ov.out_dir = out_flag;
    if (given("--prefix")) ov.prefix = prefix_flag;
    if (given("--workers")) ov.workers = workers_flag;
    if (given("--n-paths")) ov.n_paths = n_paths_flag;
    if (given("--dt")) ov.dt = dt_flag;
    if (given("--csv")) ov.csv = csv_flag;
    if (given("--criteria")) {
        std::vector<std::string> list;
        std::string cur;
        for (char ch : criteria_flag + ",") {
            if (ch == ',') {
                if (!cur.empty()) list.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        ov.criteria = list;
    }

    try {
        Json cfg = load_config(config_path);
        if (sim->parsed()) return cmd_simulate(cfg, ov);
        if (ver->parsed()) return cmd_verify(cfg, ov);
        if (poi->parsed()) return cmd_poincare(cfg, ov);
        if (lya->parsed()) return cmd_lyapunov(cfg, ov);
        if (rep->parsed()) return cmd_report(report_inputs, ov);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::runtime_error& e) {
        if (std::string(e.what()).find("paths flagged") != std::string::npos) {
            std::fprintf(stderr, "blow-up: %s\n", e.what());
            return kExitBlowup;
        }
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return 0;
}
