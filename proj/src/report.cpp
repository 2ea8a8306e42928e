#include "afp/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace afp::report {

namespace {

Json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

Json vec_json(const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(finite_or_null(x));
    return a;
}

Json vec_json(const Vector& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(finite_or_null(v[i]));
    return a;
}

Json pass_json(const std::optional<bool>& p) {
    if (p.has_value()) return *p;
    return nullptr;
}

void append_le_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void append_le_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void append_le_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    append_le_u64(out, bits);
}

struct ByteReader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw std::runtime_error("ensemble file truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(std::uint8_t(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= std::uint64_t(std::uint8_t(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

Json Manifest::json() const {
    Json j = Json::object();
    j["seed"] = seed;
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", (unsigned long long)config_hash);
    j["config_hash"] = std::string(hex);
    j["version"] = version;
    return j;
}

std::string Manifest::csv_comment() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "# seed=%llu config_hash=%016llx version=%s",
                  (unsigned long long)seed, (unsigned long long)config_hash,
                  version.c_str());
    return std::string(buf) + "\n";
}

std::string Manifest::svg_comment() const {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "<!-- seed=%llu config_hash=%016llx version=%s -->",
                  (unsigned long long)seed, (unsigned long long)config_hash,
                  version.c_str());
    return std::string(buf);
}

Json report_json(const VerificationReport& r, const Manifest& man) {
    Json j = Json::object();
    j["manifest"] = man.json();
    j["criterion"] = r.criterion;
    j["model"] = r.model;
    j["seed"] = r.seed;
    j["N"] = r.n_paths;
    j["dt"] = r.dt;
    j["index"] = vec_json(r.index);
    j["statistics"] = vec_json(r.statistics);
    j["partial_averages"] = vec_json(r.partial_averages);
    j["floors"] = vec_json(r.floors);
    j["thresholds"] = finite_or_null(r.threshold);
    j["floor_factor"] = r.floor_factor;
    j["pass"] = pass_json(r.pass);
    j["notes"] = r.notes;
    return j;
}

Json iteration_json(const PoincareIteration& it, const Manifest& man) {
    Json j = Json::object();
    j["manifest"] = man.json();
    Json trace = Json::array();
    for (std::size_t i = 0; i < it.gaps.size(); ++i) {
        Json row = Json::object();
        row["k"] = i + 1;
        row["gap"] = finite_or_null(it.gaps[i]);
        row["floor"] = i < it.floors.size() ? finite_or_null(it.floors[i]) : Json(nullptr);
        // one fewer ratio than gaps: d_{k+1}/d_k starts at the second gap
        row["ratio"] = i < it.ratios.size() ? finite_or_null(it.ratios[i]) : Json(nullptr);
        trace.push_back(row);
    }
    j["trace"] = trace;
    if (it.converged_at.has_value())
        j["converged_at"] = *it.converged_at;
    else
        j["converged_at"] = nullptr;
    j["diverged"] = it.diverged;
    j["contracting"] = it.contracting();
    return j;
}

Json h6_json(const H6Result& r, const Manifest& man) {
    Json j = Json::object();
    j["manifest"] = man.json();
    j["criterion"] = "h6_bounds";
    j["A_est"] = finite_or_null(r.A_est);
    j["B_est"] = finite_or_null(r.B_est);
    j["sampled"] = r.sampled;
    j["pass"] = r.pass;
    return j;
}

Json h7_json(const H7Result& r, const Manifest& man) {
    Json j = Json::object();
    j["manifest"] = man.json();
    j["criterion"] = "h7_rate_certificate";
    j["max_residual"] = finite_or_null(r.max_residual);
    j["argmax_t"] = finite_or_null(r.argmax_t);
    j["argmax_x"] = vec_json(r.argmax_x);
    j["argmax_y"] = vec_json(r.argmax_y);
    j["tol"] = r.tol;
    j["alpha_integrals"] = vec_json(r.alpha_integrals);
    j["integral_ok"] = r.integral_ok;
    j["pass"] = r.pass;
    j["scope"] = "sampled, not a proof";
    return j;
}

Json h8_json(const H8Result& r, const Manifest& man) {
    Json j = Json::object();
    j["manifest"] = man.json();
    j["criterion"] = "h8_matrix_certificate";
    j["min_margin"] = finite_or_null(r.min_margin);
    j["argmin_t"] = finite_or_null(r.argmin_t);
    j["periodicity_defect"] = finite_or_null(r.periodicity_defect);
    j["alpha_integrals"] = vec_json(r.alpha_integrals);
    j["integral_ok"] = r.integral_ok;
    j["pass"] = r.pass;
    j["scope"] = "sampled, not a proof";
    return j;
}

std::string format_sig(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const std::string& path, const Json& j) {
    write_text(path, j.dump(2) + "\n");
}

void write_ensemble_csv(const std::string& path, const Ensemble& ens,
                        const Manifest& man) {
    std::string out = man.csv_comment();
    out += "path,step,t";
    for (int j = 0; j < ens.dim(); ++j) out += ",x_" + std::to_string(j + 1);
    out += "\n";
    for (int p = 0; p < ens.n_paths(); ++p) {
        for (int s = 0; s < ens.n_nodes(); ++s) {
            out += std::to_string(p);
            out += ",";
            out += std::to_string(s);
            out += ",";
            out += format_sig(ens.grid().time(s));
            auto x = ens.state(p, s);
            for (int j = 0; j < ens.dim(); ++j) {
                out += ",";
                out += format_sig(x[j]);
            }
            out += "\n";
        }
    }
    write_text(path, out);
}

void write_ensemble_binary(const std::string& path, const Ensemble& ens,
                           const Manifest& man) {
    std::string out;
    std::size_t n_states =
        std::size_t(ens.n_paths()) * std::size_t(ens.n_nodes()) * ens.dim();
    out.reserve(64 + 8 * n_states);
    out += "AFPE";
    append_le_u32(out, kBinaryVersion);
    append_le_u64(out, std::uint64_t(ens.n_paths()));
    append_le_u64(out, std::uint64_t(ens.n_nodes()));
    append_le_u64(out, std::uint64_t(ens.dim()));
    append_le_u64(out, ens.base_seed());
    append_le_u64(out, man.config_hash);
    append_le_f64(out, ens.grid().t0);
    append_le_f64(out, ens.grid().dt);
    append_le_f64(out, ens.sim_dt());
    const double* d = ens.data();
    for (std::size_t i = 0; i < n_states; ++i) append_le_f64(out, d[i]);
    write_text(path, out);
}

Ensemble read_ensemble_binary(const std::string& path,
                              const std::string& model_name) {
    std::string bytes = read_text(path);
    if (bytes.size() < 4 || bytes.compare(0, 4, "AFPE") != 0)
        throw std::runtime_error("not an ensemble file: " + path);
    ByteReader r{bytes, 4};
    std::uint32_t version = r.u32();
    if (version != kBinaryVersion)
        throw std::runtime_error("unsupported ensemble format version " +
                                 std::to_string(version));
    std::uint64_t n_paths = r.u64();
    std::uint64_t n_nodes = r.u64();
    std::uint64_t dim = r.u64();
    std::uint64_t seed = r.u64();
    r.u64();  // config hash, informational here
    double t0 = r.f64();
    double dt = r.f64();
    double sim_dt = r.f64();
    if (n_paths == 0 || n_nodes < 2 || dim == 0 || dim > 64)
        throw std::runtime_error("implausible ensemble header: " + path);
    TimeGrid grid(t0, dt, int(n_nodes) - 1);
    Ensemble ens(grid, int(n_paths), int(dim), sim_dt, seed, model_name);
    std::size_t n_states = std::size_t(n_paths) * n_nodes * dim;
    r.need(8 * n_states);
    double* d = ens.data();
    for (std::size_t i = 0; i < n_states; ++i) d[i] = r.f64();
    return ens;
}

void write_measure_csv(const std::string& path, const EmpiricalMeasure& mu,
                       const Manifest& man) {
    std::string out = man.csv_comment();
    out += "weight";
    for (int j = 0; j < mu.dim(); ++j) out += ",x_" + std::to_string(j + 1);
    out += "\n";
    for (int i = 0; i < mu.size(); ++i) {
        out += format_sig(mu.weights[i]);
        for (int j = 0; j < mu.dim(); ++j) {
            out += ",";
            out += format_sig(mu.support(i, j));
        }
        out += "\n";
    }
    write_text(path, out);
}

EmpiricalMeasure read_measure_csv(const std::string& path) {
    std::istringstream in(read_text(path));
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("weight", 0) == 0)
            continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("ragged measure file: " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().size() < 2)
        throw std::runtime_error("empty measure file: " + path);
    int n = int(rows.size());
    int l = int(rows.front().size()) - 1;
    Matrix support(n, l);
    Vector weights(n);
    for (int i = 0; i < n; ++i) {
        weights[i] = rows[std::size_t(i)][0];
        for (int j = 0; j < l; ++j) support(i, j) = rows[std::size_t(i)][j + 1];
    }
    return EmpiricalMeasure(std::move(support), std::move(weights));
}

void write_moment_csv(const std::string& path, const MomentCurve& mc,
                      const Manifest& man) {
    std::string out = man.csv_comment();
    out += "t,mean_sq,std_err\n";
    for (std::size_t i = 0; i < mc.times.size(); ++i) {
        out += format_sig(mc.times[i]);
        out += ",";
        out += format_sig(mc.mean_sq[Eigen::Index(i)]);
        out += ",";
        out += format_sig(mc.std_err[Eigen::Index(i)]);
        out += "\n";
    }
    write_text(path, out);
}

void write_envelope_csv(const std::string& path, const GronwallEnvelope& env,
                        const Manifest& man) {
    std::string out = man.csv_comment();
    out += "t,E\n";
    for (std::size_t i = 0; i < env.times.size(); ++i) {
        out += format_sig(env.times[i]);
        out += ",";
        out += format_sig(env.values[i]);
        out += "\n";
    }
    write_text(path, out);
}

namespace {

// nice round tick step covering span/target intervals
double tick_step(double span, int target) {
    if (!(span > 0)) return 1.0;
    double raw = span / target;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double frac = raw / mag;
    double step = 10.0;
    if (frac <= 1.0)
        step = 1.0;
    else if (frac <= 2.0)
        step = 2.0;
    else if (frac <= 5.0)
        step = 5.0;
    return step * mag;
}

std::string trim_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else if (c == '&')
            out += "&amp;";
        else
            out += c;
    }
    return out;
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label,
                          const std::vector<Series>& series, const Manifest& man,
                          int width, int height) {
    const char* palette[] = {"#2b6cb0", "#c05621", "#2f855a", "#9b2c2c",
                             "#6b46c1", "#4a5568"};
    const int n_colors = 6;
    const double ml = 64, mr = 16, mt = 34, mb = 46;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const Series& s : series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (!std::isfinite(xmin)) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) {
        ymax = ymin + (std::abs(ymin) > 0 ? std::abs(ymin) : 1.0);
        ymin -= (ymax - ymin) * 0.5;
    }
    double ypad = 0.06 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto sx = [&](double x) { return ml + pw * (x - xmin) / (xmax - xmin); };
    auto sy = [&](double y) { return mt + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
                  "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                  width, height, width, height);
    out += buf;
    out += man.svg_comment();
    out += "\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"20\" font-family=\"sans-serif\" "
                  "font-size=\"14\">%s</text>\n",
                  ml, xml_escape(title).c_str());
    out += buf;

    // frame and ticks
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" "
                  "fill=\"none\" stroke=\"#888\"/>\n",
                  ml, mt, pw, ph);
    out += buf;
    double xs = tick_step(xmax - xmin, 6);
    for (double x = std::ceil(xmin / xs) * xs; x <= xmax + 1e-9 * xs; x += xs) {
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" "
                      "stroke=\"#ccc\"/>\n",
                      sx(x), mt, sx(x), mt + ph);
        out += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" "
                      "font-size=\"11\" text-anchor=\"middle\">%s</text>\n",
                      sx(x), mt + ph + 16, trim_num(x).c_str());
        out += buf;
    }
    double ys = tick_step(ymax - ymin, 5);
    for (double y = std::ceil(ymin / ys) * ys; y <= ymax + 1e-9 * ys; y += ys) {
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" "
                      "stroke=\"#ccc\"/>\n",
                      ml, sy(y), ml + pw, sy(y));
        out += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" "
                      "font-size=\"11\" text-anchor=\"end\">%s</text>\n",
                      ml - 6, sy(y) + 4, trim_num(y).c_str());
        out += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%d\" font-family=\"sans-serif\" "
                  "font-size=\"12\" text-anchor=\"middle\">%s</text>\n",
                  ml + pw / 2, height - 8, xml_escape(x_label).c_str());
    out += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"14\" y=\"%g\" font-family=\"sans-serif\" "
                  "font-size=\"12\" text-anchor=\"middle\" "
                  "transform=\"rotate(-90 14 %g)\">%s</text>\n",
                  mt + ph / 2, mt + ph / 2, xml_escape(y_label).c_str());
    out += buf;

    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* color = palette[si % n_colors];
        std::string points;
        bool open = false;
        auto flush = [&]() {
            if (open && !points.empty()) {
                out += "<polyline fill=\"none\" stroke=\"";
                out += color;
                out += "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
            }
            points.clear();
            open = false;
        };
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            std::snprintf(buf, sizeof buf, "%g,%g ", sx(s.x[i]), sy(s.y[i]));
            points += buf;
            open = true;
        }
        flush();
        // legend swatch
        double lx = ml + pw - 150, lyy = mt + 14 + 16 * double(si);
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" "
                      "stroke=\"%s\" stroke-width=\"2\"/>\n",
                      lx, lyy, lx + 18, lyy, color);
        out += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" "
                      "font-size=\"11\">%s</text>\n",
                      lx + 24, lyy + 4, xml_escape(s.label).c_str());
        out += buf;
    }
    out += "</svg>\n";
    return out;
}

}  // namespace afp::report
