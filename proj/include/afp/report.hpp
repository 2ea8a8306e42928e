#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "afp/core.hpp"
#include "afp/integrator.hpp"
#include "afp/lyapunov.hpp"
#include "afp/measures.hpp"
#include "afp/poincare.hpp"
#include "afp/verifier.hpp"
#include "json.hpp"

namespace afp::report {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";
inline constexpr std::uint32_t kBinaryVersion = 1;

// FNV-1a over the raw bytes; stamps outputs with the exact configuration that
// produced them
std::uint64_t fnv1a64(const std::string& bytes);

struct Manifest {
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::string version = kVersion;

    Json json() const;
    // single comment line placed before any CSV header row
    std::string csv_comment() const;
    std::string svg_comment() const;
};

// doubles below go through a shortest-round-trip dump; non-finite entries
// become null so the files stay valid JSON
Json report_json(const VerificationReport& r, const Manifest& man);
Json iteration_json(const PoincareIteration& it, const Manifest& man);
Json h6_json(const H6Result& r, const Manifest& man);
Json h7_json(const H7Result& r, const Manifest& man);
Json h8_json(const H8Result& r, const Manifest& man);

std::string format_sig(double v);  // 17 significant digits, '.' decimal

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);
void write_json(const std::string& path, const Json& j);

// rows path,step,t,x_1..x_l after the manifest comment and header
void write_ensemble_csv(const std::string& path, const Ensemble& ens,
                        const Manifest& man);

// compact twin of the CSV.  Layout, all little-endian:
//   "AFPE" | u32 format version | u64 n_paths | u64 recorded nodes | u64 dim
//   | u64 seed | u64 config hash | f64 t0 | f64 recorded dt | f64 sim dt
//   | n_paths * nodes * dim f64 states, path-major
void write_ensemble_binary(const std::string& path, const Ensemble& ens,
                           const Manifest& man);
Ensemble read_ensemble_binary(const std::string& path,
                              const std::string& model_name = "loaded");

void write_measure_csv(const std::string& path, const EmpiricalMeasure& mu,
                       const Manifest& man);
EmpiricalMeasure read_measure_csv(const std::string& path);

void write_moment_csv(const std::string& path, const MomentCurve& mc,
                      const Manifest& man);

void write_envelope_csv(const std::string& path, const GronwallEnvelope& env,
                        const Manifest& man);

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// self-contained line plot, no external assets; the manifest rides in an XML
// comment right after the opening tag.  Non-finite points break the polyline.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label,
                          const std::vector<Series>& series, const Manifest& man,
                          int width = 720, int height = 440);

}  // namespace afp::report
