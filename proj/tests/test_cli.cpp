#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "afp/report.hpp"
#include "doctest.h"

namespace {

namespace fs = std::filesystem;

std::string work_dir() {
    static bool cleaned = false;
    std::string dir = "/tmp/afp_cli_test";
    if (!cleaned) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        cleaned = true;
    }
    return dir;
}

int run(const std::string& args) {
    std::string cmd = std::string(AFP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

void put(const std::string& path, const std::string& text) {
    afp::report::write_text(path, text);
}

std::string slurp(const std::string& path) { return afp::report::read_text(path); }

}  // namespace

TEST_CASE("simulate writes the documented files and echoes the seed") {
    std::string dir = work_dir() + "/sim";
    fs::create_directories(dir);
    std::string cfg = work_dir() + "/sim.json";
    put(cfg, R"({
      "model": {"name": "forced_cubic"},
      "ensemble": {"n_paths": 300, "seed": 21},
      "grid": {"n_periods": 3},
      "output": {"dir": ")" + dir + R"(", "prefix": "a", "csv": true}
    })");
    CHECK(run("simulate -c " + cfg) == 0);
    CHECK(fs::exists(dir + "/a_ensemble.afpe"));
    CHECK(fs::exists(dir + "/a_ensemble.csv"));
    CHECK(fs::exists(dir + "/a_moments.csv"));
    CHECK(fs::exists(dir + "/a_manifest.json"));
    std::string manifest = slurp(dir + "/a_manifest.json");
    CHECK(manifest.find("\"seed\": 21") != std::string::npos);
    CHECK(manifest.find("\"model\": \"forced_cubic\"") != std::string::npos);

    // binary round-trips through the library reader
    afp::Ensemble back =
        afp::report::read_ensemble_binary(dir + "/a_ensemble.afpe");
    CHECK(back.n_paths() == 300);
    CHECK(back.base_seed() == 21);
}

TEST_CASE("identical configs give bit-identical outputs, workers included") {
    std::string cfg = work_dir() + "/det.json";
    // periodicity exercises the subsampled distance machinery end to end;
    // h4prime adds an informational report to the byte comparison
    put(cfg, R"({
      "model": {"name": "linear_oracle"},
      "ensemble": {"n_paths": 200, "seed": 5},
      "grid": {"n_periods": 3},
      "criteria": {"list": ["periodicity", "h4prime"], "burn_in": 1,
                   "m_sub": 64, "repeats": 6, "t_points": 4}
    })");
    std::string d1 = work_dir() + "/det1", d2 = work_dir() + "/det2",
                d4 = work_dir() + "/det4";
    CHECK(run("verify -c " + cfg + " --out " + d1) == 0);
    CHECK(run("verify -c " + cfg + " --out " + d2) == 0);
    CHECK(run("verify -c " + cfg + " --out " + d4 + " --workers 4") == 0);
    for (const char* name : {"verify_periodicity.json", "verify_periodicity.svg",
                             "verify_h4prime.json", "verify_verify.json"}) {
        CAPTURE(name);
        std::string base = slurp(d1 + "/" + name);
        CHECK(base == slurp(d2 + "/" + name));
        CHECK(base == slurp(d4 + "/" + name));
    }
}

TEST_CASE("config errors exit with code 2 and name the field") {
    std::string cfg = work_dir() + "/bad.json";
    put(cfg, R"({"model": {"name": "forced_cubic"}, "ensemble": {"n_paths": 1}})");
    CHECK(run("simulate -c " + cfg) == 2);

    put(cfg, R"({"model": {"name": "unknown_thing"}})");
    CHECK(run("simulate -c " + cfg) == 2);

    put(cfg, R"({"model": {"name": "forced_cubic"}, "grid": {"dtt": 0.1}})");
    CHECK(run("simulate -c " + cfg) == 2);

    put(cfg, "{ not json");
    CHECK(run("simulate -c " + cfg) == 2);

    CHECK(run("simulate --no-such-flag") == 2);
    CHECK(run("") == 2);  // a subcommand is required
}

TEST_CASE("blow-up exits with code 3") {
    std::string cfg = work_dir() + "/blow.json";
    put(cfg, R"({
      "model": {"name": "forced_cubic"},
      "ensemble": {"n_paths": 10, "seed": 2,
                    "initial": {"type": "point", "x": [20.0, 0.0]}},
      "grid": {"n_periods": 1, "dt": 0.7853981633974483},
      "output": {"dir": ")" + work_dir() + R"("}
    })");
    CHECK(run("simulate -c " + cfg) == 3);
}

TEST_CASE("verify fails with code 4 on the growing control model") {
    std::string dir = work_dir() + "/drift";
    std::string cfg = work_dir() + "/drift.json";
    put(cfg, R"({
      "model": {"name": "drift_control", "v": [3.0, 0.0]},
      "ensemble": {"n_paths": 200, "seed": 5},
      "grid": {"n_periods": 5},
      "criteria": {"list": ["h3"]},
      "output": {"dir": ")" + dir + R"(", "prefix": "d"}
    })");
    CHECK(run("verify -c " + cfg) == 4);
    afp::report::Json j = afp::report::Json::parse(slurp(dir + "/d_h3.json"));
    CHECK(j["pass"] == false);
    // the statistic grows with the drift, which is what trips the bound
    double first = j["statistics"].front().get<double>();
    double last = j["statistics"].back().get<double>();
    CHECK(last > first);
    CHECK(last > 45.0);
}

TEST_CASE("verify requires a nonempty criteria list") {
    std::string cfg = work_dir() + "/nocrit.json";
    put(cfg, R"({"model": {"name": "linear_oracle"},
                 "ensemble": {"n_paths": 50}, "grid": {"n_periods": 2}})");
    CHECK(run("verify -c " + cfg) == 2);
    put(cfg, R"({"model": {"name": "linear_oracle"},
                 "ensemble": {"n_paths": 50}, "grid": {"n_periods": 2},
                 "criteria": {"list": ["h9"]}})");
    CHECK(run("verify -c " + cfg) == 2);
}

TEST_CASE("criteria can come from the flag instead of the config") {
    std::string dir = work_dir() + "/flagcrit";
    std::string cfg = work_dir() + "/flagcrit.json";
    put(cfg, R"({
      "model": {"name": "linear_oracle"},
      "ensemble": {"n_paths": 120, "seed": 9},
      "grid": {"n_periods": 3},
      "criteria": {"m_sub": 64, "repeats": 6},
      "output": {"dir": ")" + dir + R"(", "prefix": "f"}
    })");
    CHECK(run("verify -c " + cfg + " --criteria h3,h4prime") == 0);
    CHECK(fs::exists(dir + "/f_h3.json"));
    CHECK(fs::exists(dir + "/f_h4prime.json"));
    // h4prime stays informational, so the exit code comes from h3 alone
    afp::report::Json j = afp::report::Json::parse(slurp(dir + "/f_h4prime.json"));
    CHECK(j["pass"].is_null());
}

TEST_CASE("poincare on a noiseless fixed point converges at the first iteration") {
    // without forcing or noise the origin never moves, so the very first gap
    // is exactly zero
    std::string dir = work_dir() + "/frozen";
    std::string cfg = work_dir() + "/frozen.json";
    put(cfg, R"({
      "model": {"name": "linear_oracle", "b": 0.5, "c": 0.0, "omegas": [], "T": 1.0, "dim": 2},
      "ensemble": {"n_paths": 150, "seed": 4},
      "poincare": {"k_max": 3, "m_sub": 64, "repeats": 6},
      "output": {"dir": ")" + dir + R"(", "prefix": "p"}
    })");
    CHECK(run("poincare -c " + cfg) == 0);
    afp::report::Json j = afp::report::Json::parse(slurp(dir + "/p_poincare.json"));
    CHECK(j["converged_at"] == 1);
    CHECK(j["contracting"] == true);
    CHECK(fs::exists(dir + "/p_fixed_point.csv"));
    CHECK(fs::exists(dir + "/p_gaps.svg"));
}

TEST_CASE("poincare flags the non-contracting control with code 4") {
    std::string dir = work_dir() + "/poidrift";
    std::string cfg = work_dir() + "/poidrift.json";
    put(cfg, R"({
      "model": {"name": "drift_control", "v": [3.0, 0.0]},
      "ensemble": {"n_paths": 300, "seed": 8},
      "poincare": {"k_max": 3, "m_sub": 96, "repeats": 8},
      "output": {"dir": ")" + dir + R"(", "prefix": "p"}
    })");
    CHECK(run("poincare -c " + cfg) == 4);
    afp::report::Json j = afp::report::Json::parse(slurp(dir + "/p_poincare.json"));
    CHECK(j["contracting"] == false);
}

TEST_CASE("lyapunov certifies the built-in rate and rejects a tightened one") {
    std::string dir = work_dir() + "/lya";
    std::string cfg = work_dir() + "/lya.json";
    put(cfg, R"({
      "model": {"name": "forced_cubic"},
      "lyapunov": {"V": {"type": "quadratic", "scale": 0.5}, "alpha": "model",
                    "checks": ["h7"], "n_samples": 40},
      "output": {"dir": ")" + dir + R"(", "prefix": "ok"}
    })");
    CHECK(run("lyapunov -c " + cfg) == 0);
    afp::report::Json j = afp::report::Json::parse(slurp(dir + "/ok_h7.json"));
    CHECK(j["pass"] == true);
    CHECK(j["scope"] == "sampled, not a proof");

    put(cfg, R"({
      "model": {"name": "forced_cubic"},
      "lyapunov": {"V": {"type": "quadratic", "scale": 0.5}, "alpha": "model",
                    "alpha_shift": -0.1, "checks": ["h7"], "n_samples": 40},
      "output": {"dir": ")" + dir + R"(", "prefix": "tight"}
    })");
    CHECK(run("lyapunov -c " + cfg) == 4);

    put(cfg, R"({"model": {"name": "forced_cubic"}, "lyapunov": {"checks": ["h7"]}})");
    CHECK(run("lyapunov -c " + cfg) == 2);  // V spec is required
}

TEST_CASE("seed precedence is flag over config over environment") {
    std::string dir = work_dir() + "/seed";
    std::string with_seed = work_dir() + "/seeded.json";
    std::string no_seed = work_dir() + "/unseeded.json";
    put(with_seed, R"({"model": {"name": "linear_oracle"},
                       "ensemble": {"n_paths": 40, "seed": 3},
                       "grid": {"n_periods": 1},
                       "output": {"dir": ")" + dir + R"(", "prefix": "s"}})");
    put(no_seed, R"({"model": {"name": "linear_oracle"},
                     "ensemble": {"n_paths": 40},
                     "grid": {"n_periods": 1},
                     "output": {"dir": ")" + dir + R"(", "prefix": "s"}})");

    setenv("AFP_SEED", "77", 1);
    CHECK(run("simulate -c " + no_seed) == 0);
    CHECK(slurp(dir + "/s_manifest.json").find("\"seed\": 77") != std::string::npos);
    CHECK(run("simulate -c " + with_seed) == 0);
    CHECK(slurp(dir + "/s_manifest.json").find("\"seed\": 3") != std::string::npos);
    CHECK(run("simulate -c " + with_seed + " --seed 42") == 0);
    CHECK(slurp(dir + "/s_manifest.json").find("\"seed\": 42") != std::string::npos);
    setenv("AFP_SEED", "not-a-number", 1);
    CHECK(run("simulate -c " + no_seed) == 2);
    unsetenv("AFP_SEED");
}

TEST_CASE("report aggregates pass flags from prior runs") {
    std::string dir = work_dir() + "/agg";
    std::string cfg = work_dir() + "/agg.json";
    put(cfg, R"({
      "model": {"name": "linear_oracle"},
      "ensemble": {"n_paths": 120, "seed": 6},
      "grid": {"n_periods": 2},
      "criteria": {"list": ["h3"], "m_sub": 64, "repeats": 6},
      "output": {"dir": ")" + dir + R"(", "prefix": "r"}
    })");
    CHECK(run("verify -c " + cfg) == 0);
    CHECK(run("report " + dir + "/r_h3.json --out " + dir + " --prefix sum") == 0);
    afp::report::Json j = afp::report::Json::parse(slurp(dir + "/sum_summary.json"));
    CHECK(j["n_pass"] == 1);
    CHECK(j["n_fail"] == 0);
    CHECK(run("report --out " + dir) == 2);  // no inputs is a usage error
}
