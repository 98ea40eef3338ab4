#pragma once

#include "bsdecert/certificates.hpp"
#include "bsdecert/generator.hpp"
#include "bsdecert/solver.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bsdecert {

struct GridSpec {
    double T = 1.0;
    std::optional<double> T_star;  // truncation point for infinite-horizon generators
    std::size_t M = 50;
    std::string spacing = "uniform";  // uniform | geometric
    double ratio = 1.0;
    /// When window_steps > 0 the grid is prefix_steps steps on [0, t_lo] and
    /// window_steps steps on [t_lo, T]; t_lo defaults to the last certified interval.
    std::size_t window_steps = 0;
    std::size_t prefix_steps = 50;
    std::optional<double> window_t_lo;
};

struct EnsembleSpec {
    std::size_t d = 1;
    std::size_t P = 10000;
    std::uint64_t seed = 1;
};

struct CertifySpec {
    std::size_t grid_M = 50;
    std::optional<double> xi_moment;   // E|xi|^p; default: estimate on the ensemble
    std::optional<double> g00_moment;  // E(int |g(t,0,0)| dt)^p; default: estimate on the ensemble
    MajorantOptions majorant;
};

struct CheckSpec {
    /// Descriptor under test; missing entries fall back to the generator's own H4.
    std::optional<double> alpha;
    std::optional<double> beta;
    std::optional<std::string> rho;  // linear | sqrt | xlogx
    double rho_scale = 1.0;
    SamplerSpec sampler;
};

struct ExperimentConfig {
    std::string generator = "example1";
    ZooParams params;
    TerminalCondition terminal = TerminalCondition::abs_capped(1.0);
    double p = 2.0;
    GridSpec grid;
    EnsembleSpec ensemble;
    LedgerOverrides ledger;
    SolverOptions solver;
    CertifySpec certify;
    CheckSpec check;
    std::string output_dir = "bsdecert_out";
};

/// Parses a JSON document; unknown keys and bad values raise ErrorKind::Config
/// naming the dotted field path.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Resolved config as canonical JSON (sorted keys, every default spelled out).
std::string config_json(const ExperimentConfig& cfg, int indent = 2);

/// FNV-1a 64 over the compact canonical JSON without output_dir, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Pretty canonical JSON with a top-level config_hash key, as written to
/// config.json; parse_config accepts (and ignores) that key.
std::string config_file(const ExperimentConfig& cfg);

/// `%.17g`, with "inf", "-inf", "nan" spelled out.
std::string format_double(double v);

struct RunOutput {
    std::string summary_json;          // also written to the output directory
    std::vector<std::string> files;    // paths written, in order
};

RunOutput run_solve(const ExperimentConfig& cfg);
RunOutput run_certify(const ExperimentConfig& cfg);
RunOutput run_check(const ExperimentConfig& cfg);

struct ModulusRequest {
    std::string family = "power";  // linear | power | xlogx | xloglog
    std::vector<double> params;    // linear: c; power: theta; xlogx, xloglog: p, delta
    std::string action = "diagnose";  // diagnose | concavify | transform
    double r = 2.0;                   // exponent for transform
    double u0 = 1.0;                  // upper end for diagnose, domain cap for concavify
    std::size_t points = 200;
    std::string output_dir = "bsdecert_out";
};

RunOutput run_modulus(const ModulusRequest& req);

/// name,params,formula rows.
std::string zoo_list_csv();

/// {"error": kind, "message": ..., "field": ..., "value": ...}
std::string error_json(const std::exception& e);

/// 0 success, 1 numerical failure, 2 configuration or input error.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace bsdecert
