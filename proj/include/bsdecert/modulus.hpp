#pragma once

#include "bsdecert/paths.hpp"
#include "bsdecert/quadrature.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bsdecert {

enum class OsgoodClass { DivergentLikely, ConvergentLikely };

const char* to_string(OsgoodClass c) noexcept;

struct ModulusFlags {
    bool concave = false;
    bool nondecreasing = false;
    bool vanishes_at_zero = false;
    bool osgood = false;
};

/// u -> kappa(u) on R^+.
struct Modulus {
    std::string name;
    ScalarFn eval;
    ModulusFlags claimed;
    /// Symbolically known Osgood classification, when the family is registered.
    std::optional<OsgoodClass> known;

    double operator()(double u) const { return eval(u); }
};

using TimeFn2 = std::function<double(double, double)>;

/// (t, u) -> rho(t, u) with envelopes rho(t, u) <= a(t) + b(t) u.
struct TimeModulus {
    std::string name;
    TimeFn2 eval;
    ScalarFn a;
    ScalarFn b;

    double operator()(double t, double u) const { return eval(t, u); }
};

/// rho(t, u) = w(t) * kappa(u); envelopes a = b = A w with A = kappa(1).
TimeModulus scaled_modulus(std::string name, ScalarFn weight, const Modulus& kappa);

// ---------------------------------------------------------------------------
// Built-in families
// ---------------------------------------------------------------------------

Modulus linear_modulus(double c);
Modulus power_modulus(double theta);
/// Piecewise-linear interpolant through (u, v) pairs sorted by u; (0, 0) is
/// prepended when missing and the last slope continues beyond the table.
Modulus table_modulus(std::vector<std::pair<double, double>> points);

/// Largest delta for which h(x) = x |ln x|^{1/p} is nondecreasing on (0, delta].
double xlogx_delta_max(double p);
/// Largest delta for which s(x) = x (|ln x| ln|ln x|)^{1/p} is nondecreasing on (0, delta].
double xloglog_delta_max(double p);

/// h itself with the C^1 linear continuation above delta; h(0) = 0.
Modulus xlogx_base(double p, double delta);
/// s itself with the C^1 linear continuation above delta; s(0) = 0.
Modulus xloglog_base(double p, double delta);
/// h^p(u^{1/p}).
Modulus xlogx(double p, double delta);
/// s^p(u^{1/p}).
Modulus xloglog(double p, double delta);

// ---------------------------------------------------------------------------
// Osgood diagnostic
// ---------------------------------------------------------------------------

struct OsgoodPoint {
    double eps;
    double I;
};

struct OsgoodReport {
    OsgoodClass classification = OsgoodClass::DivergentLikely;
    bool heuristic = true;
    std::optional<OsgoodClass> registry;
    double decay_ratio = 1.0;     // geometric ratio of the last decade increments
    double tail_estimate = 0.0;   // extrapolated remainder of I below eps_floor
    std::vector<OsgoodPoint> trace;
};

/// I(eps) = \int_eps^{u0} du / kappa(u) on decades eps = u0 10^{-k} down to eps_floor.
OsgoodReport osgood_diagnostic(const Modulus& kappa, double u0, double eps_floor = 1e-300,
                               const QuadratureConfig& quad = {});

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// x -> rho(x^{1/r})^r.
Modulus power_transform(const Modulus& rho, double r);

struct ConcaveMajorant {
    Modulus modulus;
    std::vector<double> grid;               // sample abscissae, 0 first
    std::vector<std::pair<double, double>> hull;  // hull vertices
};

/// Least concave majorant of the samples of rho1 on {0} U log-spaced points up to domain_cap.
ConcaveMajorant concavify(const Modulus& rho1, double domain_cap, std::size_t grid_size);

/// max over grid points with rho1 > 0 of rho2 / rho1.
double majorant_ratio(const Modulus& rho2, const Modulus& rho1, std::span<const double> grid);

// ---------------------------------------------------------------------------
// Comparison bounds
// ---------------------------------------------------------------------------

/// alpha(t_i) exp(\int_{t_i}^T beta) on grid points.
std::vector<double> backward_gronwall_bound(const ScalarFn& alpha, const ScalarFn& beta, const TimeGrid& grid,
                                            const QuadratureConfig& quad = {});

struct OdeOptions {
    double abs_tol = 1e-9;  // absolute error on ln u
    double rel_tol = 1e-9;
    double zero_tol = 1e-8;
    /// Geometric decay ratio below which the extrapolated limit is accepted.
    double settled_ratio = 0.5;
    /// Continue with eps down to 1e-300 when the decade sequence has not settled.
    bool deep_eps = true;

    void validate() const;
};

std::vector<double> default_terminal_eps();

struct BihariResult {
    std::vector<double> t;
    std::vector<double> r;
    bool is_zero = false;
    bool monotone_in_eps = true;
    bool extrapolated = false;
    bool deepened = false;
    std::vector<double> eps;
    std::vector<std::vector<double>> per_eps;  // solution from u(T) = eps[k]
};

/// Solves u' = -rho(t, u) backward from u(T) = u_T with adaptive Dormand-Prince
/// steps in ln u; returns u on grid points.
std::vector<double> backward_ode(const TimeFn2& rho, const TimeGrid& grid, double u_T, const OdeOptions& opt = {});

BihariResult bihari_comparison(const TimeModulus& rho, const TimeGrid& grid,
                               std::span<const double> eps_terminal, const OdeOptions& opt = {});

struct SClassReport {
    bool integrable = false;
    double integral_a_plus_b = 0.0;
    bool envelope_ok = false;
    std::size_t envelope_samples = 0;
    std::optional<std::array<double, 4>> envelope_witness;  // t, u, rho, a + b u
    bool bihari_zero = false;
    double r0 = 0.0;
    bool member = false;
};

SClassReport s_class_check(const TimeModulus& rho, const TimeGrid& grid, std::size_t samples,
                           const QuadratureConfig& quad = {}, std::uint64_t seed = 0x5c1a55u,
                           const OdeOptions& ode = {});

/// Uniform (0, 1) stream keyed by (seed, index), independent of call order.
double keyed_uniform(std::uint64_t seed, std::uint64_t index, std::uint32_t lane = 0) noexcept;

}  // namespace bsdecert
