#pragma once

#include "bsdecert/modulus.hpp"
#include "bsdecert/paths.hpp"
#include "bsdecert/quadrature.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bsdecert {

// |g1 - g2|^2 <= kappa(|y1 - y2|^2) + c |z1 - z2|^2
struct H1 {
    Modulus kappa;
    double c = 1.0;
};

// |g1 - g2|^2 <= kappa(t, |y1 - y2|^2) + c |z1 - z2|^2
struct H2 {
    TimeModulus kappa;
    double c = 1.0;
};

// |g1 - g2| <= u(t) |y1 - y2| + v(t) |z1 - z2|
struct H3 {
    ScalarFn u;
    ScalarFn v;
};

// |g1 - g2| <= alpha(t) rho^{1/p}(t, |y1 - y2|^p) + beta(t) |z1 - z2|
struct H4 {
    ScalarFn alpha;
    ScalarFn beta;
    TimeModulus rho;
};

// |g1 - g2| <= b(t) kbar^{1/p}(|y1 - y2|^p) + c(t) |z1 - z2|
struct H6 {
    ScalarFn b;
    ScalarFn c;
    Modulus kbar;
};

// |g1 - g2| <= b(t) kappa(|y1 - y2|) + c(t) |z1 - z2|
struct H6Star {
    ScalarFn b;
    ScalarFn c;
    Modulus kappa;
};

struct Descriptors {
    std::optional<double> p;  // exponent the p-dependent descriptors were derived for
    std::optional<H1> h1;
    std::optional<H2> h2;
    std::optional<H3> h3;
    std::optional<H4> h4;
    std::optional<H6> h6;
    std::optional<H6Star> h6star;
    bool h5_claim = false;

    std::vector<std::string> present() const;
};

/// out = g(t, y, z, B_t); y has k entries, z is k x d row-major, B has d entries.
using GeneratorFn = std::function<void(double t, std::span<const double> y, std::span<const double> z,
                                       std::span<const double> B, std::span<double> out)>;

struct Generator {
    std::string name;
    std::size_t k = 1;
    std::size_t d = 1;
    GeneratorFn eval;
    Descriptors desc;
    bool infinite_horizon = false;
    /// Integrands whose tails enter the integrability hypotheses on [T*, inf).
    std::vector<TailIntegrand> tail_integrands;
    /// True when g(t, y, z, B) does not depend on y (driver ignores the frozen iterate).
    bool y_independent = false;
    /// True when g == 0 identically.
    bool is_zero = false;

    double scalar(double t, double y, double z, double B) const;
};

struct ZooParams {
    double a = 0.0, b = 0.0;  // linear
    double u = 0.0, v = 0.0;  // chenH3
    double p = 2.0, delta = 0.1;
    std::size_t k = 1, d = 1;
};

Generator zoo(const std::string& name, const ZooParams& params = {});

struct ZooEntry {
    std::string name;
    std::string params;
    std::string formula;
};
std::vector<ZooEntry> zoo_list();

/// Fills every descriptor derivable from the attached ones; never overwrites.
Generator translate_hypotheses(Generator g, double p);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class CheckStatus { Pass, Fail, HeuristicPass };
const char* to_string(CheckStatus s) noexcept;

struct Witness {
    double t = 0.0;
    std::vector<double> y1, y2, z1, z2, B;
    double lhs = 0.0, rhs = 0.0;
};

struct HypothesisEntry {
    std::string name;
    CheckStatus status = CheckStatus::Pass;
    std::size_t samples = 0;
    std::optional<Witness> witness;
    std::map<std::string, double> values;
    std::string note;
};

struct HypothesisReport {
    std::vector<HypothesisEntry> entries;
    bool all_pass() const;
    const HypothesisEntry* find(const std::string& name) const;
};

struct SamplerSpec {
    double y_range = 10.0;
    double z_range = 10.0;
    std::size_t count = 100000;
    std::uint64_t seed = 1;
    std::optional<double> t_lo;  // default: first positive grid point
    std::optional<double> t_hi;  // default: grid horizon end
};

HypothesisReport check_H4_sampled(const Generator& g, const H4& desc, double p, const SamplerSpec& sampler,
                                  const TimeGrid& grid, const QuadratureConfig& quad = {},
                                  std::size_t s_class_samples = 2000);

struct H5Estimate {
    double estimate = 0.0;
    double standard_error = 0.0;
    double half_a = 0.0, half_b = 0.0;
    bool stable = true;
    bool finite = true;
};

/// E[(\int_0^T |g(t, 0, 0, B_t)| dt)^p] with per-path trapezoid sums on the ensemble grid.
H5Estimate check_H5(const Generator& g, const PathEnsemble& ens, double p);

}  // namespace bsdecert
