#pragma once

#include "bsdecert/certificates.hpp"
#include "bsdecert/generator.hpp"
#include "bsdecert/solver.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bsdecert {

/// phi_t or f_t as a functional of the solution state at (t, Y_t, Z_t, B_t).
using ProcessFn = std::function<double(double t, std::span<const double> y, std::span<const double> z,
                                       std::span<const double> B)>;

/// |g| <= mu(t) [psi^{1/p}(t, |y|^p) + phi_t] + nu(t) |z| + f_t.
/// Missing entries are identically zero.
struct AssumptionA {
    ScalarFn mu;
    ScalarFn nu;
    std::optional<TimeModulus> psi;
    ProcessFn phi;
    ProcessFn f;
};

/// mu = alpha, nu = beta, psi = 0, phi_t = rho^{1/p}(t, |y_t|^p), f_t = |g(t, 0, 0, B_t)|.
AssumptionA assumption_from_h4(const Generator& g, double p);

struct Ingredient {
    std::string name;
    double value = 0.0;
};

struct EstimateReport {
    double lhs = 0.0;
    double lhs_se = 0.0;
    std::vector<Ingredient> ingredients;
    double rhs_shape = 0.0;
    double fitted_constant = 0.0;  // lhs / rhs_shape, 0 when both vanish
    double ledger_constant = 0.0;
    double rhs_at_ledger = 0.0;
    bool pass_at_ledger = false;

    double ingredient(const std::string& name) const;
};

struct EstimateOptions {
    double p = 2.0;
    /// Driver time floor for t_0 = 0; default t_1 / 2.
    std::optional<double> t_floor;
};

/// E(int_t^T |z|^2)^{p/2} against E|xi|^p + C_t {E sup|y|^p + int psi(E|y|^p)
/// + E int phi^p + E(int f)^p}; passes when lhs <= m_p * rhs_shape.
EstimateReport prop1_report(const SolutionEnsemble& sol, std::span<const double> xi, const BrownianValues& bv,
                            const AssumptionA& A, std::size_t point, const ConstantLedger& ledger, const EstimateOptions& opt = {});

/// E sup_{s >= t} |y|^p against K_t {E|xi|^p + E(int f)^p + E int phi^p / 2
/// + int psi / 2}, K_t = exp(k_p (mu_bar + nu_bar)). Passes when lhs is at most
/// K_t {k_p E|xi|^p + k_p E(int f)^p + E int phi^p / 2 + int psi / 2}.
EstimateReport prop2_report(const SolutionEnsemble& sol, std::span<const double> xi, const BrownianValues& bv,
                            const AssumptionA& A, std::size_t point, const ConstantLedger& ledger, const EstimateOptions& opt = {});

struct PathwisePoint {
    double t = 0.0;
    double pass_fraction = 0.0;
    double worst_excess = 0.0;  // max over paths of lhs - rhs - slack (<= 0 when all pass)
};

struct PathwiseOptions {
    double p = 2.0;
    double slack_c = 10.0;
    std::optional<double> t_floor;
};

/// Pathwise |Y_i|^p + c(p) sum |Y|^{p-2}|Z|^2 dt <= |xi|^p + p sum |Y|^{p-2}<Y, g> dt
/// - p sum |Y|^{p-2}<Y, Z dB> + slack, per starting index i. slack is
/// slack_c * sqrt(dt_max) * p * (sum (|Y|^{p-2}|Z|^2)^2 dt)^{1/2} plus 1e-12 (1 + |xi|^p).
std::vector<PathwisePoint> lemma2_check(const SolutionEnsemble& sol, std::span<const double> xi, const Generator& g,
                                      const PathEnsemble& ens, const PathwiseOptions& opt = {});

struct PsiBoundReport {
    double lhs = 0.0;     // E sum psi(t_i, |Y_i|^p) dt_i
    double lhs_se = 0.0;
    double rhs = 0.0;     // sum a(t_i) dt_i + sum b(t_i) dt_i * E sup |Y|^p
    double rhs_se = 0.0;
    double a_integral = 0.0;  // exact int_0^T a, int_0^T b by quadrature
    double b_integral = 0.0;
    double sup_moment = 0.0;
    bool holds = false;       // lhs <= rhs + 3 pooled SE
};

/// Both sides use the same left-point rule at max(t_i, t_floor).
PsiBoundReport remark1_bound(const TimeModulus& psi, const SolutionEnsemble& sol, double p,
                            std::optional<double> t_floor = std::nullopt, const QuadratureConfig& quad = {});

}  // namespace bsdecert
