#pragma once

#include "bsdecert/modulus.hpp"
#include "bsdecert/paths.hpp"
#include "bsdecert/quadrature.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace bsdecert {

struct ConstantLedger {
    double p = 2.0;
    double c_p = 1.0;
    double m_p = 64.0;
    double k_p = 64.0;
    double bar_m_p = 64.0;
    double hat_m_p = 64.0;
    double tilde_m_p = 64.0;
};

struct LedgerOverrides {
    std::optional<double> m_p, k_p, bar_m_p, hat_m_p, tilde_m_p;
};

/// p / 2 * min(p - 1, 1).
double ito_constant(double p);

/// 16 p^2 / min(p - 1, 1)^2.
double default_ledger_constant(double p);

ConstantLedger make_ledger(double p, const LedgerOverrides& overrides = {});

struct IntervalBudget {
    double t_lo = 0.0, t_hi = 0.0;
    double b_integral = 0.0;
    double alpha_hat = 0.0;
    double beta_hat = 0.0;
};

struct Partition {
    std::vector<double> points;  // T_0 = 0 < ... < T_N = T
    std::vector<IntervalBudget> intervals;
    double b_budget = 0.5;
    double ab_budget = 0.0;  // ln 2 / max(hat_m_p, bar_m_p)
    double total_b = 0.0, total_alpha_hat = 0.0, total_beta_hat = 0.0;

    std::size_t size() const noexcept { return intervals.size(); }
};

/// Greedy backward sweep: each interval [T_{i-1}, T_i] is the longest one with
/// \int b <= 1/2 and \int alpha^{p/(p-1)} + \int beta^2 <= ln 2 / max(hat_m_p, bar_m_p).
/// Grid points are preferred; inside the first failing cell the end is located
/// by bisection to relative accuracy `bisect_rel` of the budget.
Partition compute_partition(const ScalarFn& alpha, const ScalarFn& beta, const ScalarFn& b_env,
                            const ConstantLedger& ledger, const TimeGrid& grid, const QuadratureConfig& quad = {},
                            double bisect_rel = 1e-9);

struct BoundM {
    double C_hat = 0.0;
    double M = 0.0;
    double a_integral = 0.0;
};

/// C_hat = hat_m_p exp(hat_m_p (alpha_hat + beta_hat)) (E|xi|^p + E[(\int |g(., 0, 0)|)^p]),
/// M = 2 C_hat + 2 \int_{t_lo}^{t_hi} a.
BoundM constant_M(const ConstantLedger& ledger, double xi_pth_moment, double g00_integral_pth_moment,
                  const ScalarFn& a_env, double alpha_hat, double beta_hat, double t_lo, double t_hi,
                  const QuadratureConfig& quad = {});

struct MajorantOptions {
    std::size_t n_max = 500;
    double tol = 1e-8;
    /// Target node count of the refined quadrature grid on the interval.
    std::size_t refine_nodes = 16384;
};

struct MajorantTrace {
    double M = 0.0;
    double t_lo = 0.0, t_hi = 0.0;
    double gate_integral = 0.0;     // \int_{t_lo}^{t_hi} rho(s, M) ds
    std::vector<double> t;          // solver grid nodes inside [t_lo, t_hi]
    std::vector<std::vector<double>> phi;  // phi[n][j] at t[j]
    std::vector<double> phi_at_lo;  // phi_n(t_lo)
    std::size_t refined_nodes = 0;
    std::size_t n_stop = 0;
    bool converged = false;
    bool monotone = true;
    bool bounded_by_M = true;
};

/// phi_0(t) = \int_t^{t_hi} rho(s, M) ds, phi_{n+1}(t) = \int_t^{t_hi} rho(s, phi_n(s)) ds
/// by the trapezoid rule on the solver nodes of [t_lo, t_hi], each cell split
/// evenly. Throws GateFailed when \int rho(s, M) > M.
MajorantTrace majorant_sequence(const TimeModulus& rho, double M, double t_lo, double t_hi, const TimeGrid& grid,
                                const MajorantOptions& opt = {});

}  // namespace bsdecert
