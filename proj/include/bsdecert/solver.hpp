#pragma once

#include "bsdecert/certificates.hpp"
#include "bsdecert/generator.hpp"
#include "bsdecert/paths.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bsdecert {

/// xi as a functional of B_T.
struct TerminalCondition {
    enum class Kind { Constant, Brownian, AbsCapped };
    Kind kind = Kind::Constant;
    double value = 1.0;  // constant c, scale s (xi = s B_T), or cap c (xi = min(|B_T|, c))

    static TerminalCondition constant(double c) { return {Kind::Constant, c}; }
    static TerminalCondition brownian(double scale = 1.0) { return {Kind::Brownian, scale}; }
    static TerminalCondition abs_capped(double cap = 1.0) { return {Kind::AbsCapped, cap}; }

    /// out is P x k; Brownian fills component j with s B_T^{(j mod d)}.
    void evaluate(const BrownianValues& bv, std::size_t k, std::span<double> out) const;
};

const char* to_string(TerminalCondition::Kind kind) noexcept;

/// Features of (t, B_t). Polynomial: total-degree products of probabilists'
/// Hermite polynomials in x = B_t / sqrt(t). Piecewise: on each of `bins`
/// equal-probability cells of x_1, local powers (x_1 - c)^j for j <= degree.
/// At t = 0 only the constant is active.
struct RegressionBasis {
    enum class Kind { Polynomial, Piecewise };
    Kind kind = Kind::Polynomial;
    std::size_t degree = 3;
    std::size_t bins = 16;
    std::size_t d = 1;

    static RegressionBasis polynomial(std::size_t degree, std::size_t d = 1) {
        return {Kind::Polynomial, degree, 16, d};
    }
    static RegressionBasis piecewise(std::size_t bins, std::size_t local_degree = 1, std::size_t d = 1) {
        return {Kind::Piecewise, local_degree, bins, d};
    }

    std::size_t size() const;
    void validate() const;
    void features(double t, std::span<const double> B, std::span<double> out) const;
};

const char* to_string(RegressionBasis::Kind kind) noexcept;

/// Y on every grid point (layout [point][path][k]) and Z on every step
/// (layout [step][path][k * d], row-major k x d).
class SolutionEnsemble {
public:
    SolutionEnsemble(std::shared_ptr<const TimeGrid> grid, std::size_t k, std::size_t d, std::size_t P);

    const TimeGrid& grid() const noexcept { return *grid_; }
    std::shared_ptr<const TimeGrid> grid_ptr() const noexcept { return grid_; }
    std::size_t k() const noexcept { return k_; }
    std::size_t d() const noexcept { return d_; }
    std::size_t paths() const noexcept { return P_; }
    std::size_t points() const noexcept { return grid_->size(); }

    std::span<double> y(std::size_t point, std::size_t path) noexcept {
        return std::span<double>(Y_).subspan((point * P_ + path) * k_, k_);
    }
    std::span<const double> y(std::size_t point, std::size_t path) const noexcept {
        return std::span<const double>(Y_).subspan((point * P_ + path) * k_, k_);
    }
    std::span<double> z(std::size_t step, std::size_t path) noexcept {
        return std::span<double>(Z_).subspan((step * P_ + path) * k_ * d_, k_ * d_);
    }
    std::span<const double> z(std::size_t step, std::size_t path) const noexcept {
        return std::span<const double>(Z_).subspan((step * P_ + path) * k_ * d_, k_ * d_);
    }
    std::span<const double> y_raw() const noexcept { return Y_; }
    std::span<const double> z_raw() const noexcept { return Z_; }

    bool all_finite() const noexcept;

private:
    std::shared_ptr<const TimeGrid> grid_;
    std::size_t k_, d_, P_;
    std::vector<double> Y_, Z_;
};

struct RegressionStats {
    double ridge_max = 0.0;  // largest ridge lambda used; 0 when every fit was full rank
    std::size_t ridge_fits = 0;
};

/// Least-squares fit of `values` (P x m) on basis features at (t, B_t);
/// returns fitted values (P x m). Ridge on the non-constant diagonal when the
/// normal matrix is numerically rank deficient.
std::vector<double> conditional_expectation(std::span<const double> values, std::size_t m,
                                            const RegressionBasis& basis, std::size_t point,
                                            const BrownianValues& bv, const TimeGrid& grid,
                                            RegressionStats* stats = nullptr);

struct SolverOptions {
    RegressionBasis basis;
    std::size_t n_max = 50;
    double tol_sp = 1e-8;
    std::size_t inner_iters = 1;
    double p = 2.0;
    /// Driver time floor for t_0 = 0; default t_1 / 2.
    std::optional<double> t_floor;
    /// Picard initial iterate: zero, or xi held constant in time.
    enum class Init { Zero, Terminal } init = Init::Zero;
    /// Lower end of the window on which Picard moments are also tracked.
    std::optional<double> window_t_lo;
    /// Regress g dt on the basis too. Off: g(t_i, ...) is already a function
    /// of B_{t_i} and is added pathwise.
    bool project_driver = false;

    void validate() const;
};

/// One backward sweep with the driver frozen at `frozen` (Y only is read).
/// Returns the new iterate; `stats` accumulates ridge usage.
SolutionEnsemble solve_inner(std::span<const double> xi, const SolutionEnsemble& frozen, const Generator& g,
                             const PathEnsemble& ens, const BrownianValues& bv, const SolverOptions& opt,
                             RegressionStats* stats = nullptr);

struct PicardStep {
    std::size_t n = 0;
    double sp_distance = 0.0;       // ||Y^n - Y^{n-1}||_{S^p}
    double mp_distance = 0.0;       // ||Z^n - Z^{n-1}||_{M^p}
    double window_moment = 0.0;     // E sup_{t >= t_lo} |Y^n - Y^{n-1}|^p
    double window_moment_se = 0.0;
    double wall_ms = 0.0;
};

struct DominationCheck {
    std::size_t n = 0;       // compares Y^{n+1} - Y^n against phi_{n-1}(t_lo)
    double moment = 0.0;
    double se = 0.0;
    double bound = 0.0;
    bool ok = true;
};

struct ConvergenceTrace {
    std::vector<PicardStep> steps;
    bool converged = false;
    bool diverged = false;
    std::size_t converged_iterate = 0;  // n with Y^n = Y^{n+1} to tol_sp
    double beta2_dt_max = 0.0;
    RegressionStats regression;
    std::vector<std::string> warnings;
    std::vector<DominationCheck> domination;
};

struct PicardResult {
    SolutionEnsemble solution;
    ConvergenceTrace trace;
};

/// y^0 = 0 (or xi), y^n = solve_inner(xi, y^{n-1}) until the S^p distance
/// drops below tol_sp; flags divergence after 3 consecutive increases.
/// With a majorant, window moments are compared against phi_{n-1}(t_lo) + 3 SE.
PicardResult picard_solve(std::span<const double> xi, const Generator& g, const PathEnsemble& ens,
                          const BrownianValues& bv, const SolverOptions& opt,
                          const MajorantTrace* majorant = nullptr);

// ---------------------------------------------------------------------------
// Norms and diagnostics
// ---------------------------------------------------------------------------

struct MomentEstimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Mean and standard error of value(path) over P paths, summed in fixed chunk order.
MomentEstimate path_moment(std::size_t P, const std::function<double(std::size_t)>& value);

/// (E sup_i |Y_i|^p)^{1/p} over grid points i >= from.
double empirical_sp_norm(const SolutionEnsemble& sol, double p, std::size_t from = 0);
/// (E (sum_i |Z_i|^2 dt_i)^{p/2})^{1/p}.
double empirical_mp_norm(const SolutionEnsemble& sol, double p, std::size_t from = 0);
/// E sup_{i >= from} |Y_i|^p with its standard error.
MomentEstimate sp_moment(const SolutionEnsemble& sol, double p, std::size_t from = 0);

double sp_distance(const SolutionEnsemble& a, const SolutionEnsemble& b, double p, std::size_t from = 0);
double mp_distance(const SolutionEnsemble& a, const SolutionEnsemble& b, double p, std::size_t from = 0);
MomentEstimate sp_distance_moment(const SolutionEnsemble& a, const SolutionEnsemble& b, double p,
                                  std::size_t from = 0);

struct StepResidual {
    double t = 0.0;
    double mean = 0.0;
    double rms = 0.0;
};

/// r = Y_i - (Y_{i+1} + g(t_i, Y_i, Z_i) dt_i - Z_i dB_i) per step.
std::vector<StepResidual> residual_check(const SolutionEnsemble& sol, std::span<const double> xi,
                                         const Generator& g, const PathEnsemble& ens, const BrownianValues& bv,
                                         std::optional<double> t_floor = std::nullopt);

struct UniquenessReport {
    bool same_paths = true;
    double sp_distance = 0.0;  // pathwise, same paths only
    double mp_distance = 0.0;
    double norm_a = 0.0, norm_b = 0.0;  // S^p norms of the two solutions
    double se_a = 0.0, se_b = 0.0;      // standard errors of those norms
    double pooled_se = 0.0;
    std::size_t se_batches = 0;         // 0: across-path SE; otherwise batch means
    double y0_a = 0.0, y0_b = 0.0;
    ConvergenceTrace trace_a, trace_b;
};

/// S^p norm of the Picard solution on ens, with the standard error taken from
/// `batches` independent solves on disjoint path batches (sd / sqrt(batches)).
MomentEstimate batch_sp_norm(const Generator& g, const TerminalCondition& xi, const PathEnsemble& ens,
                             const SolverOptions& opt, std::size_t batches);

/// Two Picard solves with different options (basis, init) and optionally
/// different ensembles. With the same ensemble, pathwise distances are
/// reported; otherwise the S^p norms are compared against their pooled SE.
/// se_batches > 1 replaces the across-path SE by batch means.
UniquenessReport uniqueness_probe(const Generator& g, const TerminalCondition& xi, const PathEnsemble& ens_a,
                                  const PathEnsemble& ens_b, const SolverOptions& opt_a,
                                  const SolverOptions& opt_b, std::size_t se_batches = 0);

/// Mean of Y at grid point i (first component) with its standard error.
MomentEstimate mean_y(const SolutionEnsemble& sol, std::size_t point, std::size_t component = 0);

}  // namespace bsdecert
