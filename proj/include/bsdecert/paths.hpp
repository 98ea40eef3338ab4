#pragma once

#include "bsdecert/quadrature.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bsdecert {

// ---------------------------------------------------------------------------
// Horizon
// ---------------------------------------------------------------------------

/// A nonnegative function on [T*, inf) whose tail integral enters the
/// integrability hypotheses. `closed_form_tail(T*)` returns the exact tail
/// (+inf for a divergent tail) when the family is known symbolically.
struct TailIntegrand {
    std::string name;
    ScalarFn f;
    std::optional<ScalarFn> closed_form_tail;
};

/// c / (shift + t)^exponent with its closed-form tail registered.
TailIntegrand shifted_power_tail(std::string name, double c, double shift, double exponent);

struct TailEntry {
    std::string name;
    double value = 0.0;
    double error = 0.0;
    bool closed_form = false;
};

struct FiniteHorizon {
    double T = 1.0;
};

struct TruncatedHorizon {
    double T_trunc = 1.0;
    std::vector<TailEntry> tail_report;
};

using Horizon = std::variant<FiniteHorizon, TruncatedHorizon>;

/// Throws HorizonRejected naming the first integrand whose tail diverges or
/// does not converge numerically.
TruncatedHorizon truncate_horizon(std::span<const TailIntegrand> tail_integrands, double T_star,
                                  const QuadratureConfig& quad);

// ---------------------------------------------------------------------------
// TimeGrid
// ---------------------------------------------------------------------------

struct Spacing {
    enum class Kind { Uniform, Geometric };
    Kind kind = Kind::Uniform;
    double ratio = 1.0;  // step_{i+1} = ratio * step_i for Geometric

    static Spacing uniform() { return {}; }
    static Spacing geometric(double r) { return {Kind::Geometric, r}; }
};

class TimeGrid {
public:
    /// Validates the invariants: t_0 == 0, strictly increasing, >= 2 points.
    explicit TimeGrid(std::vector<double> points, Horizon horizon = FiniteHorizon{});

    std::span<const double> points() const noexcept { return points_; }
    double operator[](std::size_t i) const noexcept { return points_[i]; }
    std::size_t size() const noexcept { return points_.size(); }
    std::size_t steps() const noexcept { return points_.size() - 1; }
    double dt(std::size_t i) const noexcept { return points_[i + 1] - points_[i]; }
    double max_dt() const noexcept;
    double horizon_end() const noexcept { return points_.back(); }
    const Horizon& horizon() const noexcept { return horizon_; }
    bool truncated() const noexcept { return std::holds_alternative<TruncatedHorizon>(horizon_); }

    /// First grid index with points[i] >= t (within 1e-12 relative).
    std::size_t index_at_or_after(double t) const;

    bool operator==(const TimeGrid& other) const { return points_ == other.points_; }

private:
    std::vector<double> points_;
    Horizon horizon_;
};

TimeGrid build_grid(double T, std::size_t M, Spacing spacing = Spacing::uniform());
TimeGrid build_grid(const TruncatedHorizon& horizon, std::size_t M, Spacing spacing = Spacing::uniform());

/// Grid [0, t_lo] in `prefix_steps` uniform steps followed by `window_steps`
/// uniform steps on [t_lo, T]; used to resolve a short certified interval
/// while keeping B simulated from time 0.
TimeGrid build_window_grid(double T, double t_lo, std::size_t window_steps, std::size_t prefix_steps = 1);

// ---------------------------------------------------------------------------
// PathEnsemble
// ---------------------------------------------------------------------------

/// Brownian increments laid out as [step][path][dim], row-major.
class PathEnsemble {
public:
    PathEnsemble(std::shared_ptr<const TimeGrid> grid, std::size_t d, std::size_t P, std::uint64_t seed,
                 std::vector<double> increments);

    const TimeGrid& grid() const noexcept { return *grid_; }
    std::shared_ptr<const TimeGrid> grid_ptr() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return d_; }
    std::size_t paths() const noexcept { return P_; }
    std::size_t steps() const noexcept { return grid_->steps(); }
    std::uint64_t seed() const noexcept { return seed_; }

    std::span<const double> increments() const noexcept { return increments_; }
    std::span<const double> increment(std::size_t step, std::size_t path) const noexcept {
        return std::span<const double>(increments_).subspan((step * P_ + path) * d_, d_);
    }

private:
    std::shared_ptr<const TimeGrid> grid_;
    std::size_t d_;
    std::size_t P_;
    std::uint64_t seed_;
    std::vector<double> increments_;
};

PathEnsemble simulate_brownian(std::shared_ptr<const TimeGrid> grid, std::size_t d, std::size_t P,
                               std::uint64_t seed);

/// Paths [first, first + count) as an ensemble of their own (seed kept).
PathEnsemble path_subset(const PathEnsemble& ens, std::size_t first, std::size_t count);

/// Brownian values B_{t_i} laid out as [point][path][dim]; B_{t_0} = 0.
class BrownianValues {
public:
    explicit BrownianValues(const PathEnsemble& ens);

    std::size_t dim() const noexcept { return d_; }
    std::size_t paths() const noexcept { return P_; }
    std::size_t points() const noexcept { return n_points_; }
    std::span<const double> at(std::size_t point, std::size_t path) const noexcept {
        return std::span<const double>(values_).subspan((point * P_ + path) * d_, d_);
    }
    std::span<const double> raw() const noexcept { return values_; }

private:
    std::size_t d_, P_, n_points_;
    std::vector<double> values_;
};

BrownianValues brownian_values(const PathEnsemble& ens);

/// Flat little-endian layout: u64 d, u64 P, u64 M, u64 seed, then M*P*d f64.
void save_ensemble(const PathEnsemble& ens, const std::string& path);
PathEnsemble load_ensemble(const std::string& path, std::shared_ptr<const TimeGrid> grid);

/// Generic block in the same layout (header d, P, M, seed, then M*P*d f64).
void write_block_le(const std::string& path, std::uint64_t d, std::uint64_t P, std::uint64_t M,
                    std::uint64_t seed, std::span<const double> data);

}  // namespace bsdecert
