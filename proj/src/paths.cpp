#include "bsdecert/paths.hpp"

#include "bsdecert/error.hpp"
#include "bsdecert/parallel.hpp"
#include "bsdecert/philox.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace bsdecert {

// ---------------------------------------------------------------------------
// Horizon
// ---------------------------------------------------------------------------

TailIntegrand shifted_power_tail(std::string name, double c, double shift, double exponent) {
    require(c >= 0.0, "shifted_power_tail: coefficient must be nonnegative");
    require(shift + 0.0 >= 0.0, "shifted_power_tail: shift must be nonnegative");
    TailIntegrand ti;
    ti.name = std::move(name);
    ti.f = [=](double t) { return c * std::pow(shift + t, -exponent); };
    ti.closed_form_tail = [=](double t_star) {
        if (c == 0.0) return 0.0;
        if (exponent <= 1.0) return std::numeric_limits<double>::infinity();
        return c * std::pow(shift + t_star, 1.0 - exponent) / (exponent - 1.0);
    };
    return ti;
}

TruncatedHorizon truncate_horizon(std::span<const TailIntegrand> tail_integrands, double T_star,
                                  const QuadratureConfig& quad) {
    require(T_star > 0.0 && std::isfinite(T_star), "truncation time must be positive and finite", "T_star");
    quad.validate();
    TruncatedHorizon h;
    h.T_trunc = T_star;
    for (const auto& ti : tail_integrands) {
        TailEntry e;
        e.name = ti.name;
        if (ti.closed_form_tail) {
            e.value = (*ti.closed_form_tail)(T_star);
            e.closed_form = true;
            if (!std::isfinite(e.value)) {
                fail(ErrorKind::HorizonRejected, "tail integral of '" + ti.name + "' diverges", ti.name);
            }
        } else {
            QuadResult r = integrate_tail(ti.f, T_star, quad);
            if (!r.converged || !std::isfinite(r.value)) {
                fail(ErrorKind::HorizonRejected,
                     "tail integral of '" + ti.name + "' diverges or fails to converge numerically", ti.name);
            }
            e.value = r.value;
            e.error = r.error;
        }
        if (e.value < 0.0) {
            fail(ErrorKind::HorizonRejected, "tail integrand '" + ti.name + "' is not nonnegative", ti.name);
        }
        h.tail_report.push_back(std::move(e));
    }
    return h;
}

// ---------------------------------------------------------------------------
// TimeGrid
// ---------------------------------------------------------------------------

TimeGrid::TimeGrid(std::vector<double> points, Horizon horizon)
    : points_(std::move(points)), horizon_(std::move(horizon)) {
    require(points_.size() >= 2, "time grid needs at least 2 points");
    require(points_.front() == 0.0, "time grid must start at exactly 0");
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
        const double step = points_[i + 1] - points_[i];
        require(std::isfinite(points_[i + 1]) && step > 0.0 && std::isfinite(step),
                "time grid must be strictly increasing with finite steps");
    }
}

double TimeGrid::max_dt() const noexcept {
    double m = 0.0;
    for (std::size_t i = 0; i < steps(); ++i) m = std::max(m, dt(i));
    return m;
}

std::size_t TimeGrid::index_at_or_after(double t) const {
    const double eps = 1e-12 * std::max(1.0, std::abs(points_.back()));
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (points_[i] >= t - eps) return i;
    }
    return points_.size() - 1;
}

namespace {

std::vector<double> spaced_points(double T, std::size_t M, Spacing spacing) {
    require(T > 0.0 && std::isfinite(T), "grid horizon T must be positive and finite", "grid.T");
    require(M >= 1, "grid step count M must be >= 1", "grid.M");
    std::vector<double> pts(M + 1);
    if (spacing.kind == Spacing::Kind::Uniform || spacing.ratio == 1.0) {
        for (std::size_t i = 0; i <= M; ++i) pts[i] = T * static_cast<double>(i) / static_cast<double>(M);
    } else {
        const double r = spacing.ratio;
        require(r > 0.0 && std::isfinite(r), "geometric spacing ratio must be positive", "grid.ratio");
        // t_i = T (1 - r^i) / (1 - r^M): steps form a geometric sequence with ratio r.
        const double denom = 1.0 - std::pow(r, static_cast<double>(M));
        for (std::size_t i = 0; i <= M; ++i) {
            pts[i] = T * (1.0 - std::pow(r, static_cast<double>(i))) / denom;
        }
    }
    pts.front() = 0.0;
    pts.back() = T;
    return pts;
}

}  // namespace

TimeGrid build_grid(double T, std::size_t M, Spacing spacing) {
    return TimeGrid(spaced_points(T, M, spacing), FiniteHorizon{T});
}

TimeGrid build_grid(const TruncatedHorizon& horizon, std::size_t M, Spacing spacing) {
    return TimeGrid(spaced_points(horizon.T_trunc, M, spacing), horizon);
}

TimeGrid build_window_grid(double T, double t_lo, std::size_t window_steps, std::size_t prefix_steps) {
    require(T > 0.0 && std::isfinite(T), "window grid: T must be positive", "grid.T");
    require(t_lo >= 0.0 && t_lo < T, "window grid: t_lo must lie in [0, T)", "grid.t_lo");
    require(window_steps >= 1, "window grid: window_steps must be >= 1", "grid.M");
    std::vector<double> pts;
    if (t_lo > 0.0) {
        require(prefix_steps >= 1, "window grid: prefix_steps must be >= 1");
        for (std::size_t i = 0; i < prefix_steps; ++i) {
            pts.push_back(t_lo * static_cast<double>(i) / static_cast<double>(prefix_steps));
        }
    }
    for (std::size_t i = 0; i <= window_steps; ++i) {
        pts.push_back(t_lo + (T - t_lo) * static_cast<double>(i) / static_cast<double>(window_steps));
    }
    pts.back() = T;
    return TimeGrid(std::move(pts), FiniteHorizon{T});
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

PathEnsemble::PathEnsemble(std::shared_ptr<const TimeGrid> grid, std::size_t d, std::size_t P, std::uint64_t seed,
                           std::vector<double> increments)
    : grid_(std::move(grid)), d_(d), P_(P), seed_(seed), increments_(std::move(increments)) {
    require(grid_ != nullptr, "ensemble needs a grid");
    require(d_ >= 1, "Brownian dimension d must be >= 1", "ensemble.d");
    require(P_ >= 1, "path count P must be >= 1", "ensemble.P");
    require(increments_.size() == grid_->steps() * P_ * d_, "increment array must have shape M x P x d");
}

PathEnsemble path_subset(const PathEnsemble& ens, std::size_t first, std::size_t count) {
    require(count >= 1 && first + count <= ens.paths(), "path subset out of range", "ensemble.P");
    const std::size_t d = ens.dim(), M = ens.steps();
    std::vector<double> inc(M * count * d);
    for (std::size_t i = 0; i < M; ++i) {
        const auto src = ens.increments().subspan((i * ens.paths() + first) * d, count * d);
        std::copy(src.begin(), src.end(), inc.begin() + static_cast<std::ptrdiff_t>(i * count * d));
    }
    return PathEnsemble(ens.grid_ptr(), d, count, ens.seed(), std::move(inc));
}

PathEnsemble simulate_brownian(std::shared_ptr<const TimeGrid> grid, std::size_t d, std::size_t P,
                               std::uint64_t seed) {
    require(grid != nullptr, "simulate_brownian needs a grid");
    require(d >= 1, "Brownian dimension d must be >= 1", "ensemble.d");
    require(P >= 1, "path count P must be >= 1", "ensemble.P");
    require(grid->steps() <= std::numeric_limits<std::uint32_t>::max(), "too many steps for the counter layout");
    const std::size_t M = grid->steps();
    std::vector<double> inc(M * P * d);
    const std::size_t blocks = (d + 1) / 2;
    parallel_chunks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = 0; i < M; ++i) {
            const double sd = std::sqrt(grid->dt(i));
            for (std::size_t p = begin; p < end; ++p) {
                double* out = inc.data() + (i * P + p) * d;
                for (std::size_t b = 0; b < blocks; ++b) {
                    const auto z = philox_normal_pair(seed, static_cast<std::uint32_t>(i), p,
                                                      static_cast<std::uint32_t>(b));
                    out[2 * b] = sd * z[0];
                    if (2 * b + 1 < d) out[2 * b + 1] = sd * z[1];
                }
            }
        }
    });
    return PathEnsemble(std::move(grid), d, P, seed, std::move(inc));
}

BrownianValues::BrownianValues(const PathEnsemble& ens)
    : d_(ens.dim()), P_(ens.paths()), n_points_(ens.steps() + 1), values_(n_points_ * P_ * d_, 0.0) {
    const std::size_t row = P_ * d_;
    const auto inc = ens.increments();
    for (std::size_t i = 0; i + 1 < n_points_; ++i) {
        const double* prev = values_.data() + i * row;
        double* next = values_.data() + (i + 1) * row;
        const double* dB = inc.data() + i * row;
        for (std::size_t j = 0; j < row; ++j) next[j] = prev[j] + dB[j];
    }
}

BrownianValues brownian_values(const PathEnsemble& ens) { return BrownianValues(ens); }

// ---------------------------------------------------------------------------
// Binary layout
// ---------------------------------------------------------------------------

namespace {

template <class T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

void put_u64(std::ostream& os, std::uint64_t v) {
    v = to_le(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_f64(std::ostream& os, double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    put_u64(os, bits);
}

std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) fail(ErrorKind::Io, "ensemble file truncated");
    return to_le(v);
}

}  // namespace

void write_block_le(const std::string& path, std::uint64_t d, std::uint64_t P, std::uint64_t M, std::uint64_t seed,
                    std::span<const double> data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot open '" + path + "' for writing", path);
    put_u64(os, d);
    put_u64(os, P);
    put_u64(os, M);
    put_u64(os, seed);
    for (double x : data) put_f64(os, x);
    if (!os) fail(ErrorKind::Io, "write to '" + path + "' failed", path);
}

void save_ensemble(const PathEnsemble& ens, const std::string& path) {
    write_block_le(path, ens.dim(), ens.paths(), ens.steps(), ens.seed(), ens.increments());
}

PathEnsemble load_ensemble(const std::string& path, std::shared_ptr<const TimeGrid> grid) {
    require(grid != nullptr, "load_ensemble needs a grid");
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::Io, "cannot open '" + path + "'", path);
    const std::uint64_t d = get_u64(is), P = get_u64(is), M = get_u64(is), seed = get_u64(is);
    if (M != grid->steps()) fail(ErrorKind::Io, "ensemble step count does not match the grid", path);
    if (d == 0 || P == 0 || d > (1u << 20) || P > (std::uint64_t{1} << 40)) {
        fail(ErrorKind::Io, "ensemble header is corrupt", path);
    }
    std::vector<double> inc(M * P * d);
    for (double& x : inc) {
        const std::uint64_t bits = get_u64(is);
        std::memcpy(&x, &bits, sizeof x);
    }
    return PathEnsemble(std::move(grid), d, P, seed, std::move(inc));
}

}  // namespace bsdecert
