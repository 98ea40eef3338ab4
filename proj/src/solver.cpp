#include "bsdecert/solver.hpp"

#include "bsdecert/error.hpp"
#include "bsdecert/parallel.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <tuple>

namespace bsdecert {

const char* to_string(TerminalCondition::Kind kind) noexcept {
    switch (kind) {
        case TerminalCondition::Kind::Constant: return "constant";
        case TerminalCondition::Kind::Brownian: return "brownian";
        case TerminalCondition::Kind::AbsCapped: return "abs_capped";
    }
    return "unknown";
}

const char* to_string(RegressionBasis::Kind kind) noexcept {
    return kind == RegressionBasis::Kind::Polynomial ? "polynomial" : "piecewise";
}

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double diff2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Sum over paths of fn(p), reduced chunk by chunk in a fixed order.
template <class Fn>
std::vector<double> chunked_sums(std::size_t P, std::size_t width, Fn fn) {
    const std::size_t nc = chunk_count(P);
    std::vector<double> partial(nc * width, 0.0);
    parallel_chunks(P, [&](std::size_t c, std::size_t b, std::size_t e) {
        double* acc = partial.data() + c * width;
        for (std::size_t p = b; p < e; ++p) fn(p, acc);
    });
    std::vector<double> total(width, 0.0);
    for (std::size_t c = 0; c < nc; ++c)
        for (std::size_t j = 0; j < width; ++j) total[j] += partial[c * width + j];
    return total;
}

MomentEstimate moment_of(std::size_t P, const std::function<double(std::size_t)>& value) {
    auto s = chunked_sums(P, 2, [&](std::size_t p, double* acc) {
        const double v = value(p);
        acc[0] += v;
        acc[1] += v * v;
    });
    MomentEstimate m;
    const double n = static_cast<double>(P);
    m.mean = s[0] / n;
    const double var = P > 1 ? std::max(0.0, (s[1] - n * m.mean * m.mean) / (n - 1.0)) : 0.0;
    m.se = std::sqrt(var / n);
    return m;
}

std::vector<std::vector<std::size_t>> multi_indices(std::size_t d, std::size_t degree) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t total = 0; total <= degree; ++total) {
        std::vector<std::size_t> a(d, 0);
        std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t left) {
            if (pos + 1 == d) {
                a[pos] = left;
                out.push_back(a);
                return;
            }
            for (std::size_t v = left + 1; v-- > 0;) {
                a[pos] = v;
                rec(pos + 1, left - v);
            }
        };
        rec(0, total);
    }
    return out;
}

/// Least-squares projector for one grid point.
class Projector {
public:
    Projector(const RegressionBasis& basis, std::size_t point, const BrownianValues& bv, const TimeGrid& grid,
              RegressionStats* stats)
        : P_(bv.paths()), trivial_(grid[point] <= 0.0) {
        if (trivial_) return;
        q_ = basis.size();
        require(P_ >= q_, "regression needs at least as many paths as basis functions", "paths");
        F_.resize(P_ * q_);
        const double t = grid[point];
        parallel_chunks(P_, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t p = b; p < e; ++p)
                basis.features(t, bv.at(point, p), std::span<double>(F_).subspan(p * q_, q_));
        });
        const std::size_t q = q_;
        auto g = chunked_sums(P_, q * q, [&](std::size_t p, double* acc) {
            const double* f = F_.data() + p * q;
            for (std::size_t r = 0; r < q; ++r)
                for (std::size_t c = 0; c < q; ++c) acc[r * q + c] += f[r] * f[c];
        });
        Eigen::MatrixXd G = Eigen::Map<Eigen::MatrixXd>(g.data(), static_cast<Eigen::Index>(q),
                                                        static_cast<Eigen::Index>(q));
        ldlt_.compute(G);
        const auto D = ldlt_.vectorD();
        const double dmax = D.cwiseAbs().maxCoeff();
        const double dmin = D.minCoeff();
        if (ldlt_.info() != Eigen::Success || !(dmin > 1e-13 * dmax)) {
            const double lambda = 1e-10 * std::max(G.diagonal().maxCoeff(), 1.0);
            const std::size_t first = basis.kind == RegressionBasis::Kind::Polynomial ? 1 : 0;
            for (std::size_t j = first; j < q; ++j) G(j, j) += lambda;
            ldlt_.compute(G);
            if (stats) {
                stats->ridge_max = std::max(stats->ridge_max, lambda);
                ++stats->ridge_fits;
            }
        }
    }

    /// values P x m -> fitted P x m.
    std::vector<double> fit(std::span<const double> values, std::size_t m) const {
        std::vector<double> out(P_ * m);
        if (trivial_) {
            auto s = chunked_sums(P_, m, [&](std::size_t p, double* acc) {
                for (std::size_t j = 0; j < m; ++j) acc[j] += values[p * m + j];
            });
            for (std::size_t p = 0; p < P_; ++p)
                for (std::size_t j = 0; j < m; ++j) out[p * m + j] = s[j] / static_cast<double>(P_);
            return out;
        }
        const std::size_t q = q_;
        auto r = chunked_sums(P_, q * m, [&](std::size_t p, double* acc) {
            const double* f = F_.data() + p * q;
            for (std::size_t a = 0; a < q; ++a)
                for (std::size_t j = 0; j < m; ++j) acc[a * m + j] += f[a] * values[p * m + j];
        });
        Eigen::MatrixXd R(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(m));
        for (std::size_t a = 0; a < q; ++a)
            for (std::size_t j = 0; j < m; ++j) R(a, j) = r[a * m + j];
        const Eigen::MatrixXd C = ldlt_.solve(R);
        parallel_chunks(P_, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t p = b; p < e; ++p) {
                const double* f = F_.data() + p * q;
                for (std::size_t j = 0; j < m; ++j) {
                    double v = 0.0;
                    for (std::size_t a = 0; a < q; ++a) v += f[a] * C(a, j);
                    out[p * m + j] = v;
                }
            }
        });
        return out;
    }

private:
    std::size_t P_;
    bool trivial_;
    std::size_t q_ = 1;
    std::vector<double> F_;
    Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

double default_t_floor(const TimeGrid& grid) { return 0.5 * grid[1]; }

}  // namespace

// ---------------------------------------------------------------------------
// TerminalCondition, RegressionBasis, SolutionEnsemble
// ---------------------------------------------------------------------------

void TerminalCondition::evaluate(const BrownianValues& bv, std::size_t k, std::span<double> out) const {
    const std::size_t P = bv.paths(), d = bv.dim(), last = bv.points() - 1;
    require(out.size() == P * k, "terminal output must be P x k", "xi");
    require(std::isfinite(value), "terminal parameter must be finite", "terminal.value");
    if (kind == Kind::AbsCapped) require(value > 0.0, "cap must be positive", "terminal.value");
    for (std::size_t p = 0; p < P; ++p) {
        auto B = bv.at(last, p);
        for (std::size_t j = 0; j < k; ++j) {
            double v = value;
            if (kind == Kind::Brownian) v = value * B[j % d];
            if (kind == Kind::AbsCapped) v = std::min(std::sqrt(norm2(B)), value);
            out[p * k + j] = v;
        }
    }
}

std::size_t RegressionBasis::size() const {
    if (kind == Kind::Piecewise) return bins * (degree + 1);
    // C(d + degree, degree)
    double c = 1.0;
    for (std::size_t i = 1; i <= degree; ++i) c = c * static_cast<double>(d + i) / static_cast<double>(i);
    return static_cast<std::size_t>(std::llround(c));
}

void RegressionBasis::validate() const {
    require(d >= 1, "basis dimension must be positive", "basis.d");
    if (kind == Kind::Polynomial) {
        require(degree <= 12, "polynomial degree must be at most 12", "basis.degree");
        require(d <= 16, "polynomial basis supports d <= 16", "basis.d");
    }
    else {
        require(bins >= 1 && bins <= 4096, "bins must lie in [1, 4096]", "basis.bins");
        require(degree <= 3, "piecewise local degree must be at most 3", "basis.degree");
    }
}

void RegressionBasis::features(double t, std::span<const double> B, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    if (kind == Kind::Piecewise) {
        if (t <= 0.0) {
            out[0] = 1.0;
            return;
        }
        const double x = B[0] / std::sqrt(t);
        static thread_local std::vector<double> edges;
        static thread_local std::size_t edges_for = 0;
        if (edges_for != bins) {
            boost::math::normal_distribution<double> N;
            edges.clear();
            for (std::size_t j = 1; j < bins; ++j)
                edges.push_back(boost::math::quantile(N, static_cast<double>(j) / static_cast<double>(bins)));
            edges_for = bins;
        }
        const auto cell = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
        double c = 0.0;
        if (bins > 1) {
            if (cell == 0) c = edges.front();
            else if (cell == bins - 1) c = edges.back();
            else c = 0.5 * (edges[cell - 1] + edges[cell]);
        }
        double v = 1.0;
        for (std::size_t j = 0; j <= degree; ++j, v *= x - c) out[cell * (degree + 1) + j] = v;
        return;
    }
    out[0] = 1.0;
    if (t <= 0.0) return;
    static thread_local std::vector<std::vector<std::size_t>> idx;
    static thread_local std::pair<std::size_t, std::size_t> idx_for{0, 0};
    if (idx_for != std::pair<std::size_t, std::size_t>{d, degree} || idx.empty()) {
        idx = multi_indices(d, degree);
        idx_for = {d, degree};
    }
    const double s = 1.0 / std::sqrt(t);
    double he[16][13];
    for (std::size_t j = 0; j < d; ++j) {
        const double x = B[j] * s;
        he[j][0] = 1.0;
        if (degree >= 1) he[j][1] = x;
        for (std::size_t n = 1; n < degree; ++n) he[j][n + 1] = x * he[j][n] - static_cast<double>(n) * he[j][n - 1];
    }
    for (std::size_t a = 0; a < idx.size(); ++a) {
        double v = 1.0;
        for (std::size_t j = 0; j < d; ++j) v *= he[j][idx[a][j]];
        out[a] = v;
    }
}

SolutionEnsemble::SolutionEnsemble(std::shared_ptr<const TimeGrid> grid, std::size_t k, std::size_t d, std::size_t P)
    : grid_(std::move(grid)), k_(k), d_(d), P_(P) {
    require(grid_ != nullptr, "solution needs a grid", "grid");
    require(k >= 1 && d >= 1 && P >= 1, "solution dimensions must be positive", "solution");
    Y_.assign(grid_->size() * P * k, 0.0);
    Z_.assign(grid_->steps() * P * k * d, 0.0);
}

bool SolutionEnsemble::all_finite() const noexcept {
    for (double v : Y_)
        if (!std::isfinite(v)) return false;
    for (double v : Z_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::vector<double> conditional_expectation(std::span<const double> values, std::size_t m,
                                            const RegressionBasis& basis, std::size_t point,
                                            const BrownianValues& bv, const TimeGrid& grid,
                                            RegressionStats* stats) {
    basis.validate();
    require(basis.d == bv.dim(), "basis dimension must match the Brownian dimension", "basis.d");
    require(values.size() == bv.paths() * m, "values must be P x m", "values");
    require(point < grid.size(), "grid point out of range", "point");
    Projector proj(basis, point, bv, grid, stats);
    return proj.fit(values, m);
}

void SolverOptions::validate() const {
    basis.validate();
    require(n_max >= 1, "n_max must be positive", "solver.n_max");
    require(tol_sp > 0.0, "tol_sp must be positive", "solver.tol_sp");
    require(inner_iters >= 1, "inner_iters must be positive", "solver.inner_iters");
    require(p > 1.0 && std::isfinite(p), "p must exceed 1", "p");
    if (t_floor) require(*t_floor > 0.0, "t_floor must be positive", "solver.t_floor");
}

// ---------------------------------------------------------------------------
// Backward sweep
// ---------------------------------------------------------------------------

SolutionEnsemble solve_inner(std::span<const double> xi, const SolutionEnsemble& frozen, const Generator& g,
                             const PathEnsemble& ens, const BrownianValues& bv, const SolverOptions& opt,
                             RegressionStats* stats) {
    opt.validate();
    const TimeGrid& grid = ens.grid();
    const std::size_t k = g.k, d = g.d, P = ens.paths(), M = grid.steps();
    require(ens.dim() == d, "ensemble dimension must match the generator", "ensemble.d");
    require(opt.basis.d == d, "basis dimension must match the generator", "basis.d");
    require(xi.size() == P * k, "terminal values must be P x k", "xi");
    require(frozen.paths() == P && frozen.k() == k && frozen.points() == grid.size(),
            "frozen iterate does not match the ensemble", "frozen_y");
    const double t_floor = opt.t_floor.value_or(default_t_floor(grid));

    SolutionEnsemble sol(ens.grid_ptr(), k, d, P);
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t j = 0; j < k; ++j) sol.y(M, p)[j] = xi[p * k + j];

    std::vector<double> next(P * k), W(P * k * d), G(P * k);
    for (std::size_t i = M; i-- > 0;) {
        const double dt = grid.dt(i);
        const double te = std::max(grid[i], t_floor);
        Projector proj(opt.basis, i, bv, grid, stats);
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t j = 0; j < k; ++j) next[p * k + j] = sol.y(i + 1, p)[j];
        const std::vector<double> yhat = proj.fit(next, k);
        parallel_chunks(P, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t p = b; p < e; ++p) {
                auto dB = ens.increment(i, p);
                for (std::size_t a = 0; a < k; ++a) {
                    const double r = next[p * k + a] - yhat[p * k + a];
                    for (std::size_t c = 0; c < d; ++c) W[(p * k + a) * d + c] = r * dB[c] / dt;
                }
            }
        });
        const std::vector<double> zfit = proj.fit(W, k * d);
        for (std::size_t p = 0; p < P; ++p) std::copy_n(zfit.begin() + p * k * d, k * d, sol.z(i, p).begin());
        parallel_chunks(P, [&](std::size_t, std::size_t b, std::size_t e) {
            std::vector<double> out(k);
            for (std::size_t p = b; p < e; ++p) {
                g.eval(te, frozen.y(i, p), sol.z(i, p), bv.at(i, p), out);
                for (std::size_t a = 0; a < k; ++a) G[p * k + a] = out[a] * dt;
            }
        });
        const std::vector<double> gfit = opt.project_driver ? proj.fit(G, k) : G;
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t a = 0; a < k; ++a) sol.y(i, p)[a] = yhat[p * k + a] + gfit[p * k + a];
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

MomentEstimate path_moment(std::size_t P, const std::function<double(std::size_t)>& value) {
    return moment_of(P, value);
}

MomentEstimate sp_moment(const SolutionEnsemble& sol, double p, std::size_t from) {
    const std::size_t n = sol.points();
    return moment_of(sol.paths(), [&](std::size_t q) {
        double m = 0.0;
        for (std::size_t i = from; i < n; ++i) m = std::max(m, norm2(sol.y(i, q)));
        return std::pow(m, 0.5 * p);
    });
}

MomentEstimate sp_distance_moment(const SolutionEnsemble& a, const SolutionEnsemble& b, double p,
                                  std::size_t from) {
    require(a.paths() == b.paths() && a.points() == b.points() && a.k() == b.k(), "solutions do not match",
            "solution");
    const std::size_t n = a.points();
    return moment_of(a.paths(), [&](std::size_t q) {
        double m = 0.0;
        for (std::size_t i = from; i < n; ++i) m = std::max(m, diff2(a.y(i, q), b.y(i, q)));
        return std::pow(m, 0.5 * p);
    });
}

double empirical_sp_norm(const SolutionEnsemble& sol, double p, std::size_t from) {
    return std::pow(sp_moment(sol, p, from).mean, 1.0 / p);
}

double sp_distance(const SolutionEnsemble& a, const SolutionEnsemble& b, double p, std::size_t from) {
    return std::pow(sp_distance_moment(a, b, p, from).mean, 1.0 / p);
}

double empirical_mp_norm(const SolutionEnsemble& sol, double p, std::size_t from) {
    const auto& grid = sol.grid();
    auto m = moment_of(sol.paths(), [&](std::size_t q) {
        double s = 0.0;
        for (std::size_t i = from; i < grid.steps(); ++i) s += norm2(sol.z(i, q)) * grid.dt(i);
        return std::pow(s, 0.5 * p);
    });
    return std::pow(m.mean, 1.0 / p);
}

double mp_distance(const SolutionEnsemble& a, const SolutionEnsemble& b, double p, std::size_t from) {
    require(a.paths() == b.paths() && a.points() == b.points() && a.k() == b.k() && a.d() == b.d(),
            "solutions do not match", "solution");
    const auto& grid = a.grid();
    auto m = moment_of(a.paths(), [&](std::size_t q) {
        double s = 0.0;
        for (std::size_t i = from; i < grid.steps(); ++i) s += diff2(a.z(i, q), b.z(i, q)) * grid.dt(i);
        return std::pow(s, 0.5 * p);
    });
    return std::pow(m.mean, 1.0 / p);
}

MomentEstimate mean_y(const SolutionEnsemble& sol, std::size_t point, std::size_t component) {
    require(point < sol.points() && component < sol.k(), "index out of range", "point");
    return moment_of(sol.paths(), [&](std::size_t q) { return sol.y(point, q)[component]; });
}

// ---------------------------------------------------------------------------
// Picard
// ---------------------------------------------------------------------------

PicardResult picard_solve(std::span<const double> xi, const Generator& g, const PathEnsemble& ens,
                          const BrownianValues& bv, const SolverOptions& opt, const MajorantTrace* majorant) {
    opt.validate();
    const TimeGrid& grid = ens.grid();
    const std::size_t k = g.k, d = g.d, P = ens.paths();
    SolutionEnsemble prev(ens.grid_ptr(), k, d, P);
    if (opt.init == SolverOptions::Init::Terminal) {
        for (std::size_t i = 0; i < grid.size(); ++i)
            for (std::size_t q = 0; q < P; ++q)
                for (std::size_t j = 0; j < k; ++j) prev.y(i, q)[j] = xi[q * k + j];
    }

    ConvergenceTrace trace;
    if (g.desc.h4 && g.desc.h4->beta) {
        const double tf = opt.t_floor.value_or(default_t_floor(grid));
        for (std::size_t i = 0; i < grid.steps(); ++i) {
            const double b = g.desc.h4->beta(std::max(grid[i], tf));
            trace.beta2_dt_max = std::max(trace.beta2_dt_max, b * b * grid.dt(i));
        }
        if (trace.beta2_dt_max > 0.25)
            trace.warnings.push_back("beta^2 dt exceeds 0.25 on some step; the per-step z coupling may not contract");
    }
    std::optional<double> lo = opt.window_t_lo;
    if (majorant && !lo) lo = majorant->t_lo;
    const std::size_t from = lo ? grid.index_at_or_after(*lo) : 0;

    std::optional<SolutionEnsemble> cur;
    std::size_t increases = 0;
    double last = std::numeric_limits<double>::infinity();
    for (std::size_t n = 1; n <= opt.n_max; ++n) {
        const auto t0 = std::chrono::steady_clock::now();
        cur.emplace(solve_inner(xi, prev, g, ens, bv, opt, &trace.regression));
        if (!cur->all_finite()) {
            trace.diverged = true;
            trace.warnings.push_back("iterate " + std::to_string(n) + " is not finite");
            break;
        }
        PicardStep st;
        st.n = n;
        st.sp_distance = sp_distance(*cur, prev, opt.p);
        st.mp_distance = mp_distance(*cur, prev, opt.p);
        const MomentEstimate wm = sp_distance_moment(*cur, prev, opt.p, from);
        st.window_moment = wm.mean;
        st.window_moment_se = wm.se;
        st.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        trace.steps.push_back(st);

        if (majorant && n >= 2 && !majorant->phi_at_lo.empty()) {
            DominationCheck dc;
            dc.n = n - 1;
            dc.moment = wm.mean;
            dc.se = wm.se;
            const std::size_t idx = std::min(n - 2, majorant->phi_at_lo.size() - 1);
            dc.bound = majorant->phi_at_lo[idx];
            dc.ok = dc.moment <= dc.bound + 3.0 * dc.se;
            trace.domination.push_back(dc);
        }

        increases = st.sp_distance > last ? increases + 1 : 0;
        last = st.sp_distance;
        prev = std::move(*cur);
        if (st.sp_distance < opt.tol_sp) {
            trace.converged = true;
            trace.converged_iterate = n - 1;
            break;
        }
        if (increases >= 3) {
            trace.diverged = true;
            break;
        }
    }
    return PicardResult{std::move(prev), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

std::vector<StepResidual> residual_check(const SolutionEnsemble& sol, std::span<const double> xi,
                                         const Generator& g, const PathEnsemble& ens, const BrownianValues& bv,
                                         std::optional<double> t_floor) {
    const TimeGrid& grid = sol.grid();
    const std::size_t k = sol.k(), d = sol.d(), P = sol.paths(), M = grid.steps();
    require(xi.size() == P * k, "terminal values must be P x k", "xi");
    require(ens.paths() == P && ens.dim() == d, "ensemble does not match the solution", "ensemble");
    const double tf = t_floor.value_or(default_t_floor(grid));
    std::vector<StepResidual> out(M);
    for (std::size_t i = 0; i < M; ++i) {
        const double dt = grid.dt(i), te = std::max(grid[i], tf);
        auto s = chunked_sums(P, 2, [&](std::size_t p, double* acc) {
            std::vector<double> gv(k);
            g.eval(te, sol.y(i, p), sol.z(i, p), bv.at(i, p), gv);
            auto dB = ens.increment(i, p);
            auto z = sol.z(i, p);
            for (std::size_t a = 0; a < k; ++a) {
                const double next = (i + 1 == M) ? xi[p * k + a] : sol.y(i + 1, p)[a];
                double zdb = 0.0;
                for (std::size_t c = 0; c < d; ++c) zdb += z[a * d + c] * dB[c];
                const double r = sol.y(i, p)[a] - (next + gv[a] * dt - zdb);
                acc[0] += r;
                acc[1] += r * r;
            }
        });
        const double n = static_cast<double>(P * k);
        out[i] = {grid[i], s[0] / n, std::sqrt(s[1] / n)};
    }
    return out;
}

namespace {

PicardResult solve_on(const Generator& g, const TerminalCondition& xi, const PathEnsemble& ens,
                      const SolverOptions& opt) {
    BrownianValues bv(ens);
    std::vector<double> x(ens.paths() * g.k);
    xi.evaluate(bv, g.k, x);
    return picard_solve(x, g, ens, bv, opt);
}

}  // namespace

MomentEstimate batch_sp_norm(const Generator& g, const TerminalCondition& xi, const PathEnsemble& ens,
                             const SolverOptions& opt, std::size_t batches) {
    require(batches >= 2, "batch SE needs at least 2 batches", "se_batches");
    const std::size_t per = ens.paths() / batches;
    require(per >= 4 * opt.basis.size(), "batches too small for the regression basis", "se_batches");
    std::vector<double> norms;
    for (std::size_t b = 0; b < batches; ++b) {
        PicardResult r = solve_on(g, xi, path_subset(ens, b * per, per), opt);
        if (r.trace.diverged) fail(ErrorKind::Divergence, "a batch solve diverged", "se_batches");
        norms.push_back(empirical_sp_norm(r.solution, opt.p));
    }
    const double K = static_cast<double>(batches);
    double mean = 0.0, var = 0.0;
    for (double v : norms) mean += v / K;
    for (double v : norms) var += (v - mean) * (v - mean) / (K - 1.0);
    return {mean, std::sqrt(var / K)};
}

UniquenessReport uniqueness_probe(const Generator& g, const TerminalCondition& xi, const PathEnsemble& ens_a,
                                  const PathEnsemble& ens_b, const SolverOptions& opt_a,
                                  const SolverOptions& opt_b, std::size_t se_batches) {
    require(opt_a.p == opt_b.p, "both solves must use the same p", "p");
    require(se_batches != 1, "se_batches must be 0 or at least 2", "se_batches");
    const double p = opt_a.p;
    PicardResult a = solve_on(g, xi, ens_a, opt_a);
    PicardResult b = solve_on(g, xi, ens_b, opt_b);
    if (a.trace.diverged || b.trace.diverged)
        fail(ErrorKind::Divergence, "a uniqueness solve diverged", a.trace.diverged ? "solve_a" : "solve_b");

    UniquenessReport rep;
    rep.same_paths = &ens_a == &ens_b ||
                     (ens_a.seed() == ens_b.seed() && ens_a.paths() == ens_b.paths() && ens_a.grid() == ens_b.grid());
    if (rep.same_paths) {
        rep.sp_distance = sp_distance(a.solution, b.solution, p);
        rep.mp_distance = mp_distance(a.solution, b.solution, p);
    }
    auto norm_se = [p](const MomentEstimate& m) {
        const double nrm = std::pow(m.mean, 1.0 / p);
        const double se = m.mean > 0.0 ? m.se * nrm / (p * m.mean) : 0.0;
        return std::pair{nrm, se};
    };
    std::tie(rep.norm_a, rep.se_a) = norm_se(sp_moment(a.solution, p));
    std::tie(rep.norm_b, rep.se_b) = norm_se(sp_moment(b.solution, p));
    if (se_batches > 1) {
        rep.se_batches = se_batches;
        rep.se_a = batch_sp_norm(g, xi, ens_a, opt_a, se_batches).se;
        rep.se_b = batch_sp_norm(g, xi, ens_b, opt_b, se_batches).se;
    }
    rep.pooled_se = std::hypot(rep.se_a, rep.se_b);
    rep.y0_a = mean_y(a.solution, 0).mean;
    rep.y0_b = mean_y(b.solution, 0).mean;
    rep.trace_a = std::move(a.trace);
    rep.trace_b = std::move(b.trace);
    return rep;
}

}  // namespace bsdecert
