#include "bsdecert/estimates.hpp"

#include "bsdecert/error.hpp"
#include "bsdecert/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bsdecert {

namespace {

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double value_or_zero(const ScalarFn& f, double t) { return f ? f(t) : 0.0; }

double floor_of(const TimeGrid& grid, const std::optional<double>& t_floor) {
    return t_floor.value_or(0.5 * grid[1]);
}

/// sum_{i >= point} f(max(t_i, tf)) dt_i
double left_sum(const TimeGrid& grid, std::size_t point, double tf, const std::function<double(double)>& f) {
    double s = 0.0;
    for (std::size_t i = point; i < grid.steps(); ++i) s += f(std::max(grid[i], tf)) * grid.dt(i);
    return s;
}

struct Terms {
    double xi = 0.0;
    double sup = 0.0;
    double psi = 0.0;
    double phi = 0.0;
    double f = 0.0;
    double mu_bar = 0.0, nu_bar = 0.0;
};

Terms terms(const SolutionEnsemble& sol, std::span<const double> xi, const BrownianValues& bv, const AssumptionA& A,
            std::size_t point, const EstimateOptions& opt) {
    const TimeGrid& grid = sol.grid();
    const std::size_t P = sol.paths(), k = sol.k(), M = grid.steps();
    const double p = opt.p;
    require(p > 1.0 && std::isfinite(p), "p must exceed 1", "p");
    require(point <= M, "grid point out of range", "point");
    require(xi.size() == P * k, "terminal values must be P x k", "xi");
    require(bv.paths() == P && bv.points() == grid.size(), "Brownian values do not match the solution", "ensemble");
    const double tf = floor_of(grid, opt.t_floor);

    Terms c;
    c.xi = path_moment(P, [&](std::size_t q) { return std::pow(norm(xi.subspan(q * k, k)), p); }).mean;
    c.sup = sp_moment(sol, p, point).mean;
    const double q = p / (p - 1.0);
    c.mu_bar = left_sum(grid, point, tf, [&](double t) { return std::pow(value_or_zero(A.mu, t), q); });
    c.nu_bar = left_sum(grid, point, tf, [&](double t) {
        const double v = value_or_zero(A.nu, t);
        return v * v;
    });
    if (A.psi) {
        for (std::size_t i = point; i < M; ++i) {
            const double m = path_moment(P, [&](std::size_t r) { return std::pow(norm(sol.y(i, r)), p); }).mean;
            c.psi += (*A.psi)(std::max(grid[i], tf), m) * grid.dt(i);
        }
    }
    if (A.phi) {
        c.phi = path_moment(P, [&](std::size_t r) {
                    double s = 0.0;
                    for (std::size_t i = point; i < M; ++i)
                        s += std::pow(A.phi(std::max(grid[i], tf), sol.y(i, r), sol.z(i, r), bv.at(i, r)), p) *
                             grid.dt(i);
                    return s;
                }).mean;
    }
    if (A.f) {
        c.f = path_moment(P, [&](std::size_t r) {
                  double s = 0.0;
                  for (std::size_t i = point; i < M; ++i)
                      s += A.f(std::max(grid[i], tf), sol.y(i, r), sol.z(i, r), bv.at(i, r)) * grid.dt(i);
                  return std::pow(s, p);
              }).mean;
    }
    return c;
}

double ratio(double lhs, double shape) {
    if (shape > 0.0) return lhs / shape;
    return lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

void push_common(EstimateReport& r, const Terms& c) {
    r.ingredients = {{"xi_moment", c.xi}, {"sup_moment", c.sup}, {"psi_integral", c.psi},
                     {"phi_moment", c.phi}, {"f_moment", c.f},   {"mu_bar", c.mu_bar},
                     {"nu_bar", c.nu_bar}};
}

}  // namespace

AssumptionA assumption_from_h4(const Generator& g, double p) {
    require(g.desc.h4.has_value(), "generator has no H4 descriptor", "H4");
    require(p > 1.0 && std::isfinite(p), "p must exceed 1", "p");
    const H4 h = *g.desc.h4;
    AssumptionA A;
    A.mu = h.alpha;
    A.nu = h.beta;
    A.phi = [rho = h.rho, p](double t, std::span<const double> y, std::span<const double>, std::span<const double>) {
        return std::pow(rho(t, std::pow(norm(y), p)), 1.0 / p);
    };
    A.f = [g](double t, std::span<const double>, std::span<const double>, std::span<const double> B) {
        std::vector<double> y0(g.k, 0.0), z0(g.k * g.d, 0.0), out(g.k);
        g.eval(t, y0, z0, B, out);
        return norm(out);
    };
    return A;
}

double EstimateReport::ingredient(const std::string& name) const {
    for (const auto& i : ingredients)
        if (i.name == name) return i.value;
    fail(ErrorKind::InvalidArgument, "unknown ingredient " + name, "ingredient");
}

EstimateReport prop1_report(const SolutionEnsemble& sol, std::span<const double> xi, const BrownianValues& bv,
                            const AssumptionA& A, std::size_t point, const ConstantLedger& ledger,
                            const EstimateOptions& opt) {
    require(ledger.p == opt.p, "ledger p must match the report p", "p");
    const Terms c = terms(sol, xi, bv, A, point, opt);
    const double p = opt.p;
    const TimeGrid& grid = sol.grid();
    const MomentEstimate lhs = path_moment(sol.paths(), [&](std::size_t r) {
        double s = 0.0;
        for (std::size_t i = point; i < grid.steps(); ++i) {
            const double z = norm(sol.z(i, r));
            s += z * z * grid.dt(i);
        }
        return std::pow(s, 0.5 * p);
    });
    const double C_t = 1.0 + std::pow(c.mu_bar, p - 1.0) + std::pow(c.mu_bar, 2.0 * p - 2.0) +
                       std::pow(c.nu_bar, 0.5 * p) + std::pow(c.nu_bar, p);
    EstimateReport r;
    r.lhs = lhs.mean;
    r.lhs_se = lhs.se;
    push_common(r, c);
    r.ingredients.push_back({"C_t", C_t});
    r.rhs_shape = c.xi + C_t * (c.sup + c.psi + c.phi + c.f);
    r.fitted_constant = ratio(r.lhs, r.rhs_shape);
    r.ledger_constant = ledger.m_p;
    r.rhs_at_ledger = ledger.m_p * r.rhs_shape;
    r.pass_at_ledger = r.lhs <= r.rhs_at_ledger;
    return r;
}

EstimateReport prop2_report(const SolutionEnsemble& sol, std::span<const double> xi, const BrownianValues& bv,
                            const AssumptionA& A, std::size_t point, const ConstantLedger& ledger,
                            const EstimateOptions& opt) {
    require(ledger.p == opt.p, "ledger p must match the report p", "p");
    const Terms c = terms(sol, xi, bv, A, point, opt);
    const MomentEstimate lhs = sp_moment(sol, opt.p, point);
    const double K_t = std::exp(ledger.k_p * (c.mu_bar + c.nu_bar));
    EstimateReport r;
    r.lhs = lhs.mean;
    r.lhs_se = lhs.se;
    push_common(r, c);
    r.ingredients.push_back({"K_t", K_t});
    r.rhs_shape = K_t * (c.xi + c.f + 0.5 * c.phi + 0.5 * c.psi);
    r.fitted_constant = ratio(r.lhs, r.rhs_shape);
    r.ledger_constant = ledger.k_p;
    r.rhs_at_ledger = K_t * (ledger.k_p * (c.xi + c.f) + 0.5 * c.phi + 0.5 * c.psi);
    r.pass_at_ledger = r.lhs <= r.rhs_at_ledger;
    return r;
}

std::vector<PathwisePoint> lemma2_check(const SolutionEnsemble& sol, std::span<const double> xi, const Generator& g,
                                      const PathEnsemble& ens, const PathwiseOptions& opt) {
    const double p = opt.p;
    const double cp = ito_constant(p);
    require(opt.slack_c >= 0.0 && std::isfinite(opt.slack_c), "slack constant must be nonnegative", "slack_c");
    const TimeGrid& grid = sol.grid();
    const std::size_t P = sol.paths(), k = sol.k(), d = sol.d(), M = grid.steps();
    require(xi.size() == P * k, "terminal values must be P x k", "xi");
    require(ens.paths() == P && ens.steps() == M && ens.dim() == d, "ensemble does not match the solution",
            "ensemble");
    require(g.k == k && g.d == d, "generator shape does not match the solution", "generator");
    const BrownianValues bv(ens);
    const double tf = floor_of(grid, opt.t_floor);
    double dt_max = 0.0;
    for (std::size_t i = 0; i < M; ++i) dt_max = std::max(dt_max, grid.dt(i));
    const double root_dt = std::sqrt(dt_max);

    // Per path and start index: 1 when satisfied, plus the excess.
    std::vector<double> pass((M + 1) * P, 0.0), excess((M + 1) * P, 0.0);
    parallel_chunks(P, [&](std::size_t, std::size_t b, std::size_t e) {
        std::vector<double> gv(k), zdb(k);
        for (std::size_t r = b; r < e; ++r) {
            const double xi_p = std::pow(norm(xi.subspan(r * k, k)), p);
            double zz = 0.0, drift = 0.0, mart = 0.0, qv = 0.0;
            for (std::size_t i = M + 1; i-- > 0;) {
                if (i < M) {
                    auto y = sol.y(i, r);
                    auto z = sol.z(i, r);
                    const double ny = norm(y);
                    if (ny != 0.0) {
                        const double w = std::pow(ny, p - 2.0);
                        const double dt = grid.dt(i);
                        const double z2 = dot(z, z);
                        g.eval(std::max(grid[i], tf), y, z, bv.at(i, r), gv);
                        auto dB = ens.increment(i, r);
                        for (std::size_t a = 0; a < k; ++a) {
                            zdb[a] = 0.0;
                            for (std::size_t c = 0; c < d; ++c) zdb[a] += z[a * d + c] * dB[c];
                        }
                        zz += w * z2 * dt;
                        drift += w * dot(y, gv) * dt;
                        mart += w * dot(y, zdb);
                        qv += (w * z2) * (w * z2) * dt;
                    }
                }
                const double lhs = std::pow(norm(sol.y(i, r)), p) + cp * zz;
                const double rhs = xi_p + p * drift - p * mart;
                const double slack = opt.slack_c * root_dt * p * std::sqrt(qv) + 1e-12 * (1.0 + xi_p);
                const double ex = lhs - rhs - slack;
                pass[i * P + r] = ex <= 0.0 ? 1.0 : 0.0;
                excess[i * P + r] = ex;
            }
        }
    });
    std::vector<PathwisePoint> out(M + 1);
    for (std::size_t i = 0; i <= M; ++i) {
        double s = 0.0, worst = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < P; ++r) {
            s += pass[i * P + r];
            worst = std::max(worst, excess[i * P + r]);
        }
        out[i] = {grid[i], s / static_cast<double>(P), worst};
    }
    return out;
}

PsiBoundReport remark1_bound(const TimeModulus& psi, const SolutionEnsemble& sol, double p,
                            std::optional<double> t_floor, const QuadratureConfig& quad) {
    require(psi.eval != nullptr, "psi integral bound needs psi", "psi");
    require(psi.a != nullptr && psi.b != nullptr, "psi integral bound needs the envelopes a and b", "psi");
    require(p > 1.0 && std::isfinite(p), "p must exceed 1", "p");
    const TimeGrid& grid = sol.grid();
    const std::size_t P = sol.paths(), M = grid.steps();
    const double tf = floor_of(grid, t_floor);
    PsiBoundReport r;
    const MomentEstimate lhs = path_moment(P, [&](std::size_t q) {
        double s = 0.0;
        for (std::size_t i = 0; i < M; ++i)
            s += psi(std::max(grid[i], tf), std::pow(norm(sol.y(i, q)), p)) * grid.dt(i);
        return s;
    });
    r.lhs = lhs.mean;
    r.lhs_se = lhs.se;
    const MomentEstimate sup = sp_moment(sol, p);
    r.sup_moment = sup.mean;
    const double a_sum = left_sum(grid, 0, tf, psi.a);
    const double b_sum = left_sum(grid, 0, tf, psi.b);
    r.rhs = a_sum + b_sum * sup.mean;
    r.rhs_se = b_sum * sup.se;
    const double T = grid.horizon_end();
    r.a_integral = integrate(psi.a, 0.0, T, quad).value;
    r.b_integral = integrate(psi.b, 0.0, T, quad).value;
    r.holds = r.lhs <= r.rhs + 3.0 * std::hypot(r.lhs_se, r.rhs_se);
    return r;
}

}  // namespace bsdecert
