#include "bsdecert/modulus.hpp"

#include "bsdecert/error.hpp"
#include "bsdecert/philox.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace bsdecert {

const char* to_string(OsgoodClass c) noexcept {
    return c == OsgoodClass::DivergentLikely ? "divergent-likely" : "convergent-likely";
}

double keyed_uniform(std::uint64_t seed, std::uint64_t index, std::uint32_t lane) noexcept {
    const PhiloxCounter out =
        philox4x32_10({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), lane, 0x5eedu},
                      {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    return to_open_unit(out[0], out[1]);
}

TimeModulus scaled_modulus(std::string name, ScalarFn weight, const Modulus& kappa) {
    const double A = kappa(1.0);
    TimeModulus tm;
    tm.name = std::move(name);
    auto k = kappa.eval;
    tm.eval = [weight, k](double t, double u) { return weight(t) * k(u); };
    tm.a = [weight, A](double t) { return A * weight(t); };
    tm.b = tm.a;
    return tm;
}

// ---------------------------------------------------------------------------
// Built-in families
// ---------------------------------------------------------------------------

Modulus linear_modulus(double c) {
    require(c >= 0.0 && std::isfinite(c), "linear modulus needs c >= 0", "modulus.c");
    Modulus m;
    m.name = "linear";
    m.eval = [c](double u) { return c * u; };
    m.claimed = {true, true, true, c > 0.0};
    if (c > 0.0) m.known = OsgoodClass::DivergentLikely;
    return m;
}

Modulus power_modulus(double theta) {
    require(theta > 0.0 && std::isfinite(theta), "power modulus needs theta > 0", "modulus.theta");
    Modulus m;
    m.name = "power";
    m.eval = [theta](double u) { return u <= 0.0 ? 0.0 : std::pow(u, theta); };
    m.claimed = {theta <= 1.0, true, true, theta >= 1.0};
    m.known = theta >= 1.0 ? OsgoodClass::DivergentLikely : OsgoodClass::ConvergentLikely;
    return m;
}

Modulus table_modulus(std::vector<std::pair<double, double>> pts) {
    require(!pts.empty(), "table modulus needs at least one point", "modulus.points");
    std::sort(pts.begin(), pts.end());
    for (const auto& [u, v] : pts) {
        require(u >= 0.0 && std::isfinite(u) && std::isfinite(v) && v >= 0.0,
                "table modulus points must be finite and nonnegative", "modulus.points");
    }
    if (pts.front().first > 0.0) pts.insert(pts.begin(), {0.0, 0.0});
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        require(pts[i + 1].first > pts[i].first, "table modulus abscissae must be distinct", "modulus.points");
    }
    bool nondecreasing = true, concave = true;
    double prev_slope = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double s = (pts[i + 1].second - pts[i].second) / (pts[i + 1].first - pts[i].first);
        if (s < 0.0) nondecreasing = false;
        if (s > prev_slope) concave = false;
        prev_slope = s;
    }
    Modulus m;
    m.name = "table";
    m.claimed = {concave, nondecreasing, pts.front().second == 0.0, false};
    m.eval = [pts](double u) {
        if (pts.size() == 1) return pts.front().second;
        auto it = std::upper_bound(pts.begin(), pts.end(), u,
                                   [](double x, const std::pair<double, double>& p) { return x < p.first; });
        std::size_t j = static_cast<std::size_t>(it - pts.begin());
        if (j == 0) j = 1;
        if (j >= pts.size()) j = pts.size() - 1;
        const auto& [u0, v0] = pts[j - 1];
        const auto& [u1, v1] = pts[j];
        return v0 + (u - u0) * (v1 - v0) / (u1 - u0);
    };
    return m;
}

namespace {

// Splice x -> f(x) on (0, delta], f'(delta)(x - delta) + f(delta) above, 0 at 0.
Modulus spliced(std::string name, std::function<double(double)> f, std::function<double(double)> df,
                double delta) {
    const double f_delta = f(delta), slope = df(delta);
    Modulus m;
    m.name = std::move(name);
    m.eval = [=](double x) {
        if (x <= 0.0) return 0.0;
        if (x <= delta) return f(x);
        return slope * (x - delta) + f_delta;
    };
    m.claimed = {true, true, true, false};
    return m;
}

double bisect_increasing(const std::function<double(double)>& g, double lo, double hi) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (g(mid) < 0.0) lo = mid;
        else hi = mid;
    }
    return hi;
}

}  // namespace

double xlogx_delta_max(double p) {
    require(p >= 1.0, "xlogx needs p >= 1", "modulus.p");
    return std::exp(-1.0 / p);
}

double xloglog_delta_max(double p) {
    require(p >= 1.0, "xloglog needs p >= 1", "modulus.p");
    // s'(x) >= 0  <=>  L ln L >= (ln L + 1) / p with L = -ln x > 1.
    const double L = bisect_increasing([p](double L) { return L * std::log(L) - (std::log(L) + 1.0) / p; }, 1.0,
                                       64.0);
    return std::exp(-L);
}

Modulus xlogx_base(double p, double delta) {
    const double dmax = xlogx_delta_max(p);
    require(delta > 0.0 && delta <= dmax * (1.0 + 1e-12), "xlogx delta outside (0, delta_max(p)]", "modulus.delta");
    delta = std::min(delta, dmax);
    auto f = [p](double x) { return x * std::pow(-std::log(x), 1.0 / p); };
    auto df = [p](double x) {
        const double L = -std::log(x);
        return std::pow(L, 1.0 / p) - std::pow(L, 1.0 / p - 1.0) / p;
    };
    return spliced("xlogx_base", f, df, delta);
}

Modulus xloglog_base(double p, double delta) {
    const double dmax = xloglog_delta_max(p);
    require(delta > 0.0 && delta <= dmax * (1.0 + 1e-12), "xloglog delta outside (0, delta_max(p)]",
            "modulus.delta");
    delta = std::min(delta, dmax);
    auto f = [p](double x) {
        const double L = -std::log(x);
        return x * std::pow(L * std::log(L), 1.0 / p);
    };
    auto df = [p](double x) {
        const double L = -std::log(x);
        const double F = L * std::log(L);
        return std::pow(F, 1.0 / p - 1.0) * (F - (std::log(L) + 1.0) / p);
    };
    return spliced("xloglog_base", f, df, delta);
}

Modulus xlogx(double p, double delta) {
    Modulus m = power_transform(xlogx_base(p, delta), p);
    m.name = "xlogx";
    m.claimed = {true, true, true, true};
    m.known = OsgoodClass::DivergentLikely;
    return m;
}

Modulus xloglog(double p, double delta) {
    Modulus m = power_transform(xloglog_base(p, delta), p);
    m.name = "xloglog";
    m.claimed = {true, true, true, true};
    m.known = OsgoodClass::DivergentLikely;
    return m;
}

// ---------------------------------------------------------------------------
// Osgood diagnostic
// ---------------------------------------------------------------------------

OsgoodReport osgood_diagnostic(const Modulus& kappa, double u0, double eps_floor, const QuadratureConfig& quad) {
    require(u0 > 0.0 && std::isfinite(u0), "osgood_diagnostic needs u0 > 0", "u0");
    require(eps_floor > 0.0 && eps_floor < u0, "osgood_diagnostic needs 0 < eps_floor < u0", "eps_floor");
    quad.validate();
    auto inv = [&](double s) {
        const double u = std::exp(s);
        const double k = kappa(u);
        if (!(k > 0.0) || !std::isfinite(k)) {
            fail(ErrorKind::InvalidModulus, "modulus '" + kappa.name + "' is not positive on (0, u0]", kappa.name);
        }
        return u / k;
    };
    {
        const double k0 = kappa(u0);
        if (!(k0 > 0.0)) fail(ErrorKind::InvalidModulus, "modulus vanishes at u0", kappa.name);
    }

    OsgoodReport rep;
    rep.registry = kappa.known;
    const double ln10 = std::numbers::ln10;
    const auto decades = static_cast<int>(std::floor(std::log10(u0 / eps_floor)));
    require(decades >= 3, "osgood_diagnostic needs at least 3 decades between eps_floor and u0", "eps_floor");
    std::vector<double> inc;
    double I = 0.0;
    double hi = std::log(u0);
    for (int k = 1; k <= decades; ++k) {
        const double lo = std::log(u0) - k * ln10;
        QuadResult r = integrate(inv, lo, hi, quad);
        inc.push_back(r.value);
        I += r.value;
        rep.trace.push_back({u0 * std::pow(10.0, -k), I});
        hi = lo;
        if (!std::isfinite(I)) break;
    }
    if (!std::isfinite(I)) {
        rep.classification = OsgoodClass::DivergentLikely;
        rep.decay_ratio = std::numeric_limits<double>::infinity();
        rep.tail_estimate = std::numeric_limits<double>::infinity();
        return rep;
    }
    const std::size_t K = inc.size();
    const std::size_t w = std::min<std::size_t>(10, K - 1);
    const double last = inc[K - 1], ref = inc[K - 1 - w];
    if (last == 0.0) {
        rep.decay_ratio = 0.0;
        rep.tail_estimate = 0.0;
        rep.classification = OsgoodClass::ConvergentLikely;
        return rep;
    }
    const double q = std::pow(last / ref, 1.0 / static_cast<double>(w));
    rep.decay_ratio = q;
    if (!(q < 1.0)) {
        rep.tail_estimate = std::numeric_limits<double>::infinity();
        rep.classification = OsgoodClass::DivergentLikely;
        return rep;
    }
    rep.tail_estimate = last * q / (1.0 - q);
    rep.classification =
        rep.tail_estimate <= quad.rel_tol * I ? OsgoodClass::ConvergentLikely : OsgoodClass::DivergentLikely;
    return rep;
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

Modulus power_transform(const Modulus& rho, double r) {
    require(r > 0.0 && std::isfinite(r), "power_transform needs r > 0", "r");
    if (rho(0.0) != 0.0) fail(ErrorKind::InvalidModulus, "power_transform needs rho(0) = 0", rho.name);
    Modulus m;
    m.name = rho.name + "^" + std::to_string(r);
    auto f = rho.eval;
    m.eval = [f, r](double x) {
        if (x <= 0.0) return 0.0;
        return std::pow(f(std::pow(x, 1.0 / r)), r);
    };
    m.claimed.nondecreasing = rho.claimed.nondecreasing;
    m.claimed.vanishes_at_zero = true;
    m.claimed.concave = rho.claimed.concave && r >= 1.0;
    m.claimed.osgood = rho.claimed.osgood && r <= 1.0;
    if (r <= 1.0 && rho.known == OsgoodClass::DivergentLikely) m.known = OsgoodClass::DivergentLikely;
    return m;
}

ConcaveMajorant concavify(const Modulus& rho1, double domain_cap, std::size_t grid_size) {
    require(domain_cap > 0.0 && std::isfinite(domain_cap), "concavify needs domain_cap > 0", "domain_cap");
    require(grid_size >= 2, "concavify needs grid_size >= 2", "grid_size");
    ConcaveMajorant out;
    out.grid.reserve(grid_size + 1);
    out.grid.push_back(0.0);
    const double lo = std::log(domain_cap) - 12.0 * std::numbers::ln10;
    const double hi = std::log(domain_cap);
    for (std::size_t i = 0; i < grid_size; ++i) {
        const double s = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_size - 1);
        out.grid.push_back(i + 1 == grid_size ? domain_cap : std::exp(s));
    }
    std::vector<std::pair<double, double>> pts;
    pts.reserve(out.grid.size());
    for (double u : out.grid) {
        const double v = rho1(u);
        if (!std::isfinite(v) || v < 0.0) {
            fail(ErrorKind::InvalidModulus, "modulus '" + rho1.name + "' is negative or non-finite on samples",
                 rho1.name);
        }
        if (!pts.empty() && v < pts.back().second) {
            fail(ErrorKind::InvalidModulus, "modulus '" + rho1.name + "' decreases on samples", rho1.name);
        }
        pts.emplace_back(u, v);
    }
    // Upper hull by monotone chain.
    auto& hull = out.hull;
    for (const auto& pt : pts) {
        while (hull.size() >= 2) {
            const auto& a = hull[hull.size() - 2];
            const auto& b = hull.back();
            const double cross = (b.first - a.first) * (pt.second - a.second) - (b.second - a.second) * (pt.first - a.first);
            if (cross > 0.0) hull.pop_back();
            else break;
        }
        hull.push_back(pt);
    }
    out.modulus.name = "concavify(" + rho1.name + ")";
    out.modulus.claimed = {true, true, pts.front().second == 0.0, false};
    out.modulus.eval = [hull](double u) {
        if (u <= 0.0) return hull.front().second;
        auto it = std::upper_bound(hull.begin(), hull.end(), u,
                                   [](double x, const std::pair<double, double>& p) { return x < p.first; });
        std::size_t j = static_cast<std::size_t>(it - hull.begin());
        if (j >= hull.size()) j = hull.size() - 1;
        if (j == 0) j = 1;
        const auto& [u0, v0] = hull[j - 1];
        const auto& [u1, v1] = hull[j];
        if (u == u1) return v1;
        return v0 + (u - u0) * (v1 - v0) / (u1 - u0);
    };
    return out;
}

double majorant_ratio(const Modulus& rho2, const Modulus& rho1, std::span<const double> grid) {
    double worst = 0.0;
    for (double u : grid) {
        const double v1 = rho1(u);
        if (v1 > 0.0) worst = std::max(worst, rho2(u) / v1);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Comparison bounds
// ---------------------------------------------------------------------------

std::vector<double> backward_gronwall_bound(const ScalarFn& alpha, const ScalarFn& beta, const TimeGrid& grid,
                                            const QuadratureConfig& quad) {
    quad.validate();
    const auto pts = grid.points();
    std::vector<double> cum(pts.size());
    const bool ok = backward_cumulative(beta, pts, quad, cum);
    if (!ok || !std::isfinite(cum.front())) {
        fail(ErrorKind::InvalidArgument, "integral of beta does not converge on the grid", "beta");
    }
    std::vector<double> out(pts.size());
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double a = alpha(pts[i]);
        require(a >= 0.0 && std::isfinite(a), "alpha must be nonnegative and finite", "alpha");
        require(a <= prev * (1.0 + 1e-12), "alpha must be nonincreasing", "alpha");
        prev = a;
        out[i] = a * std::exp(cum[i]);
    }
    return out;
}

void OdeOptions::validate() const {
    require(abs_tol > 0.0 && rel_tol > 0.0 && zero_tol > 0.0, "ODE tolerances must be positive", "ode");
    require(settled_ratio > 0.0 && settled_ratio < 1.0, "settled_ratio must lie in (0, 1)", "ode.settled_ratio");
}

std::vector<double> default_terminal_eps() {
    std::vector<double> eps;
    for (int k = 2; k <= 12; ++k) eps.push_back(std::pow(10.0, -k));
    return eps;
}

std::vector<double> backward_ode(const TimeFn2& rho, const TimeGrid& grid, double u_T, const OdeOptions& opt) {
    namespace ode = boost::numeric::odeint;
    using State = std::array<double, 1>;
    opt.validate();
    require(u_T >= 0.0 && std::isfinite(u_T), "terminal value must be nonnegative", "u_T");
    const auto pts = grid.points();
    const double T = pts.back();
    // Integrated in reversed time s = T - t; ln u when u_T > 0, u itself otherwise.
    std::vector<double> s_pts(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) s_pts[i] = T - pts[pts.size() - 1 - i];
    std::vector<double> u(pts.size());
    std::size_t next = pts.size();
    auto observe = [&](const State& x, double) {
        --next;
        u[next] = u_T > 0.0 ? std::exp(x[0]) : std::max(0.0, x[0]);
    };
    const double h0 = std::max(grid.max_dt() * 1e-6, 1e-12);
    // Stages never sample t = 0 exactly, where weights such as t^{-1/2} blow up.
    const double t_floor = pts[1] * 1e-14;
    auto time_at = [&](double s) { return std::max(T - s, t_floor); };
    auto stepper = ode::make_dense_output(opt.abs_tol, opt.rel_tol, ode::runge_kutta_dopri5<State>());
    State x{};
    if (u_T > 0.0) {
        x[0] = std::log(u_T);
        auto rhs = [&](const State& v, State& dv, double s) {
            const double uu = std::exp(v[0]);
            dv[0] = std::max(0.0, rho(time_at(s), uu)) / uu;
        };
        ode::integrate_times(stepper, rhs, x, s_pts.begin(), s_pts.end(), h0, observe);
    } else {
        auto rhs = [&](const State& v, State& dv, double s) { dv[0] = std::max(0.0, rho(time_at(s), std::max(0.0, v[0]))); };
        ode::integrate_times(stepper, rhs, x, s_pts.begin(), s_pts.end(), h0, observe);
    }
    return u;
}

BihariResult bihari_comparison(const TimeModulus& rho, const TimeGrid& grid, std::span<const double> eps_terminal,
                               const OdeOptions& opt) {
    std::vector<double> eps(eps_terminal.begin(), eps_terminal.end());
    if (eps.empty()) eps = default_terminal_eps();
    for (std::size_t k = 0; k < eps.size(); ++k) {
        require(eps[k] > 0.0, "terminal epsilons must be positive", "eps_terminal");
        if (k > 0) require(eps[k] < eps[k - 1], "terminal epsilons must decrease", "eps_terminal");
    }
    BihariResult res;
    res.t.assign(grid.points().begin(), grid.points().end());
    res.eps = eps;
    for (double e : eps) res.per_eps.push_back(backward_ode(rho.eval, grid, e, opt));

    const std::size_t n = res.t.size();
    for (std::size_t k = 1; k < res.per_eps.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            if (res.per_eps[k][i] > res.per_eps[k - 1][i]) res.monotone_in_eps = false;
        }
    }
    const auto& last = res.per_eps.back();
    res.r = last;
    std::vector<bool> settled(n, false);
    for (std::size_t i = 0; i < n; ++i) settled[i] = last[i] <= opt.zero_tol;
    if (res.per_eps.size() >= 3) {
        const auto& a = res.per_eps[res.per_eps.size() - 3];
        const auto& b = res.per_eps[res.per_eps.size() - 2];
        for (std::size_t i = 0; i < n; ++i) {
            const double d1 = a[i] - b[i], d2 = b[i] - last[i];
            if (d1 > 0.0 && d2 >= 0.0 && d2 < d1) {
                const double q = d2 / d1;
                res.r[i] = std::max(0.0, last[i] - d2 * q / (1.0 - q));
                res.extrapolated = true;
                if (q <= opt.settled_ratio || res.r[i] <= opt.zero_tol) settled[i] = true;
            } else if (d2 <= 0.0) {
                settled[i] = true;
            }
        }
    }
    const bool all_settled = std::all_of(settled.begin(), settled.end(), [](bool v) { return v; });
    if (opt.deep_eps && !all_settled) {
        // Limit not resolved by the decade sequence: continue toward the double floor.
        for (double e : {1e-16, 1e-24, 1e-32, 1e-48, 1e-64, 1e-96, 1e-128, 1e-192, 1e-256, 1e-300}) {
            if (e >= res.eps.back()) continue;
            res.eps.push_back(e);
            res.per_eps.push_back(backward_ode(rho.eval, grid, e, opt));
            const auto& prev = res.per_eps[res.per_eps.size() - 2];
            const auto& cur = res.per_eps.back();
            for (std::size_t i = 0; i < n; ++i)
                if (cur[i] > prev[i]) res.monotone_in_eps = false;
        }
        res.r = res.per_eps.back();
        res.extrapolated = false;
        res.deepened = true;
    }
    res.is_zero = *std::max_element(res.r.begin(), res.r.end()) <= opt.zero_tol;
    return res;
}

SClassReport s_class_check(const TimeModulus& rho, const TimeGrid& grid, std::size_t samples,
                           const QuadratureConfig& quad, std::uint64_t seed, const OdeOptions& ode) {
    require(rho.a && rho.b, "s_class_check needs envelopes a and b", "envelopes");
    SClassReport rep;
    const double T = grid.horizon_end();
    QuadResult ab = integrate([&](double t) { return rho.a(t) + rho.b(t); }, 0.0, T, quad);
    rep.integral_a_plus_b = ab.value;
    rep.integrable = ab.converged && std::isfinite(ab.value);

    rep.envelope_ok = true;
    rep.envelope_samples = samples;
    for (std::size_t s = 0; s < samples; ++s) {
        const double t = T * keyed_uniform(seed, s, 0);
        const double w = keyed_uniform(seed, s, 1);
        const double u = (s % 2 == 0) ? 10.0 * w : std::pow(10.0, -12.0 + 13.0 * w);
        const double lhs = rho(t, u);
        const double rhs = rho.a(t) + rho.b(t) * u;
        if (!(lhs <= rhs * (1.0 + 1e-12) + 1e-300)) {
            rep.envelope_ok = false;
            rep.envelope_witness = std::array<double, 4>{t, u, lhs, rhs};
            break;
        }
    }

    BihariResult bh = bihari_comparison(rho, grid, default_terminal_eps(), ode);
    rep.bihari_zero = bh.is_zero;
    rep.r0 = bh.r.front();
    rep.member = rep.integrable && rep.envelope_ok && rep.bihari_zero;
    return rep;
}

}  // namespace bsdecert
