#include "bsdecert/certificates.hpp"

#include "bsdecert/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace bsdecert {

double ito_constant(double p) {
    require(p > 1.0 && std::isfinite(p), "p must exceed 1", "p");
    return 0.5 * p * std::min(p - 1.0, 1.0);
}

double default_ledger_constant(double p) {
    require(p > 1.0 && std::isfinite(p), "p must exceed 1", "p");
    const double m = std::min(p - 1.0, 1.0);
    return 16.0 * p * p / (m * m);
}

ConstantLedger make_ledger(double p, const LedgerOverrides& o) {
    ConstantLedger L;
    L.p = p;
    L.c_p = ito_constant(p);
    const double d = default_ledger_constant(p);
    auto pick = [d](const std::optional<double>& v, const char* field) {
        if (!v) return d;
        require(*v > 0.0 && std::isfinite(*v), "ledger constants must be positive", field);
        return *v;
    };
    L.m_p = pick(o.m_p, "ledger.m_p");
    L.k_p = pick(o.k_p, "ledger.k_p");
    L.bar_m_p = pick(o.bar_m_p, "ledger.bar_m_p");
    L.hat_m_p = pick(o.hat_m_p, "ledger.hat_m_p");
    L.tilde_m_p = pick(o.tilde_m_p, "ledger.tilde_m_p");
    return L;
}

namespace {

struct Densities {
    ScalarFn b, a, bb;  // b_env, alpha^{p/(p-1)}, beta^2
};

struct Sums {
    double b = 0.0, a = 0.0, bb = 0.0;
    Sums operator+(const Sums& o) const { return {b + o.b, a + o.a, bb + o.bb}; }
};

double checked(const ScalarFn& f, double lo, double hi, const QuadratureConfig& quad, const char* field) {
    QuadResult r = integrate(f, lo, hi, quad);
    if (!r.converged || !std::isfinite(r.value))
        fail(ErrorKind::CertificationFailed, std::string("integral of ") + field + " does not converge", field);
    return r.value;
}

Sums integrate_all(const Densities& d, double lo, double hi, const QuadratureConfig& quad) {
    if (hi <= lo) return {};
    return {checked(d.b, lo, hi, quad, "b_env"), checked(d.a, lo, hi, quad, "alpha"),
            checked(d.bb, lo, hi, quad, "beta")};
}

}  // namespace

Partition compute_partition(const ScalarFn& alpha, const ScalarFn& beta, const ScalarFn& b_env,
                            const ConstantLedger& ledger, const TimeGrid& grid, const QuadratureConfig& quad,
                            double bisect_rel) {
    require(alpha && beta && b_env, "partition needs alpha, beta and b_env");
    require(bisect_rel > 0.0 && bisect_rel < 1e-2, "bisect_rel must lie in (0, 1e-2)", "bisect_rel");
    const double q = ledger.p / (ledger.p - 1.0);
    Densities d{b_env, [&alpha, q](double t) { return std::pow(std::abs(alpha(t)), q); },
                [&beta](double t) {
                    const double v = beta(t);
                    return v * v;
                }};

    Partition part;
    part.b_budget = 0.5;
    part.ab_budget = std::numbers::ln2 / std::max(ledger.hat_m_p, ledger.bar_m_p);
    const auto pts = grid.points();
    const std::size_t n = pts.size();

    std::vector<Sums> cell(n - 1);
    for (std::size_t j = 0; j + 1 < n; ++j) cell[j] = integrate_all(d, pts[j], pts[j + 1], quad);
    for (const auto& c : cell) {
        part.total_b += c.b;
        part.total_alpha_hat += c.a;
        part.total_beta_hat += c.bb;
    }
    if (!std::isfinite(part.total_b + part.total_alpha_hat + part.total_beta_hat))
        fail(ErrorKind::CertificationFailed, "budget integrals are not finite on [0, T]", "budgets");

    const double slack = 1.0 + 1e-12;
    auto fits = [&](const Sums& s) {
        return s.b <= part.b_budget * slack && s.a + s.bb <= part.ab_budget * slack;
    };
    auto near_full = [&](const Sums& s) {
        return s.b >= part.b_budget * (1.0 - bisect_rel) || s.a + s.bb >= part.ab_budget * (1.0 - bisect_rel);
    };

    std::vector<double> ends{pts.back()};
    double e = pts.back();
    std::size_t j = n - 1;  // pts[j - 1] < e <= pts[j]
    while (e > 0.0) {
        if (part.intervals.size() > 1000000)
            fail(ErrorKind::CertificationFailed, "partition exceeds 10^6 intervals", "budgets");
        Sums acc;
        double s = e;
        std::size_t k = j;
        bool stopped = false;
        while (k > 0) {
            const Sums c = (s == pts[k]) ? cell[k - 1] : integrate_all(d, pts[k - 1], s, quad);
            if (!fits(acc + c)) {
                stopped = true;
                break;
            }
            acc = acc + c;
            s = pts[k - 1];
            --k;
        }
        if (stopped && (s == e || !near_full(acc))) {
            double lo = pts[k - 1], hi = s;
            Sums at_hi = acc;
            for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
                const double mid = 0.5 * (lo + hi);
                const Sums trial = acc + integrate_all(d, mid, s, quad);
                if (fits(trial)) {
                    hi = mid;
                    at_hi = trial;
                    if (near_full(trial)) break;
                } else {
                    lo = mid;
                }
            }
            if (hi >= e) fail(ErrorKind::CertificationFailed, "partition cannot advance below t = " + std::to_string(e), "budgets");
            acc = at_hi;
            s = hi;
        }
        part.intervals.push_back({s, e, acc.b, acc.a, acc.bb});
        e = s;
        ends.push_back(e);
        while (j > 0 && pts[j - 1] >= e) --j;
        if (e <= 0.0) break;
    }
    std::reverse(part.intervals.begin(), part.intervals.end());
    std::reverse(ends.begin(), ends.end());
    part.points = std::move(ends);
    return part;
}

BoundM constant_M(const ConstantLedger& ledger, double xi_pth_moment, double g00_integral_pth_moment,
                  const ScalarFn& a_env, double alpha_hat, double beta_hat, double t_lo, double t_hi,
                  const QuadratureConfig& quad) {
    require(xi_pth_moment >= 0.0 && std::isfinite(xi_pth_moment), "E|xi|^p must be finite", "xi_moment");
    require(g00_integral_pth_moment >= 0.0 && std::isfinite(g00_integral_pth_moment),
            "generator moment must be finite", "g00_moment");
    require(alpha_hat >= 0.0 && beta_hat >= 0.0, "alpha_hat and beta_hat must be nonnegative", "alpha_hat");
    require(t_lo < t_hi, "interval must be nonempty", "interval");
    BoundM r;
    r.C_hat = ledger.hat_m_p * std::exp(ledger.hat_m_p * (alpha_hat + beta_hat)) *
              (xi_pth_moment + g00_integral_pth_moment);
    if (a_env) r.a_integral = checked(a_env, t_lo, t_hi, quad, "a_env");
    r.M = 2.0 * r.C_hat + 2.0 * r.a_integral;
    return r;
}

MajorantTrace majorant_sequence(const TimeModulus& rho, double M, double t_lo, double t_hi, const TimeGrid& grid,
                                const MajorantOptions& opt) {
    require(rho.eval != nullptr, "majorant needs rho", "rho");
    require(M >= 0.0 && std::isfinite(M), "M must be finite and nonnegative", "M");
    require(t_lo >= 0.0 && t_lo < t_hi, "interval must be nonempty", "interval");
    require(opt.tol > 0.0 && opt.refine_nodes >= 2, "majorant options invalid", "majorant");

    MajorantTrace tr;
    tr.M = M;
    tr.t_lo = t_lo;
    tr.t_hi = t_hi;
    const double eps_t = 1e-12 * std::max(1.0, t_hi);
    tr.t.push_back(t_lo);
    for (double x : grid.points())
        if (x > t_lo + eps_t && x < t_hi - eps_t) tr.t.push_back(x);
    tr.t.push_back(t_hi);

    const std::size_t cells = tr.t.size() - 1;
    const std::size_t sub = std::max<std::size_t>(1, (opt.refine_nodes - 1 + cells - 1) / cells);
    std::vector<double> s;
    s.reserve(cells * sub + 1);
    for (std::size_t c = 0; c < cells; ++c)
        for (std::size_t k = 0; k < sub; ++k)
            s.push_back(tr.t[c] + (tr.t[c + 1] - tr.t[c]) * static_cast<double>(k) / static_cast<double>(sub));
    s.push_back(t_hi);
    const std::size_t R = s.size();
    tr.refined_nodes = R;
    std::vector<double> te(s);
    if (te[0] <= 0.0) te[0] = 0.5 * s[1];

    auto rho_at = [&](std::size_t i, double u) {
        const double v = rho(te[i], u);
        if (!(v >= 0.0) || !std::isfinite(v))
            fail(ErrorKind::InvalidModulus, "rho must be finite and nonnegative", rho.name);
        return v;
    };
    auto sweep = [&](const std::vector<double>& u, std::vector<double>& out) {
        out.assign(R, 0.0);
        double f_hi = rho_at(R - 1, u[R - 1]);
        for (std::size_t i = R - 1; i-- > 0;) {
            const double f_lo = rho_at(i, u[i]);
            out[i] = out[i + 1] + 0.5 * (s[i + 1] - s[i]) * (f_lo + f_hi);
            f_hi = f_lo;
        }
    };
    auto record = [&](const std::vector<double>& phi) {
        std::vector<double> at;
        at.reserve(tr.t.size());
        for (std::size_t c = 0; c <= cells; ++c) at.push_back(phi[c * sub]);
        tr.phi.push_back(std::move(at));
        tr.phi_at_lo.push_back(phi[0]);
    };

    std::vector<double> cur, next;
    sweep(std::vector<double>(R, M), cur);
    tr.gate_integral = cur[0];
    if (tr.gate_integral > M)
        fail(ErrorKind::GateFailed, "gate violated: integral of rho(s, M) exceeds M on the interval", "interval",
             tr.gate_integral);
    record(cur);
    for (double v : cur)
        if (v > M) tr.bounded_by_M = false;

    std::size_t n = 0;
    while (cur[0] >= opt.tol && n < opt.n_max) {
        sweep(cur, next);
        for (std::size_t i = 0; i < R; ++i)
            if (next[i] > cur[i]) tr.monotone = false;
        cur.swap(next);
        ++n;
        record(cur);
    }
    tr.n_stop = n;
    tr.converged = cur[0] < opt.tol;
    return tr;
}

}  // namespace bsdecert
