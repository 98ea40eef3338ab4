#include "bsdecert/generator.hpp"

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

double norm_diff(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// x / w(t) with 0 / 0 read as 0, for coefficients singular at t = 0.
double over(double x, double w) { return x == 0.0 ? 0.0 : x / w; }

ScalarFn constant_fn(double c) {
    return [c](double) { return c; };
}

void check_nonnegative(const ScalarFn& f, const char* what) {
    for (double t : {1e-6, 0.25, 0.5, 1.0, 2.0, 10.0}) {
        const double v = f(t);
        if (!(v >= 0.0)) fail(ErrorKind::InvalidArgument, std::string("descriptor envelope '") + what +
                                                              "' is negative or undefined", what);
    }
}

}  // namespace

std::vector<std::string> Descriptors::present() const {
    std::vector<std::string> out;
    if (h1) out.push_back("H1");
    if (h2) out.push_back("H2");
    if (h3) out.push_back("H3");
    if (h4) out.push_back("H4");
    if (h5_claim) out.push_back("H5");
    if (h6) out.push_back("H6");
    if (h6star) out.push_back("H6*");
    return out;
}

double Generator::scalar(double t, double y, double z, double B) const {
    require(k == 1 && d == 1, "Generator::scalar needs k = d = 1");
    double out = 0.0;
    eval(t, {&y, 1}, {&z, 1}, {&B, 1}, {&out, 1});
    return out;
}

// ---------------------------------------------------------------------------
// Zoo
// ---------------------------------------------------------------------------

std::vector<ZooEntry> zoo_list() {
    return {
        {"zero", "k, d", "g = 0"},
        {"remark7", "", "g = 0, xi = 1, infinite horizon"},
        {"linear", "a, b", "g = a y + b z"},
        {"chenH3", "u, v", "g = u tanh(y) + v |z|"},
        {"example1", "p, delta", "g = h(|y|)/sqrt(t) + |z|/t^(1/4) + |B_t|, h(x) = x |ln x|^(1/p)"},
        {"example2", "p, delta",
         "g = s(|y|)/(1+t)^2 + |z|/(1+t) + 1/(1+t)^2, s(x) = x (|ln x| ln|ln x|)^(1/p), infinite horizon"},
    };
}

Generator zoo(const std::string& name, const ZooParams& prm) {
    Generator g;
    g.name = name;
    if (name == "zero" || name == "remark7") {
        require(prm.k >= 1 && prm.d >= 1, "zero generator needs k, d >= 1", "generator.k");
        g.k = name == "zero" ? prm.k : 1;
        g.d = name == "zero" ? prm.d : 1;
        g.eval = [](double, std::span<const double>, std::span<const double>, std::span<const double>,
                    std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
        g.desc.h3 = H3{constant_fn(0.0), constant_fn(0.0)};
        g.desc.h5_claim = true;
        g.y_independent = true;
        g.is_zero = true;
        g.infinite_horizon = name == "remark7";
        return g;
    }
    if (name == "linear") {
        const double a = prm.a, b = prm.b;
        require(std::isfinite(a) && std::isfinite(b), "linear generator needs finite a, b", "generator.a");
        g.eval = [a, b](double, std::span<const double> y, std::span<const double> z, std::span<const double>,
                        std::span<double> out) { out[0] = a * y[0] + b * z[0]; };
        g.desc.h3 = H3{constant_fn(std::abs(a)), constant_fn(std::abs(b))};
        g.desc.h5_claim = true;
        g.y_independent = a == 0.0;
        g.is_zero = a == 0.0 && b == 0.0;
        return g;
    }
    if (name == "chenH3") {
        const double u = prm.u, v = prm.v;
        require(u >= 0.0 && v >= 0.0 && std::isfinite(u) && std::isfinite(v), "chenH3 needs u, v >= 0",
                "generator.u");
        g.eval = [u, v](double, std::span<const double> y, std::span<const double> z, std::span<const double>,
                        std::span<double> out) { out[0] = u * std::tanh(y[0]) + v * std::abs(z[0]); };
        g.desc.h3 = H3{constant_fn(u), constant_fn(v)};
        g.desc.h5_claim = true;
        g.y_independent = u == 0.0;
        return g;
    }
    if (name == "example1") {
        require(prm.p > 1.0, "example1 needs p > 1", "generator.p");
        require(prm.d >= 1, "example1 needs d >= 1", "generator.d");
        const Modulus h = xlogx_base(prm.p, prm.delta);
        g.d = prm.d;
        auto hf = h.eval;
        g.eval = [hf](double t, std::span<const double> y, std::span<const double> z, std::span<const double> B,
                      std::span<double> out) {
            out[0] = over(hf(std::abs(y[0])), std::sqrt(t)) + over(norm(z), std::sqrt(std::sqrt(t))) + norm(B);
        };
        ScalarFn b = [](double t) { return 1.0 / std::sqrt(t); };
        ScalarFn c = [](double t) { return 1.0 / std::sqrt(std::sqrt(t)); };
        g.desc.p = prm.p;
        g.desc.h6 = H6{b, c, xlogx(prm.p, prm.delta)};
        g.desc.h6star = H6Star{b, c, h};
        g.desc.h5_claim = true;
        return g;
    }
    if (name == "example2") {
        require(prm.p > 1.0, "example2 needs p > 1", "generator.p");
        const Modulus s = xloglog_base(prm.p, prm.delta);
        g.d = prm.d;
        require(prm.d >= 1, "example2 needs d >= 1", "generator.d");
        auto sf = s.eval;
        g.eval = [sf](double t, std::span<const double> y, std::span<const double> z, std::span<const double>,
                      std::span<double> out) {
            const double w = 1.0 + t;
            out[0] = sf(std::abs(y[0])) / (w * w) + norm(z) / w + 1.0 / (w * w);
        };
        ScalarFn b = [](double t) { return 1.0 / ((1.0 + t) * (1.0 + t)); };
        ScalarFn c = [](double t) { return 1.0 / (1.0 + t); };
        g.desc.p = prm.p;
        g.desc.h6 = H6{b, c, xloglog(prm.p, prm.delta)};
        g.desc.h6star = H6Star{b, c, s};
        g.desc.h5_claim = true;
        g.infinite_horizon = true;
        g.tail_integrands = {shifted_power_tail("b", 1.0, 1.0, 2.0), shifted_power_tail("c^2", 1.0, 1.0, 2.0),
                             shifted_power_tail("g(t,0,0)", 1.0, 1.0, 2.0)};
        return g;
    }
    fail(ErrorKind::InvalidArgument, "unknown generator '" + name + "'", "generator.name");
}

// ---------------------------------------------------------------------------
// Hypothesis translation
// ---------------------------------------------------------------------------

Generator translate_hypotheses(Generator g, double p) {
    require(p > 1.0 && std::isfinite(p), "translate_hypotheses needs p > 1", "p");
    Descriptors& D = g.desc;
    require(!D.present().empty(), "translate_hypotheses needs at least one descriptor", "descriptors");
    if (D.p && *D.p != p && (D.h4 || D.h6)) {
        fail(ErrorKind::InvalidArgument, "descriptors were derived for a different p", "p");
    }
    if ((D.h1 || D.h2) && p != 2.0) {
        fail(ErrorKind::InvalidArgument, "H1/H2 descriptors only translate at p = 2", "p");
    }
    if (D.h1) {
        require(D.h1->c >= 0.0, "H1 constant c must be nonnegative", "H1.c");
        if (D.h1->kappa(0.0) != 0.0) fail(ErrorKind::InvalidArgument, "H1 kappa(0) must be 0", "H1.kappa");
    }
    if (D.h2) {
        require(D.h2->c >= 0.0, "H2 constant c must be nonnegative", "H2.c");
    }
    if (D.h3) {
        check_nonnegative(D.h3->u, "H3.u");
        check_nonnegative(D.h3->v, "H3.v");
    }
    if (D.h6) {
        check_nonnegative(D.h6->b, "H6.b");
        check_nonnegative(D.h6->c, "H6.c");
        if (D.h6->kbar(0.0) != 0.0) fail(ErrorKind::InvalidArgument, "H6 kbar(0) must be 0", "H6.kbar");
    }
    if (D.h6star) {
        check_nonnegative(D.h6star->b, "H6*.b");
        check_nonnegative(D.h6star->c, "H6*.c");
        if (D.h6star->kappa(0.0) != 0.0) fail(ErrorKind::InvalidArgument, "H6* kappa(0) must be 0", "H6*.kappa");
    }
    if (D.h4) {
        check_nonnegative(D.h4->alpha, "H4.alpha");
        check_nonnegative(D.h4->beta, "H4.beta");
    }

    // H1 -> H6 with b = 1, c = sqrt(c), kbar = kappa.
    if (D.h1 && !D.h6) {
        D.h6 = H6{constant_fn(1.0), constant_fn(std::sqrt(D.h1->c)), D.h1->kappa};
    }
    // H2 -> H4 with alpha = 1, beta = sqrt(c), rho = kappa.
    if (D.h2 && !D.h4) {
        D.h4 = H4{constant_fn(1.0), constant_fn(std::sqrt(D.h2->c)), D.h2->kappa};
    }
    // H3 -> H6 with b = u, c = v, kbar(u) = u.
    if (D.h3 && !D.h6) {
        D.h6 = H6{D.h3->u, D.h3->v, linear_modulus(1.0)};
    }
    // H6* -> H6 with kbar = kappa^p(u^{1/p}).
    if (D.h6star && !D.h6) {
        Modulus kbar = power_transform(D.h6star->kappa, p);
        kbar.claimed.osgood = D.h6star->kappa.claimed.osgood || D.h6star->kappa.known.has_value();
        D.h6 = H6{D.h6star->b, D.h6star->c, kbar};
    }
    // H6 -> H4 with alpha = b^{(p-1)/p}, beta = c, rho = b kbar in S[T, A b, A b].
    if (D.h6 && !D.h4) {
        const ScalarFn b = D.h6->b;
        const double e = (p - 1.0) / p;
        D.h4 = H4{[b, e](double t) { return std::pow(b(t), e); }, D.h6->c, scaled_modulus("b*kbar", b, D.h6->kbar)};
    }
    D.p = p;
    return g;
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

const char* to_string(CheckStatus s) noexcept {
    switch (s) {
        case CheckStatus::Pass: return "pass";
        case CheckStatus::Fail: return "fail";
        case CheckStatus::HeuristicPass: return "heuristic-pass";
    }
    return "unknown";
}

bool HypothesisReport::all_pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.status != CheckStatus::Fail; });
}

const HypothesisEntry* HypothesisReport::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

HypothesisReport check_H4_sampled(const Generator& g, const H4& desc, double p, const SamplerSpec& sampler,
                                  const TimeGrid& grid, const QuadratureConfig& quad, std::size_t s_class_samples) {
    require(p > 1.0, "check_H4_sampled needs p > 1", "p");
    require(desc.alpha && desc.beta && desc.rho.eval, "H4 descriptor is incomplete", "H4");
    const double T = sampler.t_hi.value_or(grid.horizon_end());
    const double t_lo = sampler.t_lo.value_or(grid[1]);
    require(t_lo > 0.0 && t_lo <= T, "sampler time range must lie in (0, T]", "sampler.t_lo");
    HypothesisReport rep;

    HypothesisEntry ineq;
    ineq.name = "H4.inequality";
    ineq.samples = sampler.count;
    const std::size_t k = g.k, d = g.d;
    std::vector<double> y1(k), y2(k), z1(k * d), z2(k * d), B(d), g1(k), g2(k);
    auto U = [&](std::size_t s, std::uint32_t lane) { return keyed_uniform(sampler.seed, s, lane); };
    for (std::size_t s = 0; s < sampler.count; ++s) {
        std::uint32_t lane = 0;
        const double t = t_lo + (T - t_lo) * U(s, lane++);
        const bool close = (s % 2) == 1;
        const double scale_y = close ? std::pow(10.0, -8.0 * U(s, lane++)) : 0.0;
        const double scale_z = close ? std::pow(10.0, -8.0 * U(s, lane++)) : 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            y1[i] = sampler.y_range * (2.0 * U(s, lane++) - 1.0);
            const double other = sampler.y_range * (2.0 * U(s, lane++) - 1.0);
            y2[i] = close ? y1[i] + scale_y * other : other;
        }
        for (std::size_t i = 0; i < k * d; ++i) {
            z1[i] = sampler.z_range * (2.0 * U(s, lane++) - 1.0);
            const double other = sampler.z_range * (2.0 * U(s, lane++) - 1.0);
            z2[i] = close ? z1[i] + scale_z * other : other;
        }
        for (std::size_t i = 0; i < d; ++i) B[i] = 3.0 * std::sqrt(t) * (2.0 * U(s, lane++) - 1.0);
        g.eval(t, y1, z1, B, g1);
        g.eval(t, y2, z2, B, g2);
        const double lhs = norm_diff(g1, g2);
        const double dy = norm_diff(y1, y2), dz = norm_diff(z1, z2);
        const double rhs = desc.alpha(t) * std::pow(desc.rho(t, std::pow(dy, p)), 1.0 / p) + desc.beta(t) * dz;
        if (!std::isfinite(lhs) || !(lhs <= rhs + 1e-12 * (1.0 + rhs))) {
            ineq.status = CheckStatus::Fail;
            ineq.witness = Witness{t, y1, y2, z1, z2, B, lhs, rhs};
            break;
        }
    }
    rep.entries.push_back(std::move(ineq));

    HypothesisEntry integ;
    integ.name = "H4.integrability";
    const double q = p / (p - 1.0);
    QuadResult ia = integrate([&](double t) { return std::pow(desc.alpha(t), q); }, 0.0, grid.horizon_end(), quad);
    QuadResult ib = integrate([&](double t) { return desc.beta(t) * desc.beta(t); }, 0.0, grid.horizon_end(), quad);
    integ.values["alpha_hat"] = ia.value;
    integ.values["beta_hat"] = ib.value;
    const bool ok = ia.converged && ib.converged && std::isfinite(ia.value) && std::isfinite(ib.value);
    integ.status = ok ? CheckStatus::Pass : CheckStatus::Fail;
    if (!ok) integ.note = !ia.converged ? "alpha^{p/(p-1)}" : "beta^2";
    rep.entries.push_back(std::move(integ));

    HypothesisEntry sc;
    sc.name = "H4.rho_s_class";
    if (!desc.rho.a || !desc.rho.b) {
        sc.status = CheckStatus::Fail;
        sc.note = "rho has no envelopes";
    } else {
        SClassReport s = s_class_check(desc.rho, grid, s_class_samples, quad, sampler.seed);
        sc.samples = s.envelope_samples;
        sc.values["integral_a_plus_b"] = s.integral_a_plus_b;
        sc.values["bihari_r0"] = s.r0;
        sc.status = s.member ? CheckStatus::HeuristicPass : CheckStatus::Fail;
        if (!s.integrable) sc.note = "a + b not integrable";
        else if (!s.envelope_ok) sc.note = "envelope violated";
        else if (!s.bihari_zero) sc.note = "backward ODE has a nonzero solution";
        if (s.envelope_witness) {
            const auto& w = *s.envelope_witness;
            Witness wt;
            wt.t = w[0];
            wt.y1 = {w[1]};
            wt.lhs = w[2];
            wt.rhs = w[3];
            sc.witness = wt;
        }
    }
    rep.entries.push_back(std::move(sc));
    return rep;
}

H5Estimate check_H5(const Generator& g, const PathEnsemble& ens, double p) {
    require(p > 1.0, "check_H5 needs p > 1", "p");
    require(ens.dim() == g.d, "ensemble dimension does not match the generator", "ensemble.d");
    const TimeGrid& grid = ens.grid();
    const std::size_t P = ens.paths(), d = ens.dim(), k = g.k, n = grid.size();
    std::vector<double> vals(P);
    parallel_chunks(P, [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<double> y(k, 0.0), z(k * d, 0.0), B(d, 0.0), out(k);
        for (std::size_t path = begin; path < end; ++path) {
            std::fill(B.begin(), B.end(), 0.0);
            double prev = 0.0, acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (i > 0) {
                    const auto inc = ens.increment(i - 1, path);
                    for (std::size_t j = 0; j < d; ++j) B[j] += inc[j];
                }
                g.eval(grid[i], y, z, B, out);
                const double cur = norm(out);
                if (i > 0) acc += 0.5 * (prev + cur) * grid.dt(i - 1);
                prev = cur;
            }
            vals[path] = std::pow(acc, p);
        }
    });
    H5Estimate est;
    auto moments = [&](std::size_t lo, std::size_t hi, double& mean, double& se) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += vals[i];
        const double m = static_cast<double>(hi - lo);
        mean = s / m;
        double v = 0.0;
        for (std::size_t i = lo; i < hi; ++i) v += (vals[i] - mean) * (vals[i] - mean);
        se = m > 1 ? std::sqrt(v / (m - 1.0) / m) : 0.0;
    };
    moments(0, P, est.estimate, est.standard_error);
    est.finite = std::isfinite(est.estimate) && std::isfinite(est.standard_error);
    if (P >= 2) {
        double sa = 0.0, sb = 0.0;
        moments(0, P / 2, est.half_a, sa);
        moments(P / 2, P, est.half_b, sb);
        const double pooled = std::sqrt(sa * sa + sb * sb);
        est.stable = est.finite && std::abs(est.half_a - est.half_b) <= 4.0 * pooled + 1e-12 * std::abs(est.estimate);
    } else {
        est.half_a = est.half_b = est.estimate;
        est.stable = est.finite;
    }
    return est;
}

}  // namespace bsdecert
