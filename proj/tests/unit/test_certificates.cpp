#include "bsdecert/certificates.hpp"
#include "bsdecert/error.hpp"
#include "bsdecert/generator.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace bsdecert;

namespace {

double tanh_sinh(const ScalarFn& f, double a, double b) {
    if (b <= a) return 0.0;
    boost::math::quadrature::tanh_sinh<double> ts;
    return ts.integrate([&](double x) { return f(x); }, a, b);
}

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

TimeModulus linear_rho(double lambda) {
    return TimeModulus{"lin", [lambda](double, double u) { return lambda * u; }, [](double) { return 0.0; },
                       [lambda](double) { return lambda; }};
}

}  // namespace

TEST(Ledger, ItoConstant) {
    EXPECT_DOUBLE_EQ(make_ledger(2.0).c_p, 1.0);
    EXPECT_DOUBLE_EQ(make_ledger(1.5).c_p, 0.375);
    EXPECT_DOUBLE_EQ(make_ledger(3.0).c_p, 1.5);
}

TEST(Ledger, DefaultsAndOverrides) {
    auto L = make_ledger(2.0);
    EXPECT_DOUBLE_EQ(L.hat_m_p, 64.0);
    EXPECT_DOUBLE_EQ(L.k_p, 64.0);
    EXPECT_DOUBLE_EQ(make_ledger(1.5).m_p, 16.0 * 2.25 / 0.25);
    LedgerOverrides o;
    o.hat_m_p = 2.0;
    EXPECT_DOUBLE_EQ(make_ledger(2.0, o).hat_m_p, 2.0);
    EXPECT_DOUBLE_EQ(make_ledger(2.0, o).bar_m_p, 64.0);
    o.k_p = -1.0;
    EXPECT_THROW(make_ledger(2.0, o), Error);
    EXPECT_THROW(make_ledger(1.0), Error);
}

TEST(Partition, ZeroBudgetsSingleInterval) {
    auto zero = [](double) { return 0.0; };
    auto part = compute_partition(zero, zero, zero, make_ledger(2.0), build_grid(3.0, 30));
    ASSERT_EQ(part.size(), 1u);
    EXPECT_EQ(part.points.front(), 0.0);
    EXPECT_EQ(part.points.back(), 3.0);
}

TEST(Partition, ConstantDensityFourIntervals) {
    auto zero = [](double) { return 0.0; };
    auto one = [](double) { return 1.0; };
    auto part = compute_partition(zero, zero, one, make_ledger(2.0), build_grid(2.0, 40));
    ASSERT_EQ(part.size(), 4u);
    for (const auto& iv : part.intervals) EXPECT_NEAR(iv.t_hi - iv.t_lo, 0.5, 1e-12);
}

TEST(Partition, BisectionInsideCells) {
    auto zero = [](double) { return 0.0; };
    auto one = [](double) { return 1.0; };
    auto part = compute_partition(zero, zero, one, make_ledger(2.0), build_grid(2.0, 7));
    ASSERT_GE(part.size(), 4u);
    for (std::size_t i = 0; i + 1 < part.size(); ++i) EXPECT_NEAR(part.intervals[i + 1].b_integral, 0.5, 1e-8);
    for (const auto& iv : part.intervals) EXPECT_LE(tanh_sinh(one, iv.t_lo, iv.t_hi), 0.5);
}

TEST(Partition, ExampleOneBudgetsIndependentlyHold) {
    auto g = translate_hypotheses(zoo("example1"), 2.0);
    const H4& h = *g.desc.h4;
    auto L = make_ledger(2.0);
    auto part = compute_partition(h.alpha, h.beta, h.rho.b, L, build_grid(1.0, 50));
    EXPECT_NEAR(part.total_alpha_hat, 2.0, 1e-8);
    EXPECT_NEAR(part.total_beta_hat, 2.0, 1e-8);
    ASSERT_GE(part.size(), 1u);
    EXPECT_LT(part.size(), 10000u);
    EXPECT_EQ(part.points.front(), 0.0);
    EXPECT_EQ(part.points.back(), 1.0);
    const double ab = std::numbers::ln2 / 64.0;
    ScalarFn a2 = [&](double t) { return std::pow(h.alpha(t), 2.0); };
    ScalarFn b2 = [&](double t) { return h.beta(t) * h.beta(t); };
    for (std::size_t i = 0; i < part.size(); ++i) {
        const auto& iv = part.intervals[i];
        EXPECT_EQ(iv.t_lo, part.points[i]);
        EXPECT_EQ(iv.t_hi, part.points[i + 1]);
        EXPECT_LE(tanh_sinh(h.rho.b, iv.t_lo, iv.t_hi), 0.5);
        EXPECT_LE(tanh_sinh(a2, iv.t_lo, iv.t_hi) + tanh_sinh(b2, iv.t_lo, iv.t_hi), ab) << i;
    }
}

TEST(Partition, DivergentIntegralRejected) {
    auto zero = [](double) { return 0.0; };
    auto sing = [](double t) { return 1.0 / t; };
    try {
        compute_partition(zero, zero, sing, make_ledger(2.0), build_grid(1.0, 10));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::CertificationFailed);
        EXPECT_EQ(e.field(), "b_env");
    }
}

TEST(BoundM, PlugIn) {
    auto L = make_ledger(2.0);
    EXPECT_EQ(constant_M(L, 0.0, 0.0, nullptr, 0.0, 0.0, 0.0, 1.0).M, 0.0);
    LedgerOverrides o;
    o.hat_m_p = 1.0;
    auto r = constant_M(make_ledger(2.0, o), 1.0, 0.0, [](double) { return 0.0; }, 0.0, 0.0, 0.0, 1.0);
    EXPECT_DOUBLE_EQ(r.C_hat, 1.0);
    EXPECT_DOUBLE_EQ(r.M, 2.0);
    for (double T : {1.0, 10.0, 100.0}) EXPECT_DOUBLE_EQ(constant_M(L, 1.0, 0.0, nullptr, 0.0, 0.0, 0.0, T).M, 128.0);
    auto ra = constant_M(L, 0.0, 0.0, [](double) { return 3.0; }, 0.0, 0.0, 0.0, 2.0);
    EXPECT_NEAR(ra.M, 12.0, 1e-12);
}

TEST(Majorant, LinearClosedForm) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const double lambda = 0.2 + 2.0 * U(rng);
        const double delta = 0.5 * U(rng) / lambda;
        const double M = 0.1 + 10.0 * U(rng);
        const double t_lo = U(rng);
        auto grid = build_grid(t_lo + delta, 20);
        MajorantOptions opt;
        opt.n_max = 12;
        opt.tol = 1e-300;
        auto tr = majorant_sequence(linear_rho(lambda), M, t_lo, t_lo + delta, grid, opt);
        ASSERT_EQ(tr.phi_at_lo.size(), 13u);
        for (int n = 0; n <= 12; ++n)
            EXPECT_NEAR(tr.phi_at_lo[n], M * std::pow(lambda * delta, n + 1) / factorial(n + 1), 1e-8);
        EXPECT_TRUE(tr.monotone);
        EXPECT_TRUE(tr.bounded_by_M);
        for (const auto& phi : tr.phi) EXPECT_EQ(phi.back(), 0.0);
    }
}

TEST(Majorant, ZeroRhoConvergesImmediately) {
    TimeModulus zero{"zero", [](double, double) { return 0.0; }, nullptr, nullptr};
    auto tr = majorant_sequence(zero, 5.0, 0.0, 1.0, build_grid(1.0, 10));
    EXPECT_TRUE(tr.converged);
    EXPECT_EQ(tr.n_stop, 0u);
}

TEST(Majorant, GateFailureCarriesIntegral) {
    try {
        majorant_sequence(linear_rho(10.0), 2.0, 0.0, 1.0, build_grid(1.0, 10));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::GateFailed);
        ASSERT_TRUE(e.value().has_value());
        EXPECT_NEAR(*e.value(), 20.0, 1e-9);
    }
}

TEST(Majorant, ExampleOneLastInterval) {
    auto g = translate_hypotheses(zoo("example1"), 2.0);
    const H4& h = *g.desc.h4;
    auto L = make_ledger(2.0);
    auto grid = build_grid(1.0, 50);
    auto part = compute_partition(h.alpha, h.beta, h.rho.b, L, grid);
    const auto& last = part.intervals.back();
    auto bm = constant_M(L, 0.5, 0.375, h.rho.a, last.alpha_hat, last.beta_hat, last.t_lo, last.t_hi);
    auto tr = majorant_sequence(h.rho, bm.M, last.t_lo, last.t_hi, grid);
    EXPECT_LE(tr.gate_integral, bm.M);
    EXPECT_TRUE(tr.converged);
    EXPECT_LE(tr.n_stop, 500u);
    EXPECT_TRUE(tr.monotone);
    EXPECT_TRUE(tr.bounded_by_M);
    for (std::size_t n = 1; n < tr.phi.size(); ++n)
        for (std::size_t j = 0; j < tr.phi[n].size(); ++j) EXPECT_LE(tr.phi[n][j], tr.phi[n - 1][j]);
}
