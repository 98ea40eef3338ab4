#include "bsdecert/error.hpp"
#include "bsdecert/parallel.hpp"
#include "bsdecert/solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>

using namespace bsdecert;

namespace {

struct Bench {
    std::shared_ptr<const TimeGrid> grid;
    PathEnsemble ens;
    BrownianValues bv;

    Bench(double T, std::size_t M, std::size_t P, std::uint64_t seed, std::size_t d = 1)
        : grid(std::make_shared<TimeGrid>(build_grid(T, M))), ens(simulate_brownian(grid, d, P, seed)), bv(ens) {}

    std::vector<double> xi(const TerminalCondition& tc, std::size_t k = 1) const {
        std::vector<double> x(ens.paths() * k);
        tc.evaluate(bv, k, x);
        return x;
    }
};

Generator constant_driver(double c) {
    Generator g;
    g.name = "const";
    g.eval = [c](double, std::span<const double>, std::span<const double>, std::span<const double>,
                 std::span<double> out) { out[0] = c; };
    g.y_independent = true;
    return g;
}

SolverOptions options(std::size_t degree) {
    SolverOptions o;
    o.basis = RegressionBasis::polynomial(degree);
    o.tol_sp = 1e-10;
    return o;
}

}  // namespace

TEST(Basis, SizesAndConstant) {
    EXPECT_EQ(RegressionBasis::polynomial(3).size(), 4u);
    EXPECT_EQ(RegressionBasis::polynomial(2, 2).size(), 6u);
    EXPECT_EQ(RegressionBasis::piecewise(8, 0).size(), 8u);
    EXPECT_EQ(RegressionBasis::piecewise(8).size(), 16u);
    std::vector<double> f(6);
    std::vector<double> B{0.3, -0.2};
    RegressionBasis::polynomial(2, 2).features(0.5, B, f);
    EXPECT_EQ(f[0], 1.0);
    std::vector<double> pw(8);
    RegressionBasis::piecewise(8, 0).features(0.5, B, pw);
    double s = 0.0;
    for (double v : pw) s += v;
    EXPECT_EQ(s, 1.0);
}

TEST(ConditionalExpectation, ConstantIsExact) {
    Bench s(1.0, 10, 5000, 3);
    std::vector<double> v(5000, 2.5);
    for (std::size_t i : {0u, 1u, 5u, 9u}) {
        auto fit = conditional_expectation(v, 1, RegressionBasis::polynomial(3), i, s.bv, *s.grid);
        for (double x : fit) EXPECT_NEAR(x, 2.5, 1e-12);
    }
}

TEST(ConditionalExpectation, MartingaleProperty) {
    const std::size_t P = 100000;
    Bench s(1.0, 10, P, 11);
    const std::size_t i = 5;
    const double dt = s.grid->dt(i);
    std::vector<double> v(P), v2(P);
    for (std::size_t p = 0; p < P; ++p) {
        v[p] = s.bv.at(i + 1, p)[0];
        v2[p] = v[p] * v[p];
    }
    auto fit = conditional_expectation(v, 1, RegressionBasis::polynomial(1), i, s.bv, *s.grid);
    auto fit2 = conditional_expectation(v2, 1, RegressionBasis::polynomial(2), i, s.bv, *s.grid);
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        const double b = s.bv.at(i, p)[0];
        e1 += (fit[p] - b) * (fit[p] - b);
        e2 += (fit2[p] - b * b - dt) * (fit2[p] - b * b - dt);
    }
    // Projection of noise with variance sigma^2 on q functions: mean square error q sigma^2 / P.
    const double t = (*s.grid)[i];
    EXPECT_LE(std::sqrt(e1 / P), 3.0 * std::sqrt(2.0 * dt / P));
    EXPECT_LE(std::sqrt(e2 / P), 3.0 * std::sqrt(3.0 * (4.0 * 3.0 * t * dt + 2.0 * dt * dt) / P));
}

TEST(ConditionalExpectation, RejectsTooFewPaths) {
    Bench s(1.0, 4, 3, 1);
    std::vector<double> v(3, 1.0);
    EXPECT_THROW(conditional_expectation(v, 1, RegressionBasis::polynomial(5), 2, s.bv, *s.grid), Error);
}

TEST(SolveInner, ZeroDriverConstantTerminal) {
    Bench s(10.0, 50, 1000, 5);
    auto g = zoo("zero");
    auto xi = s.xi(TerminalCondition::constant(1.0));
    SolutionEnsemble frozen(s.grid, 1, 1, 1000);
    auto sol = solve_inner(xi, frozen, g, s.ens, s.bv, options(3));
    for (double y : sol.y_raw()) EXPECT_NEAR(y, 1.0, 1e-10);
    for (double z : sol.z_raw()) EXPECT_NEAR(z, 0.0, 1e-10);
}

TEST(SolveInner, ZeroDriverBrownianTerminal) {
    Bench s(1.0, 50, 10000, 8);
    auto xi = s.xi(TerminalCondition::brownian());
    SolutionEnsemble frozen(s.grid, 1, 1, 10000);
    auto sol = solve_inner(xi, frozen, zoo("zero"), s.ens, s.bv, options(3));
    SolutionEnsemble exact(s.grid, 1, 1, 10000);
    for (std::size_t i = 0; i < s.grid->size(); ++i)
        for (std::size_t p = 0; p < 10000; ++p) exact.y(i, p)[0] = s.bv.at(i, p)[0];
    EXPECT_LT(sp_distance(sol, exact, 2.0) / empirical_sp_norm(exact, 2.0), 0.05);
    EXPECT_EQ(sol.y(50, 17)[0], xi[17]);
    double zmean = 0.0;
    for (double z : sol.z_raw()) zmean += z;
    EXPECT_NEAR(zmean / static_cast<double>(sol.z_raw().size()), 1.0, 0.02);
}

TEST(SolveInner, DeterministicDriver) {
    Bench s(1.0, 20, 2000, 2);
    auto xi = s.xi(TerminalCondition::constant(0.0));
    SolutionEnsemble frozen(s.grid, 1, 1, 2000);
    auto sol = solve_inner(xi, frozen, constant_driver(1.0), s.ens, s.bv, options(2));
    for (std::size_t i = 0; i < s.grid->size(); ++i) {
        EXPECT_NEAR(sol.y(i, 0)[0], 1.0 - (*s.grid)[i], 1e-10);
        EXPECT_NEAR(sol.y(i, 1999)[0], 1.0 - (*s.grid)[i], 1e-10);
    }
    for (double z : sol.z_raw()) EXPECT_NEAR(z, 0.0, 1e-10);
}

TEST(Picard, ZeroDriverConvergesAtOne) {
    Bench s(1.0, 20, 1000, 4);
    auto xi = s.xi(TerminalCondition::brownian());
    auto res = picard_solve(xi, zoo("zero"), s.ens, s.bv, options(3));
    ASSERT_TRUE(res.trace.converged);
    EXPECT_EQ(res.trace.converged_iterate, 1u);
    ASSERT_EQ(res.trace.steps.size(), 2u);
    EXPECT_GT(res.trace.steps[0].sp_distance, 0.0);
    EXPECT_EQ(res.trace.steps[1].sp_distance, 0.0);
    SolverOptions more = options(3);
    more.n_max = 7;
    auto res2 = picard_solve(xi, zoo("zero"), s.ens, s.bv, more);
    EXPECT_TRUE(std::equal(res.solution.y_raw().begin(), res.solution.y_raw().end(), res2.solution.y_raw().begin()));
}

TEST(Picard, TowerPropertyZeroDriver) {
    Bench s(1.0, 10, 3000, 9);
    auto xi = s.xi(TerminalCondition::abs_capped(1.0));
    auto res = picard_solve(xi, zoo("zero"), s.ens, s.bv, options(3));
    const std::size_t i = 4;
    auto direct = conditional_expectation(xi, 1, RegressionBasis::polynomial(3), i, s.bv, *s.grid);
    // Nested empirical projections agree with the direct one up to regression noise.
    double acc = 0.0, m = 0.0, m2 = 0.0;
    for (std::size_t p = 0; p < 3000; ++p) {
        const double e = res.solution.y(i, p)[0] - direct[p];
        acc += e * e;
        m += xi[p];
        m2 += xi[p] * xi[p];
    }
    const double var = m2 / 3000.0 - (m / 3000.0) * (m / 3000.0);
    EXPECT_LE(std::sqrt(acc / 3000.0), 3.0 * std::sqrt(4.0 * var / 3000.0));
    EXPECT_NEAR(mean_y(res.solution, i).mean, m / 3000.0, 1e-12);
}

TEST(Picard, LinearBenchmarkClosedForm) {
    Bench s(1.0, 50, 10000, 12);
    ZooParams prm;
    prm.a = 1.0;
    prm.b = 1.0;
    auto xi = s.xi(TerminalCondition::brownian());
    auto res = picard_solve(xi, zoo("linear", prm), s.ens, s.bv, options(3));
    ASSERT_TRUE(res.trace.converged);
    EXPECT_NEAR(mean_y(res.solution, 0).mean / std::exp(1.0), 1.0, 0.05);
    for (std::size_t i = 0; i < s.grid->steps(); ++i) {
        double zm = 0.0;
        for (std::size_t p = 0; p < 10000; ++p) zm += res.solution.z(i, p)[0];
        zm /= 10000.0;
        EXPECT_NEAR(zm / std::exp(1.0 - (*s.grid)[i]), 1.0, 0.10) << i;
    }
}

TEST(Picard, ThreadCountDoesNotChangeBits) {
    Bench s(1.0, 20, 5000, 21);
    ZooParams prm;
    prm.a = 0.5;
    prm.b = 1.0;
    auto xi = s.xi(TerminalCondition::abs_capped(1.0));
    set_thread_cap(1);
    auto a = picard_solve(xi, zoo("linear", prm), s.ens, s.bv, options(3));
    set_thread_cap(4);
    auto b = picard_solve(xi, zoo("linear", prm), s.ens, s.bv, options(3));
    set_thread_cap(0);
    EXPECT_TRUE(std::equal(a.solution.y_raw().begin(), a.solution.y_raw().end(), b.solution.y_raw().begin()));
    EXPECT_TRUE(std::equal(a.solution.z_raw().begin(), a.solution.z_raw().end(), b.solution.z_raw().begin()));
}

TEST(Picard, DivergenceFlagged) {
    Bench s(1.0, 10, 500, 2);
    Generator g;
    g.name = "explode";
    g.eval = [](double, std::span<const double> y, std::span<const double>, std::span<const double>,
                std::span<double> out) { out[0] = 1.0 + 50.0 * y[0] * y[0]; };
    auto xi = s.xi(TerminalCondition::constant(1.0));
    SolverOptions o = options(1);
    o.n_max = 30;
    auto res = picard_solve(xi, g, s.ens, s.bv, o);
    EXPECT_TRUE(res.trace.diverged);
    EXPECT_FALSE(res.trace.converged);
}

TEST(Norms, ClosedForms) {
    auto grid = std::make_shared<TimeGrid>(build_grid(2.0, 10));
    SolutionEnsemble s(grid, 1, 1, 50);
    for (std::size_t i = 0; i < grid->size(); ++i)
        for (std::size_t p = 0; p < 50; ++p) s.y(i, p)[0] = 1.0;
    EXPECT_DOUBLE_EQ(empirical_sp_norm(s, 2.0), 1.0);
    EXPECT_DOUBLE_EQ(empirical_sp_norm(s, 3.5), 1.0);
    EXPECT_EQ(empirical_mp_norm(s, 2.0), 0.0);
    for (std::size_t i = 0; i < grid->steps(); ++i)
        for (std::size_t p = 0; p < 50; ++p) s.z(i, p)[0] = 1.0;
    EXPECT_NEAR(empirical_mp_norm(s, 2.0), std::sqrt(2.0), 1e-14);
    EXPECT_NEAR(empirical_mp_norm(s, 4.0), std::sqrt(2.0), 1e-14);
}

TEST(Norms, PermutationInvariantAndMonotone) {
    auto grid = std::make_shared<TimeGrid>(build_grid(1.0, 5));
    SolutionEnsemble a(grid, 1, 1, 4), b(grid, 1, 1, 4), c(grid, 1, 1, 4);
    for (std::size_t i = 0; i < grid->size(); ++i)
        for (std::size_t p = 0; p < 4; ++p) {
            a.y(i, p)[0] = std::sin(1.0 + i + 3.0 * p);
            b.y(i, 3 - p)[0] = a.y(i, p)[0];
            c.y(i, p)[0] = 1.5 * std::abs(a.y(i, p)[0]);
        }
    EXPECT_NEAR(empirical_sp_norm(a, 2.0), empirical_sp_norm(b, 2.0), 1e-15);
    EXPECT_GE(empirical_sp_norm(c, 2.0), empirical_sp_norm(a, 2.0));
}

TEST(Residual, ExactDiscreteSolutions) {
    Bench s(1.0, 20, 300, 6);
    SolutionEnsemble one(s.grid, 1, 1, 300);
    for (std::size_t i = 0; i < s.grid->size(); ++i)
        for (std::size_t p = 0; p < 300; ++p) one.y(i, p)[0] = 1.0;
    for (const auto& r : residual_check(one, s.xi(TerminalCondition::constant(1.0)), zoo("zero"), s.ens, s.bv)) {
        EXPECT_EQ(r.mean, 0.0);
        EXPECT_EQ(r.rms, 0.0);
    }
    SolutionEnsemble bm(s.grid, 1, 1, 300);
    for (std::size_t i = 0; i < s.grid->size(); ++i)
        for (std::size_t p = 0; p < 300; ++p) {
            bm.y(i, p)[0] = s.bv.at(i, p)[0];
            if (i < s.grid->steps()) bm.z(i, p)[0] = 1.0;
        }
    for (const auto& r : residual_check(bm, s.xi(TerminalCondition::brownian()), zoo("zero"), s.ens, s.bv))
        EXPECT_LE(r.rms, 1e-14);
}

TEST(Residual, ShrinksWithRefinement) {
    ZooParams prm;
    prm.a = 1.0;
    prm.b = 1.0;
    auto rms_of = [&](std::size_t M, std::size_t P) {
        Bench s(1.0, M, P, 30);
        auto xi = s.xi(TerminalCondition::brownian());
        auto res = picard_solve(xi, zoo("linear", prm), s.ens, s.bv, options(3));
        double acc = 0.0;
        auto rr = residual_check(res.solution, xi, zoo("linear", prm), s.ens, s.bv);
        for (const auto& r : rr) acc += r.rms * r.rms;
        return std::sqrt(acc / static_cast<double>(rr.size()));
    };
    EXPECT_LT(rms_of(50, 10000), rms_of(25, 1000));
}

TEST(Uniqueness, ZeroDriverConstant) {
    Bench s(1.0, 10, 500, 3);
    SolverOptions a = options(2), b = options(3);
    b.init = SolverOptions::Init::Terminal;
    auto rep = uniqueness_probe(zoo("zero"), TerminalCondition::constant(1.0), s.ens, s.ens, a, b);
    EXPECT_TRUE(rep.same_paths);
    EXPECT_LT(rep.sp_distance, 1e-12);
    EXPECT_LT(rep.mp_distance, 1e-12);
}

TEST(Uniqueness, LinearTwoBases) {
    Bench s(1.0, 50, 10000, 14);
    ZooParams prm;
    prm.a = 1.0;
    prm.b = 1.0;
    auto g = zoo("linear", prm);
    auto rep = uniqueness_probe(g, TerminalCondition::brownian(), s.ens, s.ens, options(2), options(3));
    auto xi = s.xi(TerminalCondition::brownian());
    auto res = picard_solve(xi, g, s.ens, s.bv, options(3));
    double worst = 0.0;
    for (const auto& r : residual_check(res.solution, xi, g, s.ens, s.bv)) worst = std::max(worst, r.rms);
    EXPECT_LT(rep.sp_distance, 2.0 * worst);
}

TEST(Basis, PiecewiseLinearReproducesMartingale) {
    Bench s(1.0, 10, 4000, 21);
    auto xi = s.xi(TerminalCondition::brownian());
    std::vector<double> v(xi);
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = s.bv.at(5, p)[0];
    auto fit = conditional_expectation(v, 1, RegressionBasis::piecewise(6, 1), 5, s.bv, *s.grid);
    for (std::size_t p = 0; p < v.size(); ++p) EXPECT_NEAR(fit[p], v[p], 1e-10);
}

TEST(Uniqueness, BatchStandardError) {
    Bench s(1.0, 10, 2000, 8);
    SolverOptions o = options(2);
    auto flat = batch_sp_norm(zoo("zero"), TerminalCondition::constant(1.0), s.ens, o, 4);
    EXPECT_NEAR(flat.mean, 1.0, 1e-12);
    EXPECT_LT(flat.se, 1e-12);
    auto bm = batch_sp_norm(zoo("zero"), TerminalCondition::brownian(), s.ens, o, 4);
    EXPECT_GT(bm.se, 0.0);
    auto full = picard_solve(s.xi(TerminalCondition::brownian()), zoo("zero"), s.ens, s.bv, o);
    EXPECT_LT(std::abs(bm.mean - empirical_sp_norm(full.solution, 2.0)), 5.0 * bm.se * 2.0);
    EXPECT_THROW(batch_sp_norm(zoo("zero"), TerminalCondition::brownian(), s.ens, o, 1), Error);
}
