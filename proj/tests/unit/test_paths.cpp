#include "bsdecert/error.hpp"
#include "bsdecert/parallel.hpp"
#include "bsdecert/paths.hpp"
#include "bsdecert/philox.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>

using namespace bsdecert;

TEST(Philox, KnownAnswerVectors) {
    auto z = philox4x32_10({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(z, (PhiloxCounter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    auto o = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(o, (PhiloxCounter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    auto pi = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(pi, (PhiloxCounter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Grid, UniformPoints) {
    auto g = build_grid(1.0, 4);
    ASSERT_EQ(g.size(), 5u);
    const double expect[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (int i = 0; i < 5; ++i) EXPECT_EQ(g[i], expect[i]);
    auto g2 = build_grid(2.0, 1);
    EXPECT_EQ(g2.size(), 2u);
    EXPECT_EQ(g2[1], 2.0);
}

TEST(Grid, GeometricHalving) {
    auto g = build_grid(1.0, 10, Spacing::geometric(0.5));
    // Oracle: steps dt_i = dt_0 2^{-i} with dt_0 = 1 / (2 - 2^{-9}).
    const double dt0 = 1.0 / (2.0 - std::pow(2.0, -9));
    double t = 0.0;
    for (int i = 0; i < 10; ++i) {
        EXPECT_NEAR(g.dt(i), dt0 * std::pow(0.5, i), 1e-14);
        t += dt0 * std::pow(0.5, i);
    }
    EXPECT_NEAR(t, 1.0, 1e-12);
    EXPECT_NEAR(g[10], 1.0, 1e-12);
}

TEST(Grid, Invalid) {
    EXPECT_THROW(build_grid(0.0, 4), Error);
    EXPECT_THROW(build_grid(-1.0, 4), Error);
    EXPECT_THROW(build_grid(1.0, 0), Error);
    EXPECT_THROW(TimeGrid({0.0, 0.5, 0.5}), Error);
    EXPECT_THROW(TimeGrid({0.1, 0.5}), Error);
    EXPECT_THROW(TimeGrid({0.0}), Error);
}

TEST(Grid, WindowGrid) {
    auto g = build_window_grid(1.0, 0.75, 50, 3);
    EXPECT_EQ(g.size(), 54u);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[3], 0.75);
    EXPECT_EQ(g.index_at_or_after(0.75), 3u);
    EXPECT_NEAR(g.dt(10), 0.005, 1e-15);
}

TEST(Horizon, ClosedFormTails) {
    QuadratureConfig q;
    std::vector<TailIntegrand> b{shifted_power_tail("b", 1.0, 1.0, 2.0)};
    auto h = truncate_horizon(b, 9.0, q);
    ASSERT_EQ(h.tail_report.size(), 1u);
    EXPECT_NEAR(h.tail_report[0].value, 0.1, 1e-15);
    EXPECT_TRUE(h.tail_report[0].closed_form);
    auto h2 = truncate_horizon(b, 99.0, q);
    EXPECT_NEAR(h2.tail_report[0].value, 0.01, 1e-15);
}

TEST(Horizon, NumericTail) {
    QuadratureConfig q;
    std::vector<TailIntegrand> b{{"b", [](double t) { return 1.0 / ((1 + t) * (1 + t)); }, std::nullopt}};
    auto h = truncate_horizon(b, 9.0, q);
    EXPECT_NEAR(h.tail_report[0].value, 0.1, 1e-8);
    EXPECT_FALSE(h.tail_report[0].closed_form);
}

TEST(Horizon, DivergentRejected) {
    QuadratureConfig q;
    std::vector<TailIntegrand> closed{shifted_power_tail("b_harmonic", 1.0, 1.0, 1.0)};
    try {
        truncate_horizon(closed, 10.0, q);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::HorizonRejected);
        EXPECT_EQ(e.field(), "b_harmonic");
    }
    std::vector<TailIntegrand> numeric{{"b_num", [](double t) { return 1.0 / (1 + t); }, std::nullopt}};
    try {
        truncate_horizon(numeric, 10.0, q);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::HorizonRejected);
        EXPECT_EQ(e.field(), "b_num");
    }
}

TEST(Horizon, TruncatedGridKeepsReport) {
    QuadratureConfig q;
    std::vector<TailIntegrand> b{shifted_power_tail("b", 1.0, 1.0, 2.0)};
    auto g = build_grid(truncate_horizon(b, 10.0, q), 50);
    EXPECT_TRUE(g.truncated());
    EXPECT_EQ(g.horizon_end(), 10.0);
}

TEST(Ensemble, Deterministic) {
    auto grid = std::make_shared<const TimeGrid>(build_grid(1.0, 8));
    auto a = simulate_brownian(grid, 3, 2500, 42);
    auto b = simulate_brownian(grid, 3, 2500, 42);
    EXPECT_TRUE(std::equal(a.increments().begin(), a.increments().end(), b.increments().begin()));
    auto c = simulate_brownian(grid, 3, 2500, 43);
    EXPECT_FALSE(std::equal(a.increments().begin(), a.increments().end(), c.increments().begin()));
}

TEST(Ensemble, ThreadCountIndependent) {
    auto grid = std::make_shared<const TimeGrid>(build_grid(1.0, 5));
    set_thread_cap(1);
    auto a = simulate_brownian(grid, 2, 5000, 7);
    set_thread_cap(4);
    auto b = simulate_brownian(grid, 2, 5000, 7);
    set_thread_cap(0);
    EXPECT_TRUE(std::equal(a.increments().begin(), a.increments().end(), b.increments().begin()));
}

TEST(Ensemble, MeanAndVariance) {
    auto grid = std::make_shared<const TimeGrid>(build_grid(1.0, 1));
    const std::size_t P = 100000;
    auto e = simulate_brownian(grid, 1, P, 2024);
    double s = 0, s2 = 0;
    for (std::size_t p = 0; p < P; ++p) {
        const double x = e.increment(0, p)[0];
        s += x;
        s2 += x * x;
    }
    const double mean = s / P;
    const double var = s2 / P - mean * mean;
    EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(1.0 / P));
    // Var of the sample variance of N(0,1) is 2/P.
    EXPECT_LT(std::abs(var - 1.0), 3.0 * std::sqrt(2.0 / P));
}

TEST(Ensemble, NormalizedIncrementsPerStepAndIndependence) {
    auto grid = std::make_shared<const TimeGrid>(build_grid(2.0, 6, Spacing::geometric(0.7)));
    const std::size_t P = 10000;
    auto e = simulate_brownian(grid, 2, P, 99);
    for (std::size_t i = 0; i < grid->steps(); ++i) {
        for (std::size_t k = 0; k < 2; ++k) {
            double s = 0, s2 = 0;
            for (std::size_t p = 0; p < P; ++p) {
                const double x = e.increment(i, p)[k] / std::sqrt(grid->dt(i));
                s += x;
                s2 += x * x;
            }
            EXPECT_LT(std::abs(s / P), 3.0 / std::sqrt(double(P)));
            EXPECT_LT(std::abs(s2 / P - 1.0), 3.0 * std::sqrt(2.0 / P));
        }
    }
    double cross = 0, cross_dim = 0;
    for (std::size_t p = 0; p < P; ++p) {
        cross += e.increment(0, p)[0] * e.increment(1, p)[0] / std::sqrt(grid->dt(0) * grid->dt(1));
        cross_dim += e.increment(2, p)[0] * e.increment(2, p)[1] / grid->dt(2);
    }
    EXPECT_LT(std::abs(cross / P), 3.0 / std::sqrt(double(P)));
    EXPECT_LT(std::abs(cross_dim / P), 3.0 / std::sqrt(double(P)));
}

TEST(BrownianValues, CumulativeSums) {
    auto grid = std::make_shared<const TimeGrid>(build_grid(2.0, 2));
    PathEnsemble ens(grid, 1, 1, 0, {1.0, -1.0});
    auto v = brownian_values(ens);
    EXPECT_EQ(v.at(0, 0)[0], 0.0);
    EXPECT_EQ(v.at(1, 0)[0], 1.0);
    EXPECT_EQ(v.at(2, 0)[0], 0.0);
    PathEnsemble zero(grid, 2, 3, 0, std::vector<double>(12, 0.0));
    auto z = brownian_values(zero);
    for (double x : z.raw()) EXPECT_EQ(x, 0.0);
}

TEST(BrownianValues, TerminalVariance) {
    auto grid = std::make_shared<const TimeGrid>(build_grid(1.5, 10));
    const std::size_t P = 100000;
    auto v = brownian_values(simulate_brownian(grid, 1, P, 5));
    double s = 0, s2 = 0;
    for (std::size_t p = 0; p < P; ++p) {
        const double x = v.at(10, p)[0];
        s += x;
        s2 += x * x;
    }
    const double var = s2 / P - (s / P) * (s / P);
    EXPECT_LT(std::abs(var - 1.5), 3.0 * 1.5 * std::sqrt(2.0 / P));
}

TEST(Ensemble, BinaryRoundTrip) {
    auto grid = std::make_shared<const TimeGrid>(build_grid(1.0, 4));
    auto e = simulate_brownian(grid, 2, 17, 123456789);
    const auto path = (std::filesystem::temp_directory_path() / "bsdecert_roundtrip.bin").string();
    save_ensemble(e, path);
    EXPECT_EQ(std::filesystem::file_size(path), 32u + 4u * 17u * 2u * 8u);
    auto back = load_ensemble(path, grid);
    EXPECT_EQ(back.seed(), 123456789u);
    EXPECT_EQ(back.dim(), 2u);
    EXPECT_EQ(back.paths(), 17u);
    EXPECT_EQ(std::memcmp(back.increments().data(), e.increments().data(), e.increments().size() * 8), 0);
    auto other = std::make_shared<const TimeGrid>(build_grid(1.0, 5));
    EXPECT_THROW(load_ensemble(path, other), Error);
    std::filesystem::remove(path);
}

TEST(Ensemble, PathSubsetKeepsIncrements) {
    auto grid = std::make_shared<TimeGrid>(build_grid(1.0, 4));
    auto ens = simulate_brownian(grid, 2, 10, 5);
    auto sub = path_subset(ens, 3, 4);
    ASSERT_EQ(sub.paths(), 4u);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t p = 0; p < 4; ++p)
            for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(sub.increment(i, p)[c], ens.increment(i, p + 3)[c]);
    EXPECT_THROW(path_subset(ens, 8, 4), Error);
}
