#pragma once

#include <functional>
#include <span>
#include <vector>

namespace bsdecert {

using ScalarFn = std::function<double(double)>;

struct QuadratureConfig {
    enum class Rule { Trapezoid, Adaptive };

    Rule rule = Rule::Adaptive;
    double abs_tol = 1e-12;
    double rel_tol = 1e-10;
    int max_subdivisions = 1 << 16;

    void validate() const;
};

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    bool converged = true;
};

/// Integrates f over [a, b]. The adaptive rule never evaluates f at the
/// endpoints, so integrable endpoint singularities (t^{-1/2} at 0) are fine.
QuadResult integrate(const ScalarFn& f, double a, double b, const QuadratureConfig& cfg);

/// Integral over [a, +inf) by geometrically growing blocks with a geometric
/// tail extrapolation. `converged == false` with an infinite value means the
/// block sums stopped decaying (divergence-likely).
QuadResult integrate_tail(const ScalarFn& f, double a, const QuadratureConfig& cfg);

/// out[i] = \int_{points[i]}^{points.back()} f, accumulated interval by interval.
/// Returns false if any interval failed to converge.
bool backward_cumulative(const ScalarFn& f, std::span<const double> points,
                         const QuadratureConfig& cfg, std::span<double> out);

}  // namespace bsdecert
