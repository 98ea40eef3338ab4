#include "bsdecert/quadrature.hpp"

#include "bsdecert/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>

namespace bsdecert {

void QuadratureConfig::validate() const {
    require(abs_tol > 0.0 && std::isfinite(abs_tol), "quadrature abs_tol must be positive", "quad.abs_tol");
    require(rel_tol > 0.0 && std::isfinite(rel_tol), "quadrature rel_tol must be positive", "quad.rel_tol");
    require(max_subdivisions >= 1, "quadrature max_subdivisions must be >= 1", "quad.max_subdivisions");
}

namespace {

// Kronrod 15-point abscissae (xk[1], xk[3], xk[5], xk[7] are the Gauss 7-point nodes).
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a, b, value, error;
    bool operator<(const Panel& o) const {
        if (error != o.error) return error < o.error;
        return a > o.a;  // deterministic tie-break
    }
};

Panel gk15(const ScalarFn& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kron = fc * kWgk[7];
    double gauss = fc * kWg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        const double fsum = f(c - dx) + f(c + dx);
        kron += kWgk[j] * fsum;
        if (j % 2 == 1) gauss += kWg[j / 2] * fsum;
    }
    kron *= h;
    gauss *= h;
    return {a, b, kron, std::abs(kron - gauss)};
}

QuadResult adaptive(const ScalarFn& f, double a, double b, const QuadratureConfig& cfg) {
    std::priority_queue<Panel> heap;
    std::vector<Panel> settled;
    Panel first = gk15(f, a, b);
    if (!std::isfinite(first.value)) return {first.value, std::numeric_limits<double>::infinity(), false};
    heap.push(first);
    double total = first.value;
    double total_err = first.error;
    int count = 1;
    while (!heap.empty()) {
        const double target = std::max(cfg.abs_tol, cfg.rel_tol * std::abs(total));
        if (total_err <= target || count >= cfg.max_subdivisions) break;
        Panel worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            settled.push_back(worst);  // cannot split further at this precision
            continue;
        }
        Panel left = gk15(f, worst.a, mid);
        Panel right = gk15(f, mid, worst.b);
        if (!std::isfinite(left.value) || !std::isfinite(right.value)) {
            return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), false};
        }
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        ++count;
    }
    while (!heap.empty()) {
        settled.push_back(heap.top());
        heap.pop();
    }
    // Re-sum in a fixed order so the result does not carry the running-update rounding.
    std::sort(settled.begin(), settled.end(), [](const Panel& x, const Panel& y) { return x.a < y.a; });
    double value = 0.0, err = 0.0;
    for (const auto& p : settled) {
        value += p.value;
        err += p.error;
    }
    const double target = std::max(cfg.abs_tol, cfg.rel_tol * std::abs(value));
    return {value, err, err <= target && std::isfinite(value)};
}

QuadResult trapezoid(const ScalarFn& f, double a, double b, const QuadratureConfig& cfg) {
    double h = b - a;
    double sum = 0.5 * (f(a) + f(b));
    double prev = sum * h;
    for (long n = 1; n < cfg.max_subdivisions; n *= 2) {
        double add = 0.0;
        for (long j = 0; j < n; ++j) add += f(a + (static_cast<double>(j) + 0.5) * h);
        sum += add;
        h *= 0.5;
        const double cur = sum * h;
        const double err = std::abs(cur - prev) / 3.0;
        if (!std::isfinite(cur)) return {cur, std::numeric_limits<double>::infinity(), false};
        if (err <= std::max(cfg.abs_tol, cfg.rel_tol * std::abs(cur)) && n >= 4) return {cur, err, true};
        prev = cur;
    }
    return {prev, std::numeric_limits<double>::infinity(), false};
}

}  // namespace

QuadResult integrate(const ScalarFn& f, double a, double b, const QuadratureConfig& cfg) {
    if (a == b) return {0.0, 0.0, true};
    if (b < a) {
        QuadResult r = integrate(f, b, a, cfg);
        r.value = -r.value;
        return r;
    }
    return cfg.rule == QuadratureConfig::Rule::Adaptive ? adaptive(f, a, b, cfg) : trapezoid(f, a, b, cfg);
}

QuadResult integrate_tail(const ScalarFn& f, double a, const QuadratureConfig& cfg) {
    constexpr int kMaxBlocks = 64;
    constexpr int kWindow = 4;
    const double unit = 1.0 + std::abs(a);
    double lo = a;
    double width = unit;
    double sum = 0.0, err = 0.0;
    std::vector<double> blocks;
    for (int k = 0; k < kMaxBlocks; ++k) {
        const double hi = lo + width;
        QuadResult r = integrate(f, lo, hi, cfg);
        if (!std::isfinite(r.value)) return {r.value, std::numeric_limits<double>::infinity(), false};
        blocks.push_back(r.value);
        sum += r.value;
        err += r.error;
        lo = hi;
        width *= 2.0;
        if (blocks.size() < static_cast<std::size_t>(kWindow + 1)) continue;

        // Ratios of successive block sums over the last window.
        double worst_ratio = 0.0;
        bool all_zero = true;
        for (std::size_t j = blocks.size() - kWindow; j < blocks.size(); ++j) {
            const double prev = std::abs(blocks[j - 1]);
            const double cur = std::abs(blocks[j]);
            if (cur != 0.0) all_zero = false;
            worst_ratio = std::max(worst_ratio, prev == 0.0 ? (cur == 0.0 ? 0.0 : 1.0) : cur / prev);
        }
        if (all_zero) return {sum, err, true};
        if (worst_ratio < 0.9) {
            const double tail = std::abs(blocks.back()) * worst_ratio / (1.0 - worst_ratio);
            if (tail <= std::max(cfg.abs_tol, cfg.rel_tol * std::abs(sum))) return {sum + tail, err + tail, true};
        }
        // Block sums no longer shrinking: the integral is growing without bound.
        if (worst_ratio >= 0.95 && blocks.size() >= 16) {
            return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), false};
        }
    }
    return {sum, std::numeric_limits<double>::infinity(), false};
}

bool backward_cumulative(const ScalarFn& f, std::span<const double> points, const QuadratureConfig& cfg,
                         std::span<double> out) {
    require(out.size() == points.size(), "backward_cumulative: size mismatch");
    if (points.empty()) return true;
    bool ok = true;
    out.back() = 0.0;
    for (std::size_t i = points.size() - 1; i-- > 0;) {
        QuadResult r = integrate(f, points[i], points[i + 1], cfg);
        ok = ok && r.converged;
        out[i] = out[i + 1] + r.value;
    }
    return ok;
}

}  // namespace bsdecert
