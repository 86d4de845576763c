#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace incdyn {

/// c3*x^3 + c2*x^2 + c1*x + c0.
struct CubicCoefficients {
    double c3 = 0.0;
    double c2 = 0.0;
    double c1 = 0.0;
    double c0 = 0.0;

    [[nodiscard]] double operator()(double x) const noexcept {
        return ((c3 * x + c2) * x + c1) * x + c0;
    }

    [[nodiscard]] double derivative(double x) const noexcept {
        return (3.0 * c3 * x + 2.0 * c2) * x + c1;
    }

    [[nodiscard]] bool is_zero() const noexcept {
        return c3 == 0.0 && c2 == 0.0 && c1 == 0.0 && c0 == 0.0;
    }
};

namespace detail {

inline double polish_root(const CubicCoefficients &p, double x) {
    double fx = p(x);
    for (int iter = 0; iter < 8 && fx != 0.0; ++iter) {
        const double d = p.derivative(x);
        if (d == 0.0 || !std::isfinite(d)) break;
        const double candidate = x - fx / d;
        const double fc = p(candidate);
        if (!(std::fabs(fc) < std::fabs(fx))) break;
        x = candidate;
        fx = fc;
    }
    return x;
}

inline std::vector<double> solve_quadratic(double a, double b, double c) {
    if (a == 0.0) {
        if (b == 0.0) return {};
        return {-c / b};
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return {};
    if (disc == 0.0) return {-b / (2.0 * a)};
    // Avoids cancellation between -b and sqrt(disc).
    const double t = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    double r1 = t / a;
    double r2 = c / t;
    if (r1 > r2) std::swap(r1, r2);
    return {r1, r2};
}

} // namespace detail

/// All distinct real roots in ascending order, Newton-polished.
///
/// Uses the depressed-cubic substitution x = t - a/3. One real root comes
/// from Cardano's formula; three real roots from the trigonometric form.
/// Leading zero coefficients fall back to quadratic or linear solves. The
/// zero polynomial has no isolated roots and returns an empty list.
inline std::vector<double> solve_cubic(const CubicCoefficients &c) {
    std::vector<double> roots;
    if (c.c3 == 0.0) {
        roots = detail::solve_quadratic(c.c2, c.c1, c.c0);
    } else {
        const double a = c.c2 / c.c3;
        const double b = c.c1 / c.c3;
        const double d = c.c0 / c.c3;
        const double shift = a / 3.0;
        const double p = b - a * a / 3.0;
        const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + d;
        const double half_q = 0.5 * q;
        const double third_p = p / 3.0;
        const double disc = half_q * half_q + third_p * third_p * third_p;

        const double disc_scale = half_q * half_q + std::fabs(third_p * third_p * third_p);
        if (p == 0.0 && q == 0.0) {
            roots.push_back(-shift);
        } else if (std::fabs(disc) <= 64.0 * std::numeric_limits<double>::epsilon() * disc_scale) {
            // Double root: t = 2u (simple) and t = -u (double), u = cbrt(-q/2).
            const double u = std::cbrt(-half_q);
            roots.push_back(2.0 * u - shift);
            roots.push_back(-u - shift);
        } else if (disc > 0.0) {
            const double u = std::cbrt(-half_q - std::copysign(std::sqrt(disc), half_q));
            const double t = (u == 0.0) ? 0.0 : u - third_p / u;
            roots.push_back(t - shift);
        } else {
            const double r = 2.0 * std::sqrt(-third_p);
            const double arg = std::clamp(3.0 * q / (2.0 * p) * std::sqrt(-3.0 / p), -1.0, 1.0);
            const double phi = std::acos(arg) / 3.0;
            constexpr double two_pi_3 = 2.0 * std::numbers::pi / 3.0;
            for (int k = 0; k < 3; ++k) roots.push_back(r * std::cos(phi - two_pi_3 * k) - shift);
        }
    }
    for (auto &r : roots) r = detail::polish_root(c, r);
    std::sort(roots.begin(), roots.end());
    // Polishing can merge the branches of a (near-)multiple root.
    auto close = [](double x, double y) { return std::fabs(x - y) <= 1e-9 * std::max(1.0, std::fabs(x)); };
    roots.erase(std::unique(roots.begin(), roots.end(), close), roots.end());
    return roots;
}

} // namespace incdyn
