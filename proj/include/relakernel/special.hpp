#ifndef RELAKERNEL_SPECIAL_HPP
#define RELAKERNEL_SPECIAL_HPP

// Gamma function, the modified Bessel function of the second kind K_nu and
// its derivative, and the Gauss-Weierstrass kernel.  These are the atoms of
// every closed-form expression in this library.
//
// K_nu is evaluated from its defining integral
//     K_nu(r) = 1/2 (r/2)^nu Int_0^inf u^(-nu-1) exp(-u - r^2/(4u)) du
// by trapezoid summation after u = exp(v), which turns the integrand into a
// bell shape with double-exponential tails; for r > 30 the large-argument
// asymptotic series takes over.  Everything is exposed in log scale as well
// so that values deep in the exponential tail stay usable.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "quad.hpp"

namespace relakernel {

namespace detail {

// sin(pi*x) with argument reduction done on x, not pi*x.
inline double sin_pi(double x)
{
    double r = std::fmod(x, 2.0);
    if (r < 0.0) r += 2.0;
    if (r < 0.5) return std::sin(M_PI * r);
    if (r < 1.5) return std::sin(M_PI * (1.0 - r)); // sin is symmetric about pi/2
    return -std::sin(M_PI * (2.0 - r));
}

inline constexpr double lanczos_g = 7.0;
inline constexpr double lanczos_c[9] = {
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
};

// Lanczos series A_g(z) for z >= 0.5.
inline double lanczos_sum(double z)
{
    double s = lanczos_c[0];
    for (int k = 1; k < 9; ++k) s += lanczos_c[k] / (z + k - 1.0);
    return s;
}

} // namespace detail

// Gamma function on the real line; poles at 0, -1, -2, ... raise.
inline double gamma_fn(double x)
{
    if (x <= 0.0 && x == std::floor(x))
        throw std::domain_error("gamma_fn: pole at non-positive integer");
    if (x < 0.5) {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return M_PI / (detail::sin_pi(x) * gamma_fn(1.0 - x));
    }
    const double z = x - 1.0;
    const double base = z + detail::lanczos_g + 0.5;
    return std::sqrt(2.0 * M_PI) * std::pow(base, z + 0.5) * std::exp(-base)
         * detail::lanczos_sum(z + 1.0);
}

// log |Gamma(x)|.
inline double log_gamma_abs(double x)
{
    if (x <= 0.0 && x == std::floor(x))
        throw std::domain_error("log_gamma_abs: pole at non-positive integer");
    if (x < 0.5)
        return std::log(M_PI) - std::log(std::abs(detail::sin_pi(x))) - log_gamma_abs(1.0 - x);
    const double z = x - 1.0;
    const double base = z + detail::lanczos_g + 0.5;
    return 0.5 * std::log(2.0 * M_PI) + (z + 0.5) * std::log(base) - base
         + std::log(detail::lanczos_sum(z + 1.0));
}

namespace detail {

// log of the integrand of the defining integral in v = log u:
//   l(v) = -nu v - e^v - (r^2/4) e^{-v}
// The peak solves e^{2v} + nu e^v - r^2/4 = 0.
inline double bessel_peak_v(double nu, double r)
{
    if (nu > 0.0 && r < 1e-6 * nu) return std::log(r * r / (4.0 * nu));
    const double w = 0.5 * (-nu + std::sqrt(nu * nu + r * r));
    return std::log(w);
}

// log K_nu(r) for r <= 30 through the defining integral.
inline double log_bessel_k_integral(double nu, double r)
{
    const double q = 0.25 * r * r;
    auto flog = [&](double v) { return -nu * v - std::exp(v) - q * std::exp(-v); };
    const double vp = bessel_peak_v(nu, r);
    const double log_int = integrate_bell_log(flog, vp, 1e-13, 0.5, 45.0);
    return -M_LN2 + nu * std::log(0.5 * r) + log_int;
}

// log K_nu(r) for large r from the asymptotic series
//   K_nu(r) ~ sqrt(pi/(2r)) e^{-r} [1 + (mu-1)/(8r) + ...],  mu = 4 nu^2.
inline double log_bessel_k_asymptotic(double nu, double r)
{
    const double mu = 4.0 * nu * nu;
    double term = 1.0, sum = 1.0, prev_abs = 1.0;
    for (int k = 1; k <= 60; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= (mu - odd * odd) / (k * 8.0 * r);
        if (std::abs(term) > prev_abs) break; // asymptotic divergence onset
        sum += term;
        prev_abs = std::abs(term);
        if (prev_abs < 1e-17 * std::abs(sum)) break;
    }
    return 0.5 * std::log(M_PI / (2.0 * r)) - r + std::log(sum);
}

} // namespace detail

// log K_nu(r); symmetric in the sign of nu.
inline double log_bessel_k(double nu, double r)
{
    if (!(r > 0.0)) throw std::domain_error("log_bessel_k: requires r > 0");
    nu = std::abs(nu);
    if (r > 30.0) return detail::log_bessel_k_asymptotic(nu, r);
    if (r < 1e-10) {
        // small-argument behaviour K_nu ~ (Gamma(nu)(r/2)^{-nu}
        // + Gamma(-nu)(r/2)^{nu})/2; relative error O(r^{2-2nu} + r^2)
        if (nu >= 0.9)
            return -M_LN2 + log_gamma_abs(nu) - nu * std::log(0.5 * r);
        if (nu >= 1e-8) {
            const double lead = log_gamma_abs(nu) - nu * std::log(0.5 * r);
            const double sub = log_gamma_abs(-nu) + nu * std::log(0.5 * r);
            return -M_LN2 + lead + std::log1p(-std::exp(sub - lead));
        }
        const double euler_gamma = 0.57721566490153286;
        return std::log(-std::log(0.5 * r) - euler_gamma);
    }
    return detail::log_bessel_k_integral(nu, r);
}

// K_nu(r).  Underflows to 0 for r beyond ~700.
inline double bessel_k(double nu, double r)
{
    const double l = log_bessel_k(nu, r);
    if (l < -745.0) return 0.0;
    return std::exp(l);
}

// Both recurrence representations of d/dr K_nu(r):
//   -K_{nu+1} + (nu/r) K_nu   and   -K_{nu-1} - (nu/r) K_nu.
struct BesselDerivPair {
    double via_upper;
    double via_lower;
};

inline BesselDerivPair bessel_k_dr_pair(double nu, double r)
{
    if (!(r > 0.0)) throw std::domain_error("bessel_k_dr: requires r > 0");
    const double k = bessel_k(nu, r);
    return { -bessel_k(nu + 1.0, r) + (nu / r) * k,
             -bessel_k(nu - 1.0, r) - (nu / r) * k };
}

inline double bessel_k_dr(double nu, double r)
{
    const BesselDerivPair p = bessel_k_dr_pair(nu, r);
    return 0.5 * (p.via_upper + p.via_lower);
}

// Gauss-Weierstrass kernel g_s at radius r in dimension d.
inline double log_gauss_kernel(double s, double r, int d)
{
    if (!(s > 0.0)) throw std::domain_error("gauss_kernel: requires s > 0");
    if (d < 1) throw std::domain_error("gauss_kernel: requires d >= 1");
    return -0.5 * d * std::log(4.0 * M_PI * s) - r * r / (4.0 * s);
}

inline double gauss_kernel(double s, double r, int d)
{
    return std::exp(log_gauss_kernel(s, r, d));
}

// Surface measure of the unit sphere S^{d-1}.
inline double sphere_surface(int d)
{
    return 2.0 * std::pow(M_PI, 0.5 * d) / gamma_fn(0.5 * d);
}

} // namespace relakernel

#endif
