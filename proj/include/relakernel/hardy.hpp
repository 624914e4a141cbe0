#ifndef RELAKERNEL_HARDY_HPP
#define RELAKERNEL_HARDY_HPP

// Hardy-type companion functions and potentials:
//
//   h_beta(r)      companion profile  c r^{-beta/2} K_{beta/2}(r)  (m = 1),
//                  general m by  h^m_beta(x) = m^{beta/a} h^1_beta(m^{1/a} x)
//   hbar_beta      (d-a-beta)/a h_{beta+a}
//   V_beta         hbar/h, the critical potential of the relativistic
//                  operator; kappa_beta |x|^{-a} is its fractional analogue
//   potential_diff V_beta - kappa_beta r^{-a}, evaluated by direct
//                  subtraction away from zero and through an equivalent
//                  integral form near zero where the subtraction cancels
//   profiles       H0(t,x) = 1 + t^{de/a} |x|^{-de} (reflected exponent
//                  beyond (d-a)/2) and H(t,x) = 1 + h_delta(x)/h_delta(t^{1/a})

#include <cmath>
#include <stdexcept>

#include "kernel.hpp"
#include "quad.hpp"
#include "special.hpp"

namespace relakernel {

namespace detail {

// allowed beta window; the endpoints degenerate (Gamma poles)
inline void check_beta_potential(const Model& mod, double beta)
{
    mod.validate_potential_domain();
    const double hi = mod.d - mod.alpha;
    if (!(beta >= 1e-3 && beta <= hi - 1e-3))
        throw std::domain_error("beta must lie in [1e-3, d-alpha-1e-3]");
}

} // namespace detail

// Hardy constant of the fractional Laplacian,
// kappa_beta = 2^a Gamma((beta+a)/2) Gamma((d-beta)/2)
//            / (Gamma(beta/2) Gamma((d-beta-a)/2)).
inline double kappa(int d, double alpha, double beta)
{
    detail::check_beta_potential(Model{d, alpha, 1.0}, beta);
    return std::exp(alpha * M_LN2 + log_gamma_abs(0.5 * (beta + alpha))
                    + log_gamma_abs(0.5 * (d - beta)) - log_gamma_abs(0.5 * beta)
                    - log_gamma_abs(0.5 * (d - beta - alpha)));
}

// log companion function, beta in (0, d)
inline double log_companion_h(const Model& mod, double beta, double r)
{
    mod.validate_potential_domain();
    if (!(beta > 0.0 && beta < double(mod.d)))
        throw std::domain_error("companion_h: beta must lie in (0, d)");
    if (!(r > 0.0)) throw std::domain_error("companion_h: requires r > 0");
    if (!(mod.m > 0.0)) throw std::domain_error("companion_h: requires m > 0");

    const double a = mod.alpha;
    const double z = std::pow(mod.m, 1.0 / a) * r;
    const double log_prefactor = (0.5 * beta + 1.0) * M_LN2
        + log_gamma_abs((mod.d - beta) / a) - 0.5 * mod.d * std::log(4.0 * M_PI)
        - log_gamma_abs(0.5 * (mod.d - beta));
    return (beta / a) * std::log(mod.m) + log_prefactor - 0.5 * beta * std::log(z)
         + log_bessel_k(0.5 * beta, z);
}

inline double companion_h(const Model& mod, double beta, double r)
{
    const double l = log_companion_h(mod, beta, r);
    return l < -745.0 ? 0.0 : std::exp(l);
}

// hbar_beta = (d - a - beta)/a h_{beta+a}, beta in (-a, d-a)
inline double companion_hbar(const Model& mod, double beta, double r)
{
    mod.validate_potential_domain();
    if (!(beta > -mod.alpha && beta <= mod.d - mod.alpha))
        throw std::domain_error("companion_hbar: beta must lie in (-alpha, d-alpha]");
    const double factor = (mod.d - mod.alpha - beta) / mod.alpha;
    if (factor == 0.0) return 0.0;
    return factor * companion_h(mod, beta + mod.alpha, r);
}

// V^m_beta(r) = kappa_beta r^{-a} Gamma(beta/2)/Gamma((beta+a)/2)
//               K_{(beta+a)/2}(z)/K_{beta/2}(z) (z/2)^{a/2},  z = m^{1/a} r
inline double potential_V(const Model& mod, double beta, double r)
{
    detail::check_beta_potential(mod, beta);
    if (!(r > 0.0)) throw std::domain_error("potential_V: requires r > 0");
    if (!(mod.m > 0.0)) throw std::domain_error("potential_V: requires m > 0");
    const double a = mod.alpha;
    const double z = std::pow(mod.m, 1.0 / a) * r;
    const double log_k_ratio = log_bessel_k(0.5 * (beta + a), z) - log_bessel_k(0.5 * beta, z);
    return kappa(mod.d, a, beta) * std::pow(r, -a)
         * std::exp(log_gamma_abs(0.5 * beta) - log_gamma_abs(0.5 * (beta + a))
                    + log_k_ratio + 0.5 * a * std::log(0.5 * z));
}

// fractional Hardy potential kappa_beta |x|^{-a}
inline double potential_fractional(const Model& mod, double beta, double r)
{
    detail::check_beta_potential(mod, beta);
    if (!(r > 0.0)) throw std::domain_error("potential_fractional: requires r > 0");
    return kappa(mod.d, mod.alpha, beta) * std::pow(r, -mod.alpha);
}

namespace detail {

// integrand of the near-zero form of the difference (m = 1):
//   V_beta - kappa r^{-a} = kappa r^{-a} Int_0^r V_beta(s)/(kappa s^{-a})
//       [ K_{nu1-1}(s)/K_{nu1}(s) - K_{nu2-1}(s)/K_{nu2}(s) ] ds
// Everything is assembled in log scale: the bracket behaves like s^{beta-1}
// near zero, which overflows term by term long before the product does.
inline double potential_diff_integral(const Model& mod, double beta, double r)
{
    const double a = mod.alpha;
    const double nu1 = 0.5 * beta, nu2 = 0.5 * (beta + a);
    const double log_gamma_factor = log_gamma_abs(nu1) - log_gamma_abs(nu2);
    auto integrand_times_s = [&](double w) {
        const double s = std::exp(w);
        const double lk1 = log_bessel_k(nu1, s), lk2 = log_bessel_k(nu2, s);
        // V_beta(s)/(kappa s^{-a}) in logs
        const double log_vf = log_gamma_factor + lk2 - lk1 + 0.5 * a * std::log(0.5 * s);
        const double L1 = log_bessel_k(nu1 - 1.0, s) - lk1;
        const double L2 = log_bessel_k(nu2 - 1.0, s) - lk2;
        // nu -> K_{nu-1}/K_nu is decreasing, so L2 < L1 and the bracket is positive
        const double log_val = log_vf + L1 + std::log1p(-std::exp(std::min(L2 - L1, 0.0))) + w;
        return log_val < -700.0 ? 0.0 : std::exp(log_val);
    };
    const double w_hi = std::log(r);
    const double w_lo = w_hi - 60.0 / std::min(beta, 2.0);
    const int panels = std::max(30, int((w_hi - w_lo) / 2.0));
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double aa = w_lo + (w_hi - w_lo) * k / panels;
        const double bb = w_lo + (w_hi - w_lo) * (k + 1) / panels;
        total += integrate_gauss(integrand_times_s, aa, bb, 10);
    }
    return kappa(mod.d, a, beta) * std::pow(r, -a) * total;
}

} // namespace detail

// V^m_beta(r) - kappa_beta r^{-a}; strictly positive.  Direct subtraction
// loses all precision near zero (two diverging r^{-a} terms), so below
// z = 0.1 the integral form takes over; both paths agree on [0.05, 0.2].
inline double potential_diff(const Model& mod, double beta, double r)
{
    detail::check_beta_potential(mod, beta);
    if (!(r > 0.0)) throw std::domain_error("potential_diff: requires r > 0");
    if (!(mod.m > 0.0)) throw std::domain_error("potential_diff: requires m > 0");

    // reduce to m = 1:  diff^m(r) = m diff^1(m^{1/a} r)
    const double z = std::pow(mod.m, 1.0 / mod.alpha) * r;
    const Model unit{mod.d, mod.alpha, 1.0};
    double diff1;
    if (z >= 0.1) {
        diff1 = potential_V(unit, beta, z) - potential_fractional(unit, beta, z);
    } else {
        diff1 = detail::potential_diff_integral(unit, beta, z);
    }
    return mod.m * diff1;
}

// radial inverse of V_beta: the unique r with V_beta(r) = v
inline double potential_V_inverse(const Model& mod, double beta, double v)
{
    detail::check_beta_potential(mod, beta);
    if (!(v > 0.0)) throw std::domain_error("potential_V_inverse: requires v > 0");
    double lo = 1e-12, hi = 1e12;
    auto f = [&](double lr) { return potential_V(mod, beta, std::exp(lr)) - v; };
    double flo = f(std::log(lo));
    double fhi = f(std::log(hi));
    if (flo < 0.0 || fhi > 0.0)
        throw std::domain_error("potential_V_inverse: value out of reachable range");
    const double lr = brent_root(f, std::log(lo), std::log(hi), 1e-13);
    return std::exp(lr);
}

// H0(t,x) = 1 + t^{de/a} |x|^{-de}, with the reflected exponent
// de = d - a - delta when delta exceeds (d-a)/2.
inline double profile_H0(int d, double alpha, double delta, double t, double r)
{
    Model{d, alpha, 1.0}.validate_potential_domain();
    if (!(delta > 0.0 && delta < d - alpha))
        throw std::domain_error("profile_H0: delta must lie in (0, d-alpha)");
    if (!(t > 0.0 && r > 0.0)) throw std::domain_error("profile_H0: requires t, r > 0");
    const double de = std::min(delta, d - alpha - delta);
    return 1.0 + std::pow(t, de / alpha) * std::pow(r, -de);
}

// H(t,x) = 1 + h_delta(x)/h_delta(t^{1/a});  the equality-level theory
// behind it assumes delta <= (d-a)/2, so larger delta is rejected rather
// than silently reflected.
inline double profile_H(int d, double alpha, double delta, double t, double r)
{
    Model mod{d, alpha, 1.0};
    mod.validate_potential_domain();
    if (!(delta > 0.0 && delta <= 0.5 * (d - alpha)))
        throw std::domain_error("profile_H: delta must lie in (0, (d-alpha)/2]");
    if (!(t > 0.0 && r > 0.0)) throw std::domain_error("profile_H: requires t, r > 0");
    return 1.0 + std::exp(log_companion_h(mod, delta, r)
                          - log_companion_h(mod, delta, std::pow(t, 1.0 / alpha)));
}

// ---------------------------------------------------------------------------
// Potential selection used by the perturbation layer
// ---------------------------------------------------------------------------

struct PotentialSpec {
    enum class Family { relativistic, fractional, difference };

    Family family = Family::relativistic;
    double beta = 0.5;
    Model model{};
    double scale = 1.0; // scalar multiplier; may be negative (signed q)

    void validate() const
    {
        detail::check_beta_potential(model, beta);
        if (family != Family::fractional && !(model.m > 0.0))
            throw std::domain_error("PotentialSpec: this family requires m > 0");
    }

    bool is_zero() const { return scale == 0.0; }
    bool is_nonnegative() const { return scale >= 0.0; }
};

inline double evaluate_potential(const PotentialSpec& q, double r)
{
    if (q.scale == 0.0) return 0.0;
    switch (q.family) {
        case PotentialSpec::Family::relativistic:
            return q.scale * potential_V(q.model, q.beta, r);
        case PotentialSpec::Family::fractional:
            return q.scale * potential_fractional(q.model, q.beta, r);
        case PotentialSpec::Family::difference:
            return q.scale * potential_diff(q.model, q.beta, r);
    }
    throw std::logic_error("evaluate_potential: unknown family");
}

} // namespace relakernel

#endif
