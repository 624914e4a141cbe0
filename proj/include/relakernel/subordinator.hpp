#ifndef RELAKERNEL_SUBORDINATOR_HPP
#define RELAKERNEL_SUBORDINATOR_HPP

// Density eta_t(s) of the alpha/2-stable subordinator, its tempered version
// e^{-m^(2/alpha) s} eta_t(s), the Laplace exponent phi^m and the Levy
// measure Pi of the subordinator.
//
// The density has no elementary closed form for general alpha, so the
// standardized profile (time t = 1 marginal rescaled to Laplace transform
// e^{-lambda^a}, a = alpha/2) is evaluated through Zolotarev's single
// integral over an angle:
//
//   g_a(x) = a/(1-a) 1/pi x^{-1/(1-a)}
//            Int_0^pi A(v) exp( -x^{-a/(1-a)} A(v) ) dv ,
//   A(v)   = [sin(a v)/sin v]^{a/(1-a)} sin((1-a) v)/sin v .
//
// The integrand is positive and unimodal; A is increasing from
// a^{a/(1-a)}(1-a) to infinity, so the peak splits the interval in two
// monotone halves that tanh-sinh handles well.  Values are memoized because
// the kernel module integrates against eta millions of times.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <shared_mutex>
#include <stdexcept>
#include <unordered_map>

#include "quad.hpp"
#include "special.hpp"

namespace relakernel {

struct SubordinatorParams {
    double alpha; // stability index of the process, in (0,2)
    double t;     // time, > 0
    double m;     // tempering mass, >= 0

    void validate() const
    {
        if (!(alpha > 0.0 && alpha < 2.0))
            throw std::domain_error("SubordinatorParams: alpha must lie in (0,2)");
        if (!(t > 0.0)) throw std::domain_error("SubordinatorParams: t must be positive");
        if (!(m >= 0.0)) throw std::domain_error("SubordinatorParams: m must be nonnegative");
    }
};

namespace detail {

// log A(v) for the Zolotarev integrand.
inline double zolotarev_log_A(double a, double v)
{
    const double s = a / (1.0 - a);
    return s * (std::log(std::sin(a * v)) - std::log(std::sin(v)))
         + std::log(std::sin((1.0 - a) * v)) - std::log(std::sin(v));
}

// Convergent large-x expansion (Bergstroem series)
//   g_a(x) = 1/pi Sum_{k>=1} (-1)^{k+1} Gamma(k a + 1)/k! sin(pi k a) x^{-k a - 1}.
// Returns NaN when 120 terms are not enough (small x).
inline double log_stable_density_tail_series(double a, double x)
{
    const double lx = std::log(x);
    const double lead = log_gamma_abs(a + 1.0) - (a + 1.0) * lx; // scale of the first term
    double sum = 0.0;
    double prev_mag = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 120; ++k) {
        const double mag = log_gamma_abs(k * a + 1.0) - log_gamma_abs(k + 1.0)
                         - (k * a + 1.0) * lx - lead;
        if (mag > 6.0) return std::numeric_limits<double>::quiet_NaN(); // cancellation risk
        const double term = ((k % 2) ? 1.0 : -1.0) * sin_pi(k * a) * std::exp(mag);
        sum += term;
        if (std::exp(mag) < 1e-17 * std::abs(sum) && std::exp(mag) < prev_mag)
            return lead + std::log(sum / M_PI);
        prev_mag = std::exp(mag);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

// log g_a(x) for the standardized one-sided a-stable density.
inline double log_stable_density_std_impl(double a, double x)
{
    if (x >= 2.5) {
        const double series = log_stable_density_tail_series(a, x);
        if (std::isfinite(series)) return series;
    }

    const double s = a / (1.0 - a);
    const double c = std::pow(x, -s); // multiplier of A inside the exponential
    const double eps = 1e-12;
    const double logA0 = zolotarev_log_A(a, eps);
    const double log_c = std::log(c);

    // peak of B - c e^B over v, where B = log A
    double v_peak = eps;
    if (-log_c > logA0) {
        const double right = M_PI - 1e-12;
        if (zolotarev_log_A(a, right) + log_c <= 0.0) {
            v_peak = right; // peak pushed onto the boundary (huge x)
        } else {
            // solve B(v) = -log c; B is increasing
            v_peak = brent_root([&](double v) { return zolotarev_log_A(a, v) + log_c; },
                                eps, right, 1e-12);
        }
    }
    auto h = [&](double v) {
        const double B = zolotarev_log_A(a, v);
        return B - c * std::exp(B);
    };
    const double h_peak = h(v_peak);
    if (h_peak < -745.0) return -std::numeric_limits<double>::infinity();

    auto f = [&](double v) { return std::exp(h(v) - h_peak); };
    double integral = 0.0;
    if (v_peak > 2.0 * eps)
        integral += integrate_tanh_sinh(f, eps, v_peak, 1e-12);
    integral += integrate_tanh_sinh(f, v_peak, M_PI - 1e-12, 1e-12);

    return std::log(s) - std::log(M_PI) - (1.0 + s) * std::log(x) + h_peak
         + std::log(integral);
}

// Read-mostly memo table keyed by the exact bit patterns of (a, x).
class StableDensityCache {
public:
    double log_density(double a, double x)
    {
        const Key key = make_key(a, x);
        {
            std::shared_lock lock(mutex_);
            auto it = map_.find(key);
            if (it != map_.end()) return it->second;
        }
        const double value = log_stable_density_std_impl(a, x);
        std::unique_lock lock(mutex_);
        map_.emplace(key, value);
        return value;
    }

    static StableDensityCache& instance()
    {
        static StableDensityCache cache;
        return cache;
    }

private:
    struct Key {
        std::uint64_t a_bits, x_bits;
        bool operator==(const Key& o) const { return a_bits == o.a_bits && x_bits == o.x_bits; }
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const
        {
            std::uint64_t h = k.a_bits * 0x9e3779b97f4a7c15ull;
            h ^= k.x_bits + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            return std::size_t(h);
        }
    };
    static Key make_key(double a, double x)
    {
        Key k;
        std::memcpy(&k.a_bits, &a, 8);
        std::memcpy(&k.x_bits, &x, 8);
        return k;
    }

    std::shared_mutex mutex_;
    std::unordered_map<Key, double, KeyHash> map_;
};

} // namespace detail

// log of the standardized one-sided a-stable density (Laplace e^{-lambda^a}).
inline double log_stable_density_std(double a, double x)
{
    if (!(a > 0.0 && a < 1.0))
        throw std::domain_error("stable_density_std: index must lie in (0,1)");
    if (!(x > 0.0)) throw std::domain_error("stable_density_std: requires x > 0");
    return detail::StableDensityCache::instance().log_density(a, x);
}

inline double stable_density_std(double a, double x)
{
    const double l = log_stable_density_std(a, x);
    return l < -745.0 ? 0.0 : std::exp(l);
}

// eta_t(s): density of the alpha/2-stable subordinator at time t.
// Scaling: eta_t(s) = t^{-2/alpha} g_{alpha/2}(t^{-2/alpha} s).
inline double log_eta(double alpha, double t, double s)
{
    SubordinatorParams{alpha, t, 0.0}.validate();
    if (!(s > 0.0)) throw std::domain_error("eta: requires s > 0");
    const double scale = std::pow(t, -2.0 / alpha);
    return std::log(scale) + log_stable_density_std(0.5 * alpha, scale * s);
}

inline double eta(double alpha, double t, double s)
{
    const double l = log_eta(alpha, t, s);
    return l < -745.0 ? 0.0 : std::exp(l);
}

inline double eta(const SubordinatorParams& p, double s) { return eta(p.alpha, p.t, s); }

// e^{-m^{2/alpha} s} eta_t(s); integrates to e^{-t m}.
inline double log_tempered_eta(double alpha, double m, double t, double s)
{
    SubordinatorParams{alpha, t, m}.validate();
    if (!(s > 0.0)) throw std::domain_error("tempered_eta: requires s > 0");
    const double temper = (m > 0.0) ? std::pow(m, 2.0 / alpha) * s : 0.0;
    return log_eta(alpha, t, s) - temper;
}

inline double tempered_eta(double alpha, double m, double t, double s)
{
    const double l = log_tempered_eta(alpha, m, t, s);
    return l < -745.0 ? 0.0 : std::exp(l);
}

inline double tempered_eta(const SubordinatorParams& p, double s)
{
    return tempered_eta(p.alpha, p.m, p.t, s);
}

// Laplace exponent phi^m(lambda) = (lambda + m^{2/alpha})^{alpha/2}.
inline double phi(double alpha, double m, double lambda)
{
    if (!(alpha > 0.0 && alpha < 2.0)) throw std::domain_error("phi: alpha must lie in (0,2)");
    if (!(lambda >= 0.0)) throw std::domain_error("phi: requires lambda >= 0");
    if (!(m >= 0.0)) throw std::domain_error("phi: requires m >= 0");
    const double shift = (m > 0.0) ? std::pow(m, 2.0 / alpha) : 0.0;
    return std::pow(lambda + shift, 0.5 * alpha);
}

// Density of the subordinator Levy measure Pi(ds).
inline double levy_Pi_density(double alpha, double s)
{
    if (!(alpha > 0.0 && alpha < 2.0))
        throw std::domain_error("levy_Pi_density: alpha must lie in (0,2)");
    if (!(s > 0.0)) throw std::domain_error("levy_Pi_density: requires s > 0");
    const double a = 0.5 * alpha;
    return a / gamma_fn(1.0 - a) * std::pow(s, -1.0 - a);
}

} // namespace relakernel

#endif
