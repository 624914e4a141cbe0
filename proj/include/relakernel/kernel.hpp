#ifndef RELAKERNEL_KERNEL_HPP
#define RELAKERNEL_KERNEL_HPP

// Heat kernel p^m of -(-Delta + m^{2/alpha})^{alpha/2} through two
// independent routes, the Levy density nu^m, a finite-difference time
// derivative, and a tabulated kernel for the integral-heavy callers.
//
// Route 1 (subordination):  p^m(t,x,y) = Int_0^inf g_s(x-y) e^{-m^{2/a} s}
// eta_t(s) ds, reduced to the standardized subordinator profile and
// integrated on a log axis around the integrand's peak.
//
// Route 2 (radial Fourier inversion): p^m(t,r) = (2pi)^{-d} Int e^{-i<z,.>}
// e^{-t psi(z)} dz collapsed to a 1-D oscillatory integral with kernel
// J_{d/2-1}; d in {1,3} use the sine/cosine closed forms, d in {2,4} use
// J_0/J_1.  The route reports non-convergence instead of returning garbage
// when cancellation wins; callers fall back to route 1.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "quad.hpp"
#include "special.hpp"
#include "subordinator.hpp"

namespace relakernel {

struct Model {
    int d = 3;        // space dimension
    double alpha = 1; // stability index, in (0, min(2,d))
    double m = 1;     // mass, >= 0

    // The kernel itself exists for any alpha in (0,2); the potential theory
    // additionally needs alpha < d, which the hardy layer enforces through
    // its beta-range checks.
    void validate() const
    {
        if (d < 1) throw std::domain_error("Model: d must be a positive integer");
        if (!(alpha > 0.0 && alpha < 2.0))
            throw std::domain_error("Model: alpha must lie in (0,2)");
        if (!(m >= 0.0)) throw std::domain_error("Model: m must be nonnegative");
    }

    // requirement of the potential/Hardy layer
    void validate_potential_domain() const
    {
        validate();
        if (!(alpha < double(d)))
            throw std::domain_error("Model: potential theory requires alpha < d");
    }

    // m^{2/alpha}, the shift inside the symbol
    double mass_shift() const { return m > 0.0 ? std::pow(m, 2.0 / alpha) : 0.0; }
};

// Symbol psi^m(|z|) = (|z|^2 + m^{2/alpha})^{alpha/2}; psi^m(0) = m.
inline double symbol_psi(const Model& mod, double rho)
{
    return std::pow(rho * rho + mod.mass_shift(), 0.5 * mod.alpha);
}

struct QuadValue {
    double value = 0.0;
    double log_value = -std::numeric_limits<double>::infinity();
    double rel_err = 0.0;
    bool converged = false;
};

// ---------------------------------------------------------------------------
// Subordination route
// ---------------------------------------------------------------------------

inline QuadValue heat_kernel_subord_full(const Model& mod, double t, double r,
                                         double rel_tol = 1e-9)
{
    mod.validate();
    if (!(t > 0.0)) throw std::domain_error("heat_kernel_subord: requires t > 0");
    if (!(r >= 0.0)) throw std::domain_error("heat_kernel_subord: requires r >= 0");

    const double a = 0.5 * mod.alpha;
    const double tpow = std::pow(t, 2.0 / mod.alpha);
    const double theta = mod.mass_shift() * tpow; // tempering rate in u
    const double xi2q = r * r / (4.0 * tpow);     // Gaussian exponent scale

    // log-integrand in v = log u of the standardized form
    //   p = t^{-d/alpha} Int (4 pi u)^{-d/2} e^{-xi^2/(4u)} e^{-theta u} g_a(u) du
    auto flog = [&](double v) {
        const double u = std::exp(v);
        const double lg = log_stable_density_std(a, u);
        if (!std::isfinite(lg)) return -std::numeric_limits<double>::infinity();
        return lg + v - 0.5 * mod.d * std::log(4.0 * M_PI * u) - xi2q / u - theta * u;
    };

    // coarse bracket of the peak, then golden refine
    double v_best = 0.0, f_best = -std::numeric_limits<double>::infinity();
    for (double v = -55.0; v <= 55.0; v += 1.0) {
        const double f = flog(v);
        if (f > f_best) { f_best = f; v_best = v; }
    }
    if (!std::isfinite(f_best)) {
        QuadValue q;
        q.converged = true; // genuine underflow, value is zero below the floor
        return q;
    }
    const double v_peak = golden_max(flog, v_best - 1.0, v_best + 1.0, 1e-8);

    double err = 0.0;
    const double log_int = integrate_bell_log(flog, v_peak, rel_tol, 0.5, 48.0, &err);

    QuadValue q;
    q.log_value = -double(mod.d) / mod.alpha * std::log(t) + log_int;
    q.value = q.log_value < -745.0 ? 0.0 : std::exp(q.log_value);
    q.rel_err = err;
    q.converged = err <= 100.0 * rel_tol;
    return q;
}

inline double heat_kernel_subord(const Model& mod, double t, double r)
{
    const QuadValue q = heat_kernel_subord_full(mod, t, r);
    if (!q.converged)
        throw QuadratureError("heat_kernel_subord: quadrature did not converge", q.rel_err);
    return q.value;
}

inline double log_heat_kernel_subord(const Model& mod, double t, double r)
{
    const QuadValue q = heat_kernel_subord_full(mod, t, r);
    if (!q.converged)
        throw QuadratureError("heat_kernel_subord: quadrature did not converge", q.rel_err);
    return q.log_value;
}

// ---------------------------------------------------------------------------
// Fourier route
// ---------------------------------------------------------------------------

namespace detail {

// J_0 / J_1: power series for x <= 12, Hankel asymptotics beyond.
inline double bessel_j01(int n, double x)
{
    x = std::abs(x); // J_0 even; J_1 odd but callers use x >= 0
    if (x <= 12.0) {
        const double q = 0.25 * x * x;
        double term = (n == 0) ? 1.0 : 0.5 * x;
        double sum = term;
        for (int k = 1; k <= 60; ++k) {
            term *= -q / (double(k) * double(k + n));
            sum += term;
            if (std::abs(term) < 1e-17 * (std::abs(sum) + 1e-30)) break;
        }
        return sum;
    }
    const double mu = 4.0 * n * n;
    double c = 1.0, P = 1.0, Q = 0.0;
    for (int j = 1; j <= 20; ++j) {
        const double odd = 2.0 * j - 1.0;
        c *= (mu - odd * odd) / (j * 8.0 * x);
        // P = 1 - c2 + c4 - ...,  Q = c1 - c3 + c5 - ...
        if (j % 2 == 1) Q += (j % 4 == 1 ? c : -c);
        else P += (j % 4 == 2 ? -c : c);
        if (std::abs(c) < 1e-16) break;
    }
    const double chi = x - (2.0 * n + 1.0) * M_PI / 4.0;
    return std::sqrt(2.0 / (M_PI * x)) * (P * std::cos(chi) - Q * std::sin(chi));
}

// Angular factor of the radial inversion integrand, including the power of
// rho and the overall constant, so that p = Int_0^inf e^{-t psi(rho)}
// angular(rho) drho.
inline double fourier_angular(int d, double rho, double r)
{
    switch (d) {
        case 1:
            return std::cos(rho * r) / M_PI;
        case 2:
            return rho * bessel_j01(0, rho * r) / (2.0 * M_PI);
        case 3:
            if (r == 0.0) return rho * rho / (2.0 * M_PI * M_PI);
            return rho * std::sin(rho * r) / (2.0 * M_PI * M_PI * r);
        case 4:
            if (r == 0.0) return rho * rho * rho / (8.0 * M_PI * M_PI);
            return rho * rho * bessel_j01(1, rho * r) / (4.0 * M_PI * M_PI * r);
        default:
            throw std::domain_error("heat_kernel_fourier: d in {1,2,3,4} only");
    }
}

} // namespace detail

inline QuadValue heat_kernel_fourier_full(const Model& mod, double t, double r,
                                          double rel_tol = 1e-7)
{
    mod.validate();
    if (!(t > 0.0)) throw std::domain_error("heat_kernel_fourier: requires t > 0");
    if (mod.d > 4) throw std::domain_error("heat_kernel_fourier: d in {1,2,3,4} only");

    // envelope cutoff: t psi(rho_max) = 48 + d log rho (safety for the rho^d factor)
    const double drop = 48.0 + 8.0;
    double rho_max = std::pow(std::max(drop / t, 1.0), 1.0 / mod.alpha);
    rho_max = std::max(rho_max, 10.0);

    // Panel edges limited by both the oscillation period and the local
    // envelope scale 1/(t alpha rho^{alpha-1}), which grows with rho for
    // alpha < 1; geometric widths track it.
    const double period = (r > 0.0) ? 2.0 * M_PI / r : std::numeric_limits<double>::infinity();
    const double rho_one = std::pow(std::max(1.0 / t, 1e-4), 1.0 / mod.alpha);
    std::vector<double> edges{0.0};
    {
        const std::size_t max_panels = 6u * 1000u * 1000u;
        double b = 0.0;
        while (b < rho_max) {
            const double w = std::min(period / 6.0, 0.25 * (b + rho_one));
            b = std::min(rho_max, b + w);
            edges.push_back(b);
            if (edges.size() > max_panels) {
                QuadValue q;
                q.rel_err = 1.0;
                q.converged = false;
                return q;
            }
        }
    }

    auto integrand = [&](double rho) {
        return std::exp(-t * symbol_psi(mod, rho)) * detail::fourier_angular(mod.d, rho, r);
    };
    auto sweep = [&](int splits, double& abs_sum) {
        double total = 0.0;
        abs_sum = 0.0;
        for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
            for (int j = 0; j < splits; ++j) {
                const double a = edges[k] + (edges[k + 1] - edges[k]) * j / splits;
                const double b = edges[k] + (edges[k + 1] - edges[k]) * (j + 1) / splits;
                const double v = integrate_gauss(integrand, a, b, 8);
                total += v;
                abs_sum += std::abs(v);
            }
        }
        return total;
    };

    double abs1 = 0.0, abs2 = 0.0;
    const double coarse = sweep(1, abs1);
    const double fine = sweep(2, abs2);
    const double cancel = 1e-16 * abs2;
    const double err = std::abs(fine - coarse) + cancel;

    QuadValue q;
    q.value = fine;
    q.log_value = fine > 0.0 ? std::log(fine) : -std::numeric_limits<double>::infinity();
    q.rel_err = err / std::max(std::abs(fine), 1e-300);
    q.converged = q.rel_err <= std::max(rel_tol * 30.0, 1e-10) || err < 1e-320;
    return q;
}

inline double heat_kernel_fourier(const Model& mod, double t, double r)
{
    const QuadValue q = heat_kernel_fourier_full(mod, t, r);
    if (!q.converged)
        throw QuadratureError("heat_kernel_fourier: oscillatory quadrature failed "
                              "(fall back to the subordination route)", q.rel_err);
    return q.value;
}

// ---------------------------------------------------------------------------
// Levy density
// ---------------------------------------------------------------------------

inline double log_levy_density(const Model& mod, double r)
{
    mod.validate();
    if (!(r > 0.0)) throw std::domain_error("levy_density: requires r > 0");
    const double d = mod.d, al = mod.alpha;
    // |Gamma(-alpha/2)| via reflection; Gamma is negative on (-1,0)
    const double log_abs_gamma_half = log_gamma_abs(-0.5 * al);
    if (mod.m == 0.0) {
        return al * M_LN2 + log_gamma_abs(0.5 * (d + al)) - 0.5 * d * std::log(M_PI)
             - log_abs_gamma_half - (d + al) * std::log(r);
    }
    const double z = std::pow(mod.m, 1.0 / al) * r;
    return (0.5 * (al - d) + 1.0) * M_LN2 - 0.5 * d * std::log(M_PI) - log_abs_gamma_half
         + (d + al) / al * std::log(mod.m) + log_bessel_k(0.5 * (d + al), z)
         - 0.5 * (d + al) * std::log(z);
}

inline double levy_density(const Model& mod, double r)
{
    const double l = log_levy_density(mod, r);
    return l < -745.0 ? 0.0 : std::exp(l);
}

// ---------------------------------------------------------------------------
// Time derivative (finite differences with error estimate)
// ---------------------------------------------------------------------------

struct DerivEstimate {
    double value;
    double err;
};

inline DerivEstimate kernel_time_derivative(const Model& mod, double t, double r)
{
    if (!(t > 0.0)) throw std::domain_error("kernel_time_derivative: requires t > 0");
    double h = std::max(1e-4, 1e-3 * t);
    if (t - 2.0 * h <= 0.0) h = 0.25 * t;
    const double pm2 = heat_kernel_subord(mod, t - 2.0 * h, r);
    const double pm1 = heat_kernel_subord(mod, t - h, r);
    const double pp1 = heat_kernel_subord(mod, t + h, r);
    const double pp2 = heat_kernel_subord(mod, t + 2.0 * h, r);
    const double d2 = (pp1 - pm1) / (2.0 * h);
    const double d4 = (pm2 - 8.0 * pm1 + 8.0 * pp1 - pp2) / (12.0 * h);
    return { d4, std::abs(d4 - d2) };
}

// ---------------------------------------------------------------------------
// Tabulated kernel: log p on a (log t, log-shifted scaled radius) grid
// ---------------------------------------------------------------------------

class KernelTable {
public:
    // Covers t in [t_min, t_max] and r in [0, r_max].  Below t_min the
    // lookup switches to the self-similar rescaling of the smallest-t row
    // and, beyond its radial reach, to the small-time limit t * nu(r).
    KernelTable(const Model& mod, double t_min, double t_max, double r_max,
                int pts_per_decade = 28)
        : mod_(mod), t_min_(t_min), t_max_(t_max), r_max_(r_max)
    {
        mod.validate();
        if (!(t_min > 0.0 && t_max > t_min)) throw std::invalid_argument("KernelTable: bad t range");
        if (!(r_max > 0.0)) throw std::invalid_argument("KernelTable: bad r_max");
        r_max *= 2.2; // radial reach covers convolution distances up to 2 r_max
        r_max_ = r_max;

        build_nu_profile();
        const double a = 0.5 * mod.alpha;

        // standardized subordinator weights on a fixed log-u grid
        const double v_lo = std::log(1e-12), v_hi = std::log(1e12);
        const int nv = int((v_hi - v_lo) / 0.065) + 1;
        const double hv = (v_hi - v_lo) / (nv - 1);
        std::vector<double> u(nv), log_ga(nv);
        for (int j = 0; j < nv; ++j) {
            const double v = v_lo + j * hv;
            u[j] = std::exp(v);
            log_ga[j] = log_stable_density_std(a, u[j]);
        }

        nt_ = int(std::ceil(std::log10(t_max / t_min) * pts_per_decade)) + 4;
        lt_lo_ = std::log(t_min);
        lt_hi_ = std::log(t_max);
        dlt_ = (lt_hi_ - lt_lo_) / (nt_ - 1);

        xi_max_ = r_max / std::pow(t_min, 1.0 / mod.alpha);
        w_lo_ = std::log(xi_shift_);
        w_hi_ = std::log(xi_shift_ + xi_max_ * 1.05);
        nw_ = int(std::ceil((w_hi_ - w_lo_) / (1.0 / pts_per_decade / M_LOG10E))) + 4;
        dw_ = (w_hi_ - w_lo_) / (nw_ - 1);

        // two ghost cells per side keep interpolation stencils full on the
        // whole queried domain
        lt_lo_ -= 2.0 * dlt_;
        nt_ += 4;
        w_lo_ -= 2.0 * dw_;
        nw_ += 4;

        data_.assign(std::size_t(nt_) * nw_, 0.0);
        std::vector<double> base(nv); // log of per-node weight without the Gaussian factor
        for (int i = 0; i < nt_; ++i) {
            const double t = std::exp(lt_lo_ + i * dlt_);
            const double theta = mod.mass_shift() * std::pow(t, 2.0 / mod.alpha);
            for (int j = 0; j < nv; ++j)
                base[j] = log_ga[j] + std::log(u[j]) - 0.5 * mod.d * std::log(4.0 * M_PI * u[j])
                        - theta * u[j];
            for (int k = 0; k < nw_; ++k) {
                const double xi = std::exp(w_lo_ + k * dw_) - xi_shift_;
                const double q = 0.25 * std::max(xi, 0.0) * std::max(xi, 0.0);
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < nv; ++j) {
                    const double e = base[j] - q / u[j];
                    if (e > mx) mx = e;
                }
                double s = 0.0;
                if (std::isfinite(mx))
                    for (int j = 0; j < nv; ++j) s += std::exp(base[j] - q / u[j] - mx);
                const double log_int = std::isfinite(mx)
                    ? mx + std::log(s * hv)
                    : -std::numeric_limits<double>::infinity();
                data_[std::size_t(i) * nw_ + k] =
                    -double(mod.d) / mod.alpha * std::log(t) + log_int;
            }
        }
    }

    const Model& model() const { return mod_; }
    double t_min() const { return t_min_; }
    double t_max() const { return t_max_; }
    double r_max() const { return r_max_; }

    double log_p(double t, double r) const
    {
        if (!(t > 0.0)) throw std::domain_error("KernelTable: requires t > 0");
        r = std::abs(r);
        if (t < t_min_) {
            // Below the table: rescale the smallest row while the equivalent
            // radius stays in the effectively massless region (there the
            // kernel is self-similar up to O(m t_min)); in the exponential
            // tail use the small-time limit t nu(r) instead.
            const double xi = r / std::pow(t, 1.0 / mod_.alpha);
            const double r_eq = xi * std::pow(t_min_, 1.0 / mod_.alpha);
            const double m_root = mod_.m > 0.0 ? std::pow(mod_.m, 1.0 / mod_.alpha) : 0.0;
            if (xi <= 0.8 * xi_max_ && m_root * r_eq <= 0.05) {
                return interp(t_min_, r_eq)
                     - double(mod_.d) / mod_.alpha * std::log(t / t_min_);
            }
            return std::log(t) + log_nu(r);
        }
        if (t > t_max_ * (1.0 + 1e-12))
            throw std::domain_error("KernelTable: t beyond tabulated range");
        return interp(std::min(t, t_max_), r);
    }

    double p(double t, double r) const
    {
        const double l = log_p(t, r);
        return l < -745.0 ? 0.0 : std::exp(l);
    }

    // interpolated log nu(r) used by the small-time fallback
    double log_nu(double r) const
    {
        const double lr = std::log(r);
        if (lr <= nu_lr_lo_)
            return nu_profile_(nu_lr_lo_) + nu_slope_lo_ * (lr - nu_lr_lo_);
        if (lr >= nu_lr_hi_)
            return nu_profile_(nu_lr_hi_) + nu_slope_hi_ * (lr - nu_lr_hi_);
        return nu_profile_(lr);
    }

private:
    void build_nu_profile()
    {
        const double lo = std::log(1e-9), hi = std::log(r_max_ + 50.0);
        const int n = 600;
        std::vector<double> xs(n), ys(n);
        for (int i = 0; i < n; ++i) {
            xs[i] = lo + (hi - lo) * i / (n - 1);
            ys[i] = log_levy_density(mod_, std::exp(xs[i]));
        }
        nu_lr_lo_ = xs.front();
        nu_lr_hi_ = xs.back();
        nu_slope_lo_ = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        nu_slope_hi_ = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
        nu_profile_.build(std::move(xs), std::move(ys));
    }

    // Catmull-Rom in both directions on (log t, w) with edge clamping.
    double interp(double t, double r) const
    {
        const double xi = r / std::pow(t, 1.0 / mod_.alpha);
        const double w = std::log(xi_shift_ + std::min(xi, xi_max_ * 1.049));
        const double ft = (std::log(t) - lt_lo_) / dlt_;
        const double fw = (w - w_lo_) / dw_;

        const int it = std::clamp(int(std::floor(ft)), 1, nt_ - 3);
        const int iw = std::clamp(int(std::floor(fw)), 1, nw_ - 3);
        const double st = std::clamp(ft - it, -1.0, 2.0);
        const double sw = std::clamp(fw - iw, -1.0, 2.0);

        double rows[4];
        for (int a = -1; a <= 2; ++a) {
            const double* row = &data_[std::size_t(it + a) * nw_];
            rows[a + 1] = catmull(row[iw - 1], row[iw], row[iw + 1], row[iw + 2], sw);
        }
        return catmull(rows[0], rows[1], rows[2], rows[3], st);
    }

    // 4-point Lagrange cubic on the cell between p0 and p1 (s in [0,1])
    static double catmull(double pm1, double p0, double p1, double p2, double s)
    {
        return pm1 * (-s * (s - 1.0) * (s - 2.0) / 6.0)
             + p0 * ((s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0)
             + p1 * (-(s + 1.0) * s * (s - 2.0) / 2.0)
             + p2 * ((s + 1.0) * s * (s - 1.0) / 6.0);
    }

    Model mod_;
    double t_min_, t_max_, r_max_;
    double lt_lo_ = 0, lt_hi_ = 0, dlt_ = 0;
    double w_lo_ = 0, w_hi_ = 0, dw_ = 0;
    double xi_max_ = 0;
    static constexpr double xi_shift_ = 0.05;
    int nt_ = 0, nw_ = 0;
    std::vector<double> data_;
    Pchip nu_profile_;
    double nu_lr_lo_ = 0, nu_lr_hi_ = 0, nu_slope_lo_ = 0, nu_slope_hi_ = 0;
};

} // namespace relakernel

#endif
