#ifndef RELAKERNEL_QUAD_HPP
#define RELAKERNEL_QUAD_HPP

// 1-D quadrature and interpolation toolbox shared by all modules:
// Gauss-Legendre rules, tanh-sinh for endpoint singularities, a trapezoid
// integrator for bell-shaped integrands on the whole line, Brent root
// finding and monotone cubic (Fritsch-Carlson) interpolation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace relakernel {

struct QuadratureError : std::runtime_error {
    double achieved_error;
    explicit QuadratureError(const std::string& what, double err)
        : std::runtime_error(what), achieved_error(err) {}
};

struct GaussRule {
    std::vector<double> x; // nodes on [-1,1]
    std::vector<double> w;
};

// Nodes by Newton iteration on P_n; cached per order.
inline const GaussRule& gauss_legendre(int n)
{
    static std::map<int, GaussRule> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    GaussRule rule;
    rule.x.resize(n);
    rule.w.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        rule.x[i] = -z;
        rule.x[n - 1 - i] = z;
        rule.w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        rule.w[n - 1 - i] = rule.w[i];
    }
    return cache.emplace(n, std::move(rule)).first->second;
}

// Fixed-order Gauss on [a,b].
template <class F>
double integrate_gauss(F&& f, double a, double b, int n)
{
    const GaussRule& g = gauss_legendre(n);
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += g.w[i] * f(c + h * g.x[i]);
    return s * h;
}

// tanh-sinh on (a,b); tolerates integrable endpoint singularities.
// Returns the integral; *err_out (optional) receives the last level change.
template <class F>
double integrate_tanh_sinh(F&& f, double a, double b, double rel_tol = 1e-12,
                           int max_level = 11, double* err_out = nullptr)
{
    const double c = 0.5 * (a + b), h0 = 0.5 * (b - a);
    const double tmax = 3.8; // |x-endpoint| ~ exp(-pi/2*sinh(3.8)) ~ 1e-15
    auto sample = [&](double t) {
        const double u = 0.5 * M_PI * std::sinh(t);
        const double ch = std::cosh(u);
        const double x = std::tanh(u);
        const double w = 0.5 * M_PI * std::cosh(t) / (ch * ch);
        double v = 0.0;
        const double xp = c + h0 * x, xm = c - h0 * x;
        if (xp > a && xp < b) v += f(xp);
        if (t > 0.0 && xm > a && xm < b) v += f(xm);
        return w * v;
    };
    double h = 1.0;
    double raw = sample(0.0); // running sum of w(t_k) f(x_k) at spacing h
    for (double t = h; t <= tmax; t += h) raw += sample(t);
    double prev = raw * h * h0, change = std::abs(prev);
    for (int level = 1; level <= max_level; ++level) {
        h *= 0.5;
        for (double t = h; t <= tmax; t += 2.0 * h) raw += sample(t);
        const double cur = raw * h * h0;
        change = std::abs(cur - prev);
        prev = cur;
        if (change <= rel_tol * std::max(std::abs(cur), 1e-300)) break;
    }
    if (err_out) *err_out = change;
    return prev;
}

// Trapezoid over the real line for a bell-shaped positive integrand given in
// log scale.  Starts from a peak location, walks outward until the integrand
// drops by `log_drop`, then refines the step until the relative change is
// below rel_tol.  Returns log of the integral.
template <class FLog>
double integrate_bell_log(FLog&& flog, double v_peak, double rel_tol = 1e-11,
                          double h0 = 0.5, double log_drop = 45.0,
                          double* err_out = nullptr)
{
    const double lmax = flog(v_peak);
    auto sum_at = [&](double h) {
        double s = 1.0; // exp(lmax - lmax)
        for (int side = -1; side <= 1; side += 2) {
            int k = 1;
            while (true) {
                double l = flog(v_peak + side * k * h) - lmax;
                if (l > -log_drop) {
                    s += std::exp(l);
                } else if (l < -log_drop) {
                    // allow a short plateau below threshold before stopping
                    double l2 = flog(v_peak + side * (k + 1) * h) - lmax;
                    if (l2 < l || l2 < -log_drop) break;
                    s += std::exp(l);
                }
                ++k;
                if (k > 200000) break;
            }
        }
        return s;
    };
    double h = h0;
    double prev = sum_at(h) * h;
    double change = prev;
    double prev_change = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 14; ++it) {
        h *= 0.5;
        double cur = sum_at(h) * h;
        change = std::abs(cur - prev);
        prev = cur;
        if (change <= rel_tol * cur) break;
        if (it >= 3 && change >= 0.25 * prev_change) break; // noise floor reached
        prev_change = change;
    }
    if (err_out) *err_out = change / prev;
    return lmax + std::log(prev);
}

// Classic Brent root bracketing solver on [a,b] with f(a)*f(b) <= 0.
template <class F>
double brent_root(F&& f, double a, double b, double xtol = 1e-14, int max_iter = 200)
{
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if (fa * fb > 0.0) throw std::invalid_argument("brent_root: no sign change in bracket");
    double c = a, fc = fa, d = b - a, e = d;
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol1 = 2.0 * 1e-16 * std::abs(b) + 0.5 * xtol;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double s = fb / fa, p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                double qq = fa / fc, r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
        fb = f(b);
        if ((fb > 0) == (fc > 0)) {
            c = a; fc = fa; d = b - a; e = d;
        }
    }
    return b;
}

// Golden-section maximum of a unimodal function.
template <class F>
double golden_max(F&& f, double a, double b, double xtol = 1e-10)
{
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > xtol * (1.0 + std::abs(a) + std::abs(b))) {
        if (f1 < f2) {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        } else {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

// Monotone cubic interpolation (Fritsch-Carlson).  Clamps outside the grid.
class Pchip {
public:
    Pchip() = default;
    Pchip(std::vector<double> xs, std::vector<double> ys) { build(std::move(xs), std::move(ys)); }

    void build(std::vector<double> xs, std::vector<double> ys)
    {
        x_ = std::move(xs);
        y_ = std::move(ys);
        const std::size_t n = x_.size();
        if (n < 2 || y_.size() != n) throw std::invalid_argument("Pchip: bad grid");
        m_.assign(n, 0.0);
        std::vector<double> d(n - 1), h(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = x_[i + 1] - x_[i];
            d[i] = (y_[i + 1] - y_[i]) / h[i];
        }
        m_[0] = d[0];
        m_[n - 1] = d[n - 2];
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (d[i - 1] * d[i] <= 0.0) {
                m_[i] = 0.0;
            } else {
                double w1 = 2.0 * h[i] + h[i - 1];
                double w2 = h[i] + 2.0 * h[i - 1];
                m_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
            }
        }
    }

    double operator()(double x) const
    {
        const std::size_t n = x_.size();
        if (x <= x_.front()) return y_.front();
        if (x >= x_.back()) return y_.back();
        std::size_t i = std::upper_bound(x_.begin(), x_.end(), x) - x_.begin() - 1;
        const double h = x_[i + 1] - x_[i];
        const double t = (x - x_[i]) / h;
        const double t2 = t * t, t3 = t2 * t;
        return y_[i] * (2 * t3 - 3 * t2 + 1) + h * m_[i] * (t3 - 2 * t2 + t)
             + y_[i + 1] * (-2 * t3 + 3 * t2) + h * m_[i + 1] * (t3 - t2);
    }

    bool empty() const { return x_.empty(); }

private:
    std::vector<double> x_, y_, m_;
};

// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b)
{
    if (a < b) std::swap(a, b);
    if (b == -std::numeric_limits<double>::infinity()) return a;
    return a + std::log1p(std::exp(b - a));
}

} // namespace relakernel

#endif
