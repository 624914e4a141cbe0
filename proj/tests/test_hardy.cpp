#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <relakernel/hardy.hpp>

using namespace relakernel;
using Catch::Approx;

namespace {

template <class F>
double simpson_log(F f, double lo, double hi, int n)
{
    if (n % 2) ++n;
    const double a = std::log(lo), b = std::log(hi), h = (b - a) / n;
    auto g = [&](double w) { const double s = std::exp(w); return f(s) * s; };
    double acc = g(a) + g(b);
    for (int i = 1; i < n; ++i) acc += g(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

} // namespace

TEST_CASE("kappa: closed form, reflection symmetry, maximum at the midpoint")
{
    CHECK(kappa(3, 1.0, 1.0) == Approx(2.0 / M_PI).epsilon(1e-12));
    CHECK(kappa(3, 1.0, 1.0) == Approx(0.6366198).epsilon(1e-6));

    // kappa_beta = kappa_{d - alpha - beta}
    CHECK(kappa(3, 1.0, 0.3) == Approx(kappa(3, 1.0, 1.7)).epsilon(1e-12));
    for (double beta : {0.1, 0.6, 0.95})
        CHECK(kappa(4, 0.7, beta) == Approx(kappa(4, 0.7, 3.3 - beta)).epsilon(1e-12));

    // maximized at beta = (d - alpha)/2
    const double mid = 1.0;
    double best_beta = 0.0, best = 0.0;
    for (double beta = 0.05; beta < 2.0; beta += 0.05) {
        const double k = kappa(3, 1.0, beta);
        if (k > best) { best = k; best_beta = beta; }
    }
    CHECK(best_beta == Approx(mid).margin(0.051));
    CHECK_THROWS_AS(kappa(3, 1.0, 2.5), std::domain_error);
    CHECK_THROWS_AS(kappa(3, 1.0, 0.0), std::domain_error);
}

TEST_CASE("companion_h: brute-force time-integral oracle")
{
    // h_beta(x) = Int_0^inf t^{(d-a-beta)/a} p(t,x,0) dt at |x| = 1
    const Model mod{3, 1.0, 1.0};
    const double beta = 1.0;
    const KernelTable table(mod, 1e-5, 70.0, 8.0);
    const double brute = simpson_log(
        [&](double t) { return std::pow(t, (mod.d - mod.alpha - beta) / mod.alpha) * table.p(t, 1.0); },
        1e-7, 70.0, 4000);
    CHECK(companion_h(mod, beta, 1.0) == Approx(brute).epsilon(1e-3));
}

TEST_CASE("companion_h: small-argument law, monotonicity, m-scaling")
{
    const Model mod{3, 1.0, 1.0};
    const double beta = 1.0, a = mod.alpha;

    const double prefactor = std::pow(2.0, 0.5 * beta + 1.0) * gamma_fn((mod.d - beta) / a)
        / (std::pow(4.0 * M_PI, 1.5) * gamma_fn(0.5 * (mod.d - beta)));
    const double lim = prefactor * std::pow(2.0, 0.5 * beta - 1.0) * gamma_fn(0.5 * beta);
    CHECK(companion_h(mod, beta, 1e-5) * std::pow(1e-5, beta) == Approx(lim).epsilon(1e-3));

    double prev = companion_h(mod, beta, 1e-3);
    for (double r : {1e-2, 0.1, 0.5, 1.0, 3.0, 10.0}) {
        const double v = companion_h(mod, beta, r);
        CHECK(v < prev);
        CHECK(v > 0.0);
        prev = v;
    }

    // h_beta(r) e^r r^{(beta+1)/2} bounded as r -> inf
    const double tail1 = companion_h(mod, beta, 20.0) * std::exp(20.0) * std::pow(20.0, 0.5 * (beta + 1.0));
    const double tail2 = companion_h(mod, beta, 60.0) * std::exp(60.0) * std::pow(60.0, 0.5 * (beta + 1.0));
    CHECK(tail2 == Approx(tail1).epsilon(5e-2));

    // h^m_beta(x) = m^{beta/a} h^1_beta(m^{1/a} x)
    const double m = 2.0;
    const Model modm{3, 1.0, m};
    for (double r : {0.3, 1.0, 4.0})
        CHECK(companion_h(modm, beta, r)
              == Approx(std::pow(m, beta / a) * companion_h(mod, beta, std::pow(m, 1.0 / a) * r))
                     .epsilon(1e-12));
}

TEST_CASE("companion_hbar: vanishing prefactor, positivity, ratio identity")
{
    const Model mod{3, 1.0, 1.0};
    CHECK(companion_hbar(mod, 2.0, 1.0) == 0.0); // beta = d - alpha

    for (double beta : {0.3, 1.0, 1.7})
        for (double r : {0.2, 1.0, 5.0})
            CHECK(companion_hbar(mod, beta, r) > 0.0);

    // hbar/h reproduces the potential pointwise (closed forms must cohere)
    for (double beta : {0.5, 1.0, 1.5})
        for (double r : {0.1, 0.7, 2.0, 10.0})
            CHECK(companion_hbar(mod, beta, r) / companion_h(mod, beta, r)
                  == Approx(potential_V(mod, beta, r)).epsilon(1e-8));
}

TEST_CASE("potential_V: fractional limit at zero and monotonicities")
{
    const Model mod{3, 1.0, 1.0};

    // V_beta / (kappa_beta r^{-a}) -> 1 as r -> 0
    CHECK(potential_V(mod, 1.0, 1e-3) / potential_fractional(mod, 1.0, 1e-3)
          == Approx(1.0).epsilon(5e-2));

    // ratio increasing in r, decreasing in beta; V itself strictly decreasing
    std::vector<double> rs, betas;
    for (int i = 0; i < 50; ++i) rs.push_back(1e-2 * std::pow(1e3, i / 49.0));
    for (int j = 0; j < 20; ++j) betas.push_back(0.05 + 1.9 * j / 19.0);

    for (double beta : betas) {
        double prev_ratio = 0.0, prev_V = 1e308;
        for (double r : rs) {
            const double V = potential_V(mod, beta, r);
            const double ratio = V / potential_fractional(mod, beta, r);
            CHECK(ratio > prev_ratio);
            CHECK(V < prev_V);
            prev_ratio = ratio;
            prev_V = V;
        }
    }
    for (double r : {0.05, 1.0, 20.0}) {
        double prev = 1e308;
        for (double beta : betas) {
            const double ratio = potential_V(mod, beta, r) / potential_fractional(mod, beta, r);
            CHECK(ratio < prev);
            prev = ratio;
        }
    }

    // m-scaling V^m_beta(x) = m V^1_beta(m^{1/a} x)
    const Model modm{3, 1.0, 2.0};
    for (double r : {0.3, 1.5})
        CHECK(potential_V(modm, 1.0, r)
              == Approx(2.0 * potential_V(mod, 1.0, std::pow(2.0, 1.0) * r)).epsilon(1e-12));
}

TEST_CASE("reflection: same kappa, smaller potential beyond the midpoint")
{
    const Model mod{3, 1.0, 1.0};
    for (double beta : {1.2, 1.5, 1.8}) {
        const double refl = 2.0 - beta;
        CHECK(kappa(3, 1.0, beta) == Approx(kappa(3, 1.0, refl)).epsilon(1e-12));
        for (double r : {0.05, 0.5, 2.0, 10.0})
            CHECK(potential_V(mod, beta, r) < potential_V(mod, refl, r));
    }
}

TEST_CASE("potential_diff: positivity and path agreement in the overlap window")
{
    const Model mod{3, 1.0, 1.0};
    for (double beta : {0.5, 1.0, 1.5})
        for (double r : {1e-3, 0.1, 1.0, 10.0})
            CHECK(potential_diff(mod, beta, r) > 0.0);

    // integral form vs direct subtraction on [0.05, 0.2]
    for (double beta : {0.5, 1.0, 1.5})
        for (double r : {0.05, 0.1, 0.2}) {
            const double via_integral = detail::potential_diff_integral(mod, beta, r);
            const double via_subtraction =
                potential_V(mod, beta, r) - potential_fractional(mod, beta, r);
            CHECK(via_integral == Approx(via_subtraction).epsilon(1e-6));
        }
}

TEST_CASE("potential_diff: three small-r regimes")
{
    // beta in (0,2): diff ~ r^{beta - alpha}
    {
        const Model mod{3, 1.0, 1.0};
        const double beta = 1.0;
        const double c1 = potential_diff(mod, beta, 1e-3) / std::pow(1e-3, beta - mod.alpha);
        const double c2 = potential_diff(mod, beta, 1e-4) / std::pow(1e-4, beta - mod.alpha);
        CHECK(c2 == Approx(c1).epsilon(0.2));
    }
    // beta = 2 (needs d - alpha > 2): diff ~ r^{2-alpha} log(1/r)
    {
        const Model mod{4, 1.0, 1.0};
        const double beta = 2.0;
        auto scaled = [&](double r) {
            return potential_diff(mod, beta, r) / (std::pow(r, 1.0) * std::log(1.0 / r));
        };
        CHECK(scaled(1e-4) == Approx(scaled(1e-3)).epsilon(0.2));
    }
    // beta > 2: diff ~ r^{2-alpha}
    {
        const Model mod{4, 1.0, 1.0};
        const double beta = 2.5;
        const double c1 = potential_diff(mod, beta, 1e-3) / 1e-3;
        const double c2 = potential_diff(mod, beta, 1e-4) / 1e-4;
        CHECK(c2 == Approx(c1).epsilon(0.2));
    }
}

TEST_CASE("potential_diff: uniform bound in beta on (0,1]")
{
    // sup over beta in [beta0, d-alpha) of diff(r) r^{alpha - beta0} stays
    // bounded and refinement-stable
    const Model mod{3, 1.0, 1.0};
    const double beta0 = 0.25;
    auto empirical_c = [&](int n_r) {
        double c = 0.0;
        for (double beta : {0.25, 0.5, 1.0, 1.5, 1.74})
            for (int i = 0; i < n_r; ++i) {
                const double r = 1e-3 * std::pow(1e3, double(i) / (n_r - 1));
                c = std::max(c, potential_diff(mod, beta, r) * std::pow(r, mod.alpha - beta0));
            }
        return c;
    };
    const double c1 = empirical_c(12), c2 = empirical_c(24);
    CHECK(std::isfinite(c2));
    CHECK(c2 == Approx(c1).epsilon(0.25));
}

TEST_CASE("potential_V_inverse: round trips, asymptote, R0")
{
    const Model mod{3, 1.0, 1.0};
    const double beta = 0.5;
    for (double v : {0.01, 1.0, 100.0}) {
        const double r = potential_V_inverse(mod, beta, v);
        CHECK(potential_V(mod, beta, r) == Approx(v).epsilon(1e-10));
    }
    // huge v: r ~ (kappa/v)^{1/alpha}
    const double v = 1e6;
    CHECK(potential_V_inverse(mod, beta, v)
          == Approx(std::pow(kappa(3, 1.0, beta) / v, 1.0)).epsilon(5e-2));

    // R0 = max(1, V^{-1}(1/(2T))) is computable at T = 1
    const double R0 = std::max(1.0, potential_V_inverse(mod, 0.5, 0.5));
    CHECK(R0 >= 1.0);
    CHECK(std::isfinite(R0));
}

TEST_CASE("profiles: closed values, reflection, comparability of H and H0")
{
    // both terms equal 1 when r = t^{1/alpha}
    CHECK(profile_H0(3, 1.0, 0.5, 0.37, 0.37) == Approx(2.0).epsilon(1e-13));

    // reflected exponent beyond the midpoint: delta = 1.5 > 1 uses 0.5
    const double t = 0.2, r = 3.0;
    CHECK(profile_H0(3, 1.0, 1.5, t, r)
          == Approx(1.0 + std::pow(t, 0.5) * std::pow(r, -0.5)).epsilon(1e-13));

    // H rejects delta beyond (d-alpha)/2 instead of silently reflecting
    CHECK_THROWS_AS(profile_H(3, 1.0, 1.5, 0.2, 1.0), std::domain_error);

    // H comparable to H0 with a stable empirical constant on (0,1] x (0,inf)
    auto bracket = [&](int n) {
        double lo = 1e308, hi = 0.0;
        for (int i = 0; i < n; ++i) {
            const double tt = 1e-3 * std::pow(1e3, double(i) / (n - 1));
            for (int j = 0; j < n; ++j) {
                const double rr = 1e-3 * std::pow(1e4, double(j) / (n - 1));
                const double q = profile_H(3, 1.0, 0.5, tt, rr) / profile_H0(3, 1.0, 0.5, tt, rr);
                lo = std::min(lo, q);
                hi = std::max(hi, q);
            }
        }
        return std::pair{lo, hi};
    };
    const auto [lo1, hi1] = bracket(14);
    const auto [lo2, hi2] = bracket(28);
    CHECK(lo2 > 0.0);
    CHECK(hi2 < 1e3);
    CHECK(lo2 == Approx(lo1).epsilon(0.1));
    CHECK(hi2 == Approx(hi1).epsilon(0.1));

    // profile values never drop below 1 and tend to 1 for far radii
    CHECK(profile_H(3, 1.0, 0.5, 0.25, 500.0) == Approx(1.0).epsilon(1e-6));
    CHECK(profile_H0(3, 1.0, 0.5, 0.25, 1e6) == Approx(1.0).epsilon(1e-2));
}

TEST_CASE("evaluate_potential: families and signed scaling")
{
    const Model mod{3, 1.0, 1.0};
    PotentialSpec q;
    q.model = mod;
    q.beta = 0.5;

    q.family = PotentialSpec::Family::relativistic;
    CHECK(evaluate_potential(q, 1.0) == Approx(potential_V(mod, 0.5, 1.0)));

    q.family = PotentialSpec::Family::fractional;
    CHECK(evaluate_potential(q, 1.0) == Approx(potential_fractional(mod, 0.5, 1.0)));

    q.family = PotentialSpec::Family::difference;
    CHECK(evaluate_potential(q, 1.0)
          == Approx(potential_V(mod, 0.5, 1.0) - potential_fractional(mod, 0.5, 1.0)).epsilon(1e-10));

    q.family = PotentialSpec::Family::relativistic;
    q.scale = -2.0;
    CHECK(evaluate_potential(q, 1.0) == Approx(-2.0 * potential_V(mod, 0.5, 1.0)));
    CHECK(!q.is_nonnegative());

    // relativistic strictly above fractional at matched parameters
    for (double r : {0.1, 1.0, 10.0})
        CHECK(potential_V(mod, 1.0, r) > potential_fractional(mod, 1.0, r));
}
