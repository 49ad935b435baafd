#include "homduet/error.hpp"
#include "homduet/sources.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace homduet;
using namespace homduet::sources;

namespace {

// Heralded autocorrelation of a two-mode squeezed vacuum by direct
// enumeration. A weak, non-resolving herald selects the signal number n with
// weight n P(n), P(n) = (1 - p) p^n.
double tmsv_heralded_g2(double p, int n_max)
{
    double s1 = 0.0;
    double s2 = 0.0;
    double norm = 0.0;
    for (int n = 1; n <= n_max; ++n) {
        const double w = n * (1.0 - p) * std::pow(p, n);
        norm += w;
        s1 += w * n;
        s2 += w * n * (n - 1);
    }
    const double mean = s1 / norm;
    return (s2 / norm) / (mean * mean);
}

}  // namespace

TEST_CASE("sources: number stats invariants")
{
    CHECK_THROWS_AS(NumberStats(-0.1, 0.0), ConfigError);
    CHECK_THROWS_AS(NumberStats(0.8, 0.3), ConfigError);
    CHECK_NOTHROW(NumberStats(0.5, 0.5));
    const auto s = NumberStats::from_g2(0.028, 0.13);
    CHECK(s.p2 == doctest::Approx(0.13 * 0.028 * 0.028 / 2.0));
    CHECK(s.g2() == doctest::Approx(0.13));
}

TEST_CASE("sources: heralded g2 law and its inverse")
{
    CHECK(dlcz_heralded_g2(0.0) == 0.0);
    CHECK(dlcz_heralded_g2(0.05) == doctest::Approx(4 * 0.05 / (1.05 * 1.05)));
    for (double g : {0.01, 0.13, 0.3, 0.5}) {
        CHECK(dlcz_heralded_g2(dlcz_excitation_for_g2(g)) == doctest::Approx(g).epsilon(1e-10));
    }
    double prev = -1.0;
    for (double p = 0.001; p <= 0.25; p += 0.001) {
        const double g = dlcz_heralded_g2(p);
        REQUIRE(g > prev);
        prev = g;
    }
    CHECK_THROWS_AS(dlcz_excitation_for_g2(0.9), ConfigError);
}

TEST_CASE("sources: heralded g2 agrees with number-state enumeration at small p")
{
    // The closed form is the leading behaviour of the enumeration; they agree
    // to a few percent over the operating range.
    for (double p : {0.005, 0.02, 0.05}) {
        const double oracle = tmsv_heralded_g2(p, 4);
        CHECK(dlcz_heralded_g2(p) == doctest::Approx(oracle).epsilon(0.05));
    }
    CHECK(tmsv_heralded_g2(0.05, 4) == doctest::Approx(0.1855).epsilon(2e-3));
}

TEST_CASE("sources: dlcz number stats at the operating point")
{
    DlczConfig cfg;
    cfg.excitation_p = dlcz_excitation_for_g2(0.13);
    const auto s = dlcz_number_stats(cfg);
    CHECK(s.p1 == doctest::Approx(0.028));
    CHECK(s.p2 == doctest::Approx(5.1e-5).epsilon(0.03));
    cfg.excitation_p = 0.3;
    CHECK_THROWS_AS(dlcz_number_stats(cfg), ConfigError);
}

TEST_CASE("sources: sampled photon counts reproduce g2 within binomial error")
{
    const auto s = NumberStats::from_g2(0.3, 0.13);
    Rng rng(11);
    const int n = 1000000;
    double n1 = 0;
    double n2 = 0;
    for (int i = 0; i < n; ++i) {
        const int k = sample_photon_count(s, rng);
        n1 += k == 1;
        n2 += k == 2;
    }
    const double p1 = n1 / n;
    const double p2 = n2 / n;
    const double g2 = 2 * p2 / (p1 * p1);
    const double err = g2 * std::sqrt(1.0 / n2 + 4.0 / n1);
    CHECK(std::abs(g2 - 0.13) < 3 * err);
}

TEST_CASE("sources: blockade radius")
{
    RydbergConfig cfg;
    CHECK(blockade_radius(cfg) == doctest::Approx(15.5).epsilon(5e-3));
    const auto r89 = rescale_to_level(cfg, 89);
    CHECK(blockade_radius(r89) == doctest::Approx(15.5 * std::pow(89.0 / 103.0, 7.0 / 3.0)).epsilon(5e-3));
    CHECK(blockade_radius(r89) == doctest::Approx(11.0).epsilon(0.02));

    RydbergConfig unit = cfg;
    unit.c6_mhz_um6 = 1.0;
    unit.gamma_mhz = 1.0;
    unit.omega_c_mhz = 1.0;
    CHECK(blockade_radius(unit) == doctest::Approx(1.0));
    unit.omega_c_mhz = 8.0;
    CHECK(blockade_radius(unit) == doctest::Approx(0.5));
    RydbergConfig scaled = cfg;
    scaled.c6_mhz_um6 *= std::pow(1.7, 6);
    CHECK(blockade_radius(scaled) == doctest::Approx(1.7 * blockade_radius(cfg)).epsilon(1e-12));
    unit.gamma_mhz = 0.0;
    CHECK_THROWS_AS(blockade_radius(unit), ConfigError);
}

TEST_CASE("sources: rydberg model monotonicity")
{
    RydbergConfig cfg;
    cfg.purity_weight = 0.4;
    cfg.g2_slope = 0.02;
    const auto at0 = rydberg_models(cfg, 0.0);
    CHECK(at0.purity == doctest::Approx(1.0));
    CHECK(at0.g2 == doctest::Approx(cfg.g2_baseline));
    double prev_purity = 2.0;
    double prev_g2 = -1.0;
    for (double mu = 0.0; mu <= 10.0; mu += 0.25) {
        const auto m = rydberg_models(cfg, mu);
        REQUIRE(m.purity <= prev_purity);
        REQUIRE(m.g2 >= prev_g2);
        prev_purity = m.purity;
        prev_g2 = m.g2;
    }
    // Generation rises, then falls past the knee.
    CHECK(rydberg_models(cfg, 2.0).gen_prob > rydberg_models(cfg, 0.2).gen_prob);
    CHECK(rydberg_models(cfg, 10.0).gen_prob < rydberg_models(cfg, cfg.gen_knee_mu).gen_prob);
    CHECK_THROWS_AS(rydberg_models(cfg, -1.0), ConfigError);

    // A blockade radius below the cloud size gives higher purity.
    const auto small = rescale_to_level(cfg, 89);
    CHECK(rydberg_models(small, 2.0).purity > rydberg_models(cfg, 2.0).purity);
    cfg.purity_law = PurityLaw::exponential;
    CHECK(rydberg_models(cfg, 2.0).purity < 1.0);
}

TEST_CASE("sources: rydberg arrival probability follows generation")
{
    RydbergConfig cfg;
    const auto op = rydberg_number_stats(cfg);
    CHECK(op.p1 == doctest::Approx(cfg.bs_arrival_prob));
    CHECK(op.g2() == doctest::Approx(cfg.g2_baseline));
    const auto low = rydberg_number_stats(cfg, 0.1);
    CHECK(low.p1 < op.p1);
    cfg.bs_arrival_prob = 0.0;
    CHECK(rydberg_number_stats(cfg).p1 == 0.0);
}

TEST_CASE("sources: trial sampling")
{
    DlczConfig d;
    d.herald_prob = 0.0;
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE_FALSE(dlcz_sample_trial(d, rng).heralded);
    }
    d.herald_prob = 1.0;
    d.bs_arrival_prob = 0.5;
    for (int i = 0; i < 1000; ++i) {
        const auto e = dlcz_sample_trial(d, rng, 100.0);
        REQUIRE(e.heralded);
        REQUIRE(e.emission_time_ns == 100.0 + 2800.0);
    }
    RydbergConfig r;
    r.bs_arrival_prob = 0.0;
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(rydberg_sample_trial(r, 0.0, 500.0, rng).photons == 0);
    }
}

TEST_CASE("sources: rydberg samples reproduce the baseline g2")
{
    RydbergConfig r;
    r.bs_arrival_prob = 0.3;
    Rng rng(17);
    const int n = 1000000;
    double n1 = 0;
    double n2 = 0;
    for (int i = 0; i < n; ++i) {
        const auto e = rydberg_sample_trial(r, 0.0, 0.0, rng);
        n1 += e.photons == 1;
        n2 += e.photons == 2;
    }
    const double p1 = n1 / n;
    const double g2 = 2 * (n2 / n) / (p1 * p1);
    CHECK(g2 == doctest::Approx(0.09).epsilon(0.2));
}

TEST_CASE("sources: photon states")
{
    DlczConfig d;
    RydbergConfig r;
    const auto grid = photonics::default_grid();
    const auto s1 = dlcz_state(d, 60, 180, grid);
    const auto base = photonics::make_waveform(60, 180, grid);
    const auto s2 = rydberg_state(r, base);
    CHECK(photonics::state_overlap(s1, s2) == doctest::Approx(1.0).epsilon(1e-9));
    // Input-dependent impurity lowers the overlap with node 1.
    r.purity_weight = 0.5;
    const auto low = rydberg_state(r, base, 0.0);
    const auto high = rydberg_state(r, base, 4.0);
    CHECK(photonics::state_overlap(s1, high) < photonics::state_overlap(s1, low));
    CHECK(photonics::purity(high) == doctest::Approx(rydberg_models(r, 4.0).purity).epsilon(1e-3));
    // A waveform mismatch reduces the overlap below one.
    d.waveform_mismatch = -0.2;
    CHECK(photonics::state_overlap(dlcz_state(d, 60, 180, grid), s2) < 0.999);
}
