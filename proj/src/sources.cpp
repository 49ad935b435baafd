#include "homduet/sources.hpp"

#include "homduet/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace homduet::sources {

namespace {

void require_probability(double p, const char* field)
{
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError(std::string(field) + ": must be a probability in [0, 1]");
    }
}

void require_positive(double v, const char* field)
{
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string(field) + ": must be positive");
    }
}

}  // namespace

NumberStats::NumberStats(double one, double two) : p1(one), p2(two)
{
    if (!(p2 >= 0.0 && p2 <= p1 && p1 <= 1.0 && p1 + p2 <= 1.0)) {
        throw ConfigError("number stats: require 0 <= p2 <= p1 and p1 + p2 <= 1");
    }
}

NumberStats NumberStats::from_g2(double p1, double g2)
{
    if (!(g2 >= 0.0)) {
        throw ConfigError("number stats: g2 must be non-negative");
    }
    return NumberStats(p1, 0.5 * g2 * p1 * p1);
}

int sample_photon_count(const NumberStats& stats, Rng& rng)
{
    const double u = rng.uniform();
    if (u < stats.p1) {
        return 1;
    }
    if (u < stats.p1 + stats.p2) {
        return 2;
    }
    return 0;
}

void DlczConfig::validate() const
{
    require_probability(herald_prob, "dlcz.herald_prob");
    require_probability(retrieval_prob, "dlcz.retrieval_prob");
    require_probability(bs_arrival_prob, "dlcz.bs_arrival_prob");
    require_positive(memory_delay_ns, "dlcz.memory_delay_ns");
    if (!(excitation_p > 0.0 && excitation_p <= 0.25)) {
        throw ConfigError("dlcz.excitation_p: must lie in (0, 0.25]");
    }
    if (!(waveform_mismatch > -1.0)) {
        throw ConfigError("dlcz.waveform_mismatch: must exceed -1");
    }
    if (!(spectral_jitter_mhz >= 0.0)) {
        throw ConfigError("dlcz.spectral_jitter_mhz: must be non-negative");
    }
}

void RydbergConfig::validate() const
{
    require_probability(generation_prob, "rydberg.generation_prob");
    require_probability(bs_arrival_prob, "rydberg.bs_arrival_prob");
    require_positive(c6_mhz_um6, "rydberg.c6_mhz_um6");
    require_positive(gamma_mhz, "rydberg.gamma_mhz");
    require_positive(omega_c_mhz, "rydberg.omega_c_mhz");
    require_positive(cloud_size_um, "rydberg.cloud_size_um");
    require_positive(gen_saturation_mu, "rydberg.gen_saturation_mu");
    require_positive(gen_decay_mu, "rydberg.gen_decay_mu");
    if (n_level < 1) {
        throw ConfigError("rydberg.n_level: must be positive");
    }
    if (!(mu >= 0.0)) {
        throw ConfigError("rydberg.mu: must be non-negative");
    }
    if (!(purity_weight >= 0.0)) {
        throw ConfigError("rydberg.purity_weight: must be non-negative");
    }
    if (!(g2_baseline >= 0.0) || !(g2_slope >= 0.0)) {
        throw ConfigError("rydberg.g2_baseline / g2_slope: must be non-negative");
    }
    if (!(gen_knee_mu >= 0.0)) {
        throw ConfigError("rydberg.gen_knee_mu: must be non-negative");
    }
    if (!(spectral_jitter_mhz >= 0.0)) {
        throw ConfigError("rydberg.spectral_jitter_mhz: must be non-negative");
    }
}

double dlcz_heralded_g2(double excitation_p)
{
    return 4.0 * excitation_p / ((1.0 + excitation_p) * (1.0 + excitation_p));
}

double dlcz_excitation_for_g2(double g2)
{
    if (!(g2 > 0.0 && g2 <= dlcz_heralded_g2(0.25))) {
        throw ConfigError("dlcz.g2: must lie in (0, 0.64]");
    }
    // Smaller root of g p^2 + (2g - 4) p + g = 0.
    return ((2.0 - g2) - 2.0 * std::sqrt(1.0 - g2)) / g2;
}

NumberStats dlcz_number_stats(const DlczConfig& cfg)
{
    if (!(cfg.excitation_p > 0.0 && cfg.excitation_p <= 0.25)) {
        throw ConfigError("dlcz.excitation_p: must lie in (0, 0.25]");
    }
    require_probability(cfg.bs_arrival_prob, "dlcz.bs_arrival_prob");
    return NumberStats::from_g2(cfg.bs_arrival_prob, dlcz_heralded_g2(cfg.excitation_p));
}

double blockade_radius(const RydbergConfig& cfg)
{
    require_positive(cfg.c6_mhz_um6, "rydberg.c6_mhz_um6");
    require_positive(cfg.gamma_mhz, "rydberg.gamma_mhz");
    require_positive(cfg.omega_c_mhz, "rydberg.omega_c_mhz");
    return std::pow(cfg.c6_mhz_um6 * cfg.gamma_mhz / (cfg.omega_c_mhz * cfg.omega_c_mhz), 1.0 / 6.0);
}

RydbergConfig rescale_to_level(const RydbergConfig& cfg, int n_level)
{
    if (n_level < 1 || cfg.n_level < 1) {
        throw ConfigError("rydberg.n_level: must be positive");
    }
    const double ratio = static_cast<double>(n_level) / static_cast<double>(cfg.n_level);
    RydbergConfig out = cfg;
    out.n_level = n_level;
    out.c6_mhz_um6 = cfg.c6_mhz_um6 * std::pow(ratio, 11.0);
    out.omega_c_mhz = cfg.omega_c_mhz * std::pow(ratio, -1.5);
    return out;
}

RydbergModels rydberg_models(const RydbergConfig& cfg) { return rydberg_models(cfg, cfg.mu); }

RydbergModels rydberg_models(const RydbergConfig& cfg, double mu)
{
    if (!(mu >= 0.0)) {
        throw ConfigError("rydberg.mu: must be non-negative");
    }
    const double rb = blockade_radius(cfg);
    const double blockade_fill = std::clamp(rb / cfg.cloud_size_um, 0.0, 1.0);
    const double scattering = cfg.purity_weight * mu * blockade_fill;

    RydbergModels out;
    out.purity = cfg.purity_law == PurityLaw::rational ? 1.0 / (1.0 + scattering) : std::exp(-scattering);
    out.g2 = cfg.g2_baseline + cfg.g2_slope * mu * (cfg.cloud_size_um / rb);
    double gen = cfg.generation_prob * (1.0 - std::exp(-mu / cfg.gen_saturation_mu));
    if (mu > cfg.gen_knee_mu) {
        gen *= std::exp(-(mu - cfg.gen_knee_mu) / cfg.gen_decay_mu);
    }
    out.gen_prob = gen;
    return out;
}

NumberStats rydberg_number_stats(const RydbergConfig& cfg) { return rydberg_number_stats(cfg, cfg.mu); }

NumberStats rydberg_number_stats(const RydbergConfig& cfg, double mu)
{
    require_probability(cfg.bs_arrival_prob, "rydberg.bs_arrival_prob");
    const RydbergModels at = rydberg_models(cfg, mu);
    double p1 = cfg.bs_arrival_prob;
    if (mu != cfg.mu) {
        const double ref = rydberg_models(cfg, cfg.mu).gen_prob;
        if (!(ref > 0.0)) {
            throw ConfigError("rydberg.mu: operating point must have non-zero generation probability");
        }
        p1 = std::min(1.0, cfg.bs_arrival_prob * at.gen_prob / ref);
    }
    return NumberStats::from_g2(p1, at.g2);
}

TrialEmission dlcz_sample_trial(const DlczConfig& cfg, Rng& rng, double herald_time_ns)
{
    TrialEmission out;
    if (!rng.bernoulli(cfg.herald_prob)) {
        return out;
    }
    out.heralded = true;
    out.photons = sample_photon_count(dlcz_number_stats(cfg), rng);
    out.emission_time_ns = herald_time_ns + cfg.memory_delay_ns;
    return out;
}

TrialEmission rydberg_sample_trial(const RydbergConfig& cfg, double trigger_time_ns, double emission_delay_ns,
                                   Rng& rng)
{
    TrialEmission out;
    out.heralded = true;
    out.photons = sample_photon_count(rydberg_number_stats(cfg), rng);
    out.emission_time_ns = trigger_time_ns + emission_delay_ns;
    return out;
}

photonics::PhotonStateMixture dlcz_state(const DlczConfig& cfg, double rise_ns, double decay_ns,
                                         const photonics::TimeGrid& grid)
{
    const auto mode = photonics::make_waveform(rise_ns, decay_ns * (1.0 + cfg.waveform_mismatch), grid)
                          .with_detuning(cfg.detuning_mhz);
    return photonics::detuning_mixture(mode, cfg.spectral_jitter_mhz);
}

photonics::PhotonStateMixture rydberg_state(const RydbergConfig& cfg, const photonics::TemporalMode& base)
{
    return rydberg_state(cfg, base, cfg.mu);
}

photonics::PhotonStateMixture rydberg_state(const RydbergConfig& cfg, const photonics::TemporalMode& base,
                                            double mu)
{
    const auto centered = base.with_detuning(cfg.detuning_mhz);
    const double target_factor = rydberg_models(cfg, mu).purity;
    auto baseline = photonics::detuning_mixture(centered, cfg.spectral_jitter_mhz);
    if (target_factor >= 1.0) {
        return baseline;
    }
    const double target = target_factor * photonics::purity(baseline);
    auto purity_at = [&](double sigma) { return photonics::purity(photonics::detuning_mixture(centered, sigma)); };
    double lo = cfg.spectral_jitter_mhz;
    double hi = std::max(0.05, 2.0 * lo);
    while (purity_at(hi) > target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e3) {
            throw ConfigError("rydberg.purity_weight: purity target below what the mixture model can represent");
        }
    }
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (purity_at(mid) > target ? lo : hi) = mid;
    }
    return photonics::detuning_mixture(centered, 0.5 * (lo + hi));
}

}  // namespace homduet::sources
