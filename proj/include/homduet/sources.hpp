#pragma once

#include "homduet/photonics.hpp"
#include "homduet/rng.hpp"

namespace homduet::sources {

/// Per-trial photon-number probabilities at the beamsplitter, truncated at two.
struct NumberStats {
    double p1 = 0.0;
    double p2 = 0.0;

    NumberStats() = default;
    NumberStats(double one, double two);

    // Builds stats whose two-photon term realizes g2 = 2 p2 / p1^2.
    static NumberStats from_g2(double p1, double g2);

    double g2() const { return p1 > 0.0 ? 2.0 * p2 / (p1 * p1) : 0.0; }
};

/// Draws 0, 1 or 2 photons.
int sample_photon_count(const NumberStats& stats, Rng& rng);

/// Heralded memory source (node 1).
struct DlczConfig {
    double herald_prob = 0.012;
    double retrieval_prob = 0.25;
    double memory_delay_ns = 2800.0;
    double excitation_p = 0.03477;
    double bs_arrival_prob = 0.028;
    // Fractional change of the read photon's decay time relative to the target waveform.
    double waveform_mismatch = 0.0;
    double detuning_mhz = 0.0;
    double spectral_jitter_mhz = 0.0;

    // Documentation constants.
    double write_detuning_mhz = -40.0;
    double optical_depth = 6.0;
    double aom_shift_mhz = 266.0;

    void validate() const;
};

enum class PurityLaw { rational, exponential };

/// Blockaded Rydberg source (node 2).
struct RydbergConfig {
    double generation_prob = 0.14;
    double mu = 1.0;
    double c6_mhz_um6 = 7.75e7;
    double gamma_mhz = 6.07;
    double omega_c_mhz = 5.82;
    int n_level = 103;
    double cloud_size_um = 13.5;
    double purity_weight = 0.0;
    PurityLaw purity_law = PurityLaw::rational;
    double g2_baseline = 0.09;
    // Growth of g2 per input photon, scaled by cloud_size / r_b.
    double g2_slope = 0.0;
    double gen_saturation_mu = 0.5;
    double gen_knee_mu = 4.0;
    double gen_decay_mu = 6.0;
    double bs_arrival_prob = 0.0215;
    double detuning_mhz = 0.0;
    double spectral_jitter_mhz = 0.0;

    double optical_depth = 12.0;

    void validate() const;
};

/// Heralded two-mode-squeezing autocorrelation 4p/(1+p)^2.
double dlcz_heralded_g2(double excitation_p);

/// Inverse of dlcz_heralded_g2 on p in (0, 0.25].
double dlcz_excitation_for_g2(double g2);

NumberStats dlcz_number_stats(const DlczConfig& cfg);

/// (C6 Gamma / Omega_c^2)^(1/6) in micrometres.
double blockade_radius(const RydbergConfig& cfg);

/// Moves the configuration to another principal quantum number using
/// C6 ~ n^11 and Omega_c ~ n^(-3/2).
RydbergConfig rescale_to_level(const RydbergConfig& cfg, int n_level);

struct RydbergModels {
    double purity = 1.0;
    double g2 = 0.0;
    double gen_prob = 0.0;
};

RydbergModels rydberg_models(const RydbergConfig& cfg);
RydbergModels rydberg_models(const RydbergConfig& cfg, double mu);

/// Number statistics at input mean photon number mu, scaled so that the
/// configured operating point cfg.mu arrives with bs_arrival_prob.
NumberStats rydberg_number_stats(const RydbergConfig& cfg, double mu);
NumberStats rydberg_number_stats(const RydbergConfig& cfg);

struct TrialEmission {
    bool heralded = false;
    int photons = 0;
    double emission_time_ns = 0.0;
};

TrialEmission dlcz_sample_trial(const DlczConfig& cfg, Rng& rng, double herald_time_ns = 0.0);

/// Emission scheduled emission_delay_ns after the trigger.
TrialEmission rydberg_sample_trial(const RydbergConfig& cfg, double trigger_time_ns, double emission_delay_ns,
                                   Rng& rng);

/// Node 1 photon state: target waveform (with the configured decay mismatch)
/// carrying the node's detuning and spectral jitter.
photonics::PhotonStateMixture dlcz_state(const DlczConfig& cfg, double rise_ns, double decay_ns,
                                         const photonics::TimeGrid& grid);

/// Node 2 photon state. The detuning-jitter width is widened until the
/// mixture purity equals purity(mu) times the purity of the baseline jitter.
photonics::PhotonStateMixture rydberg_state(const RydbergConfig& cfg, const photonics::TemporalMode& base);
photonics::PhotonStateMixture rydberg_state(const RydbergConfig& cfg, const photonics::TemporalMode& base,
                                            double mu);

}  // namespace homduet::sources
