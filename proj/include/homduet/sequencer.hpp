#pragma once

#include "homduet/detection.hpp"
#include "homduet/photonics.hpp"
#include "homduet/rng.hpp"
#include "homduet/sources.hpp"
#include "homduet/timestamp.hpp"
#include "homduet/trial_sim.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace homduet::sequencer {

/// Timing of the asymmetric two-node cycle. Node 1 runs `cycles_per_interrogation`
/// short cycles (preparation then interrogation) inside each node 2
/// interrogation period; node 2 keeps trapping between them.
struct SequenceConfig {
    double node1_cycle_ms = 12.0;
    double node1_interrogation_ms = 4.0;
    double write_trial_period_ns = 4000.0;
    double node2_cycle_ms = 1250.0;
    double node2_interrogation_ms = 200.0;
    int cycles_per_interrogation = 17;
    double trial_span_ns = 5400.0;
    double trigger_latency_ns = 0.0;

    double calibration_period_s = 1800.0;
    double calibration_duration_s = 600.0;
    bool calibration_enabled = true;

    RunMode mode = RunMode::distinguishable;
    double distinguishable_offset_ns = 2600.0;

    void validate() const;

    // Fraction of wall time during which node 1 takes data.
    double duty_cycle() const;
};

struct DriftModel {
    double coupling_drift_rate_mhz_per_h = 0.0;
    double resonance_walk_sigma_mhz_per_sqrt_h = 0.0;
    // Step added to the node 2 resonance while the herald rate is below threshold.
    double trigger_rate_shift_mhz = 0.0;
    double herald_rate_threshold_hz = 0.0;
    // Pre-warming the coupling laser removes the trigger-rate step.
    bool prewarm = false;

    // Documentation constant: 1 MHz per 10 mV/cm.
    double stark_sensitivity_mhz_per_v_per_cm = 100.0;

    void validate() const;
};

struct Correction {
    double time_s = 0.0;
    double applied_mhz = 0.0;
};

struct CalibrationState {
    double current_detuning_mhz = 0.0;
    double last_calibration_time_s = 0.0;
    std::vector<Correction> corrections;
};

/// Advances the detuning by rate dt plus a Gaussian walk increment of
/// sigma sqrt(dt). dt in seconds.
CalibrationState drift_step(const DriftModel& drift, CalibrationState state, double dt_s, Rng& rng);

struct ScanConfig {
    double scan_range_mhz = 6.0;  // full width, centered on the nominal resonance
    int n_points = 21;
    double resonance_width_mhz = 1.0;  // Gaussian sigma of the storage-efficiency profile
    double counts_per_point = 100.0;  // at peak efficiency; <= 0 means noiseless

    void validate() const;
};

struct ScanResult {
    bool ok = false;
    double fitted_center_mhz = 0.0;
    double fit_error_mhz = 0.0;
    std::string diagnostic;
    CalibrationState state;
};

/// Samples a storage-efficiency scan around the drifted resonance, fits a
/// Gaussian and applies minus the fitted center as a correction. On fit
/// failure the state is returned unchanged and ok is false.
ScanResult calibration_scan(const CalibrationState& state, const ScanConfig& scan, Rng& rng, double time_s = 0.0);

struct CalibrationEvent {
    double start_s = 0.0;
    double end_s = 0.0;
    std::uint64_t trial_index = 0;  // index of the interlude record
    bool ok = false;
    double detuning_before_mhz = 0.0;
    double correction_mhz = 0.0;
    std::string diagnostic;
};

// Wall-time bookmark: trials from first_trial onward happened after time_s.
struct Checkpoint {
    double time_s = 0.0;
    std::uint64_t first_trial = 0;
    double detuning_mhz = 0.0;
};

struct RunSummary {
    double duration_s = 0.0;
    std::uint64_t heralded_trials = 0;
    std::uint64_t write_attempts = 0;
    std::uint64_t triple_coincidences = 0;
    std::uint64_t records = 0;
    double interrogation_time_s = 0.0;
    double data_time_s = 0.0;  // interrogation time outside calibration interludes
    std::vector<CalibrationEvent> calibrations;
    std::vector<Checkpoint> checkpoints;

    double duty_cycle() const { return duration_s > 0.0 ? interrogation_time_s / duration_s : 0.0; }
};

struct ExperimentSetup {
    SequenceConfig sequence;
    sources::DlczConfig dlcz;
    sources::RydbergConfig rydberg;
    detection::DetectorConfig detector;
    DriftModel drift;
    ScanConfig scan;
    photonics::PhotonStateMixture node1_state;
    photonics::PhotonStateMixture node2_state;

    void validate() const;
};

/// Photon states from the source configs and a rise / decay waveform.
ExperimentSetup make_setup(const SequenceConfig& seq, const sources::DlczConfig& dlcz,
                           const sources::RydbergConfig& ryd, const detection::DetectorConfig& det,
                           const DriftModel& drift, const ScanConfig& scan, double rise_ns = 60.0,
                           double decay_ns = 180.0, const photonics::TimeGrid& grid = photonics::default_grid());

/// Runs the dual-node schedule for `duration_s` of wall time and streams the
/// timestamp records. Trials are indexed consecutively; a calibration
/// interlude occupies one index holding a single MARKER and no herald. The
/// drifting node 2 detuning is re-sampled once per node 2 cycle.
RunSummary run_experiment(const ExperimentSetup& setup, std::uint64_t seed, double duration_s,
                          analysis::RecordSink& sink);

}  // namespace homduet::sequencer
