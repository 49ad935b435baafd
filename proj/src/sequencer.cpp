#include "homduet/sequencer.hpp"

#include "homduet/error.hpp"
#include "homduet/fit.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <random>

namespace homduet::sequencer {

namespace {

constexpr double kSecondsPerHour = 3600.0;

void require_positive(double v, const char* field)
{
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string(field) + ": must be positive");
    }
}

void require_non_negative(double v, const char* field)
{
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string(field) + ": must be non-negative");
    }
}

// Failures before the first success of a Bernoulli(p) sequence.
std::uint64_t geometric_skip(double p, Rng& rng)
{
    if (p >= 1.0) {
        return 0;
    }
    if (p <= 0.0) {
        return std::numeric_limits<std::uint64_t>::max();
    }
    const double u = 1.0 - rng.uniform();  // (0, 1]
    const double k = std::floor(std::log(u) / std::log1p(-p));
    return k >= 1.8e19 ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(k);
}

class CountingSink final : public analysis::RecordSink {
public:
    explicit CountingSink(analysis::RecordSink& inner) : inner_(inner) {}
    void push(const analysis::TimestampRecord& rec) override
    {
        inner_.push(rec);
        ++count;
    }
    std::uint64_t count = 0;

private:
    analysis::RecordSink& inner_;
};

}  // namespace

void SequenceConfig::validate() const
{
    require_positive(node1_cycle_ms, "sequence.node1_cycle_ms");
    require_positive(node1_interrogation_ms, "sequence.node1_interrogation_ms");
    require_positive(write_trial_period_ns, "sequence.write_trial_period_ns");
    require_positive(node2_cycle_ms, "sequence.node2_cycle_ms");
    require_positive(node2_interrogation_ms, "sequence.node2_interrogation_ms");
    require_positive(trial_span_ns, "sequence.trial_span_ns");
    require_non_negative(trigger_latency_ns, "sequence.trigger_latency_ns");
    require_non_negative(distinguishable_offset_ns, "sequence.distinguishable_offset_ns");
    if (cycles_per_interrogation < 1) {
        throw ConfigError("sequence.cycles_per_interrogation: must be at least 1");
    }
    if (node1_interrogation_ms > node1_cycle_ms) {
        throw ConfigError("sequence.node1_interrogation_ms: exceeds node1_cycle_ms");
    }
    const double node1_total = cycles_per_interrogation * node1_cycle_ms;
    if (std::abs(node1_total - node2_interrogation_ms) > 0.05 * node2_interrogation_ms) {
        throw ConfigError("sequence.cycles_per_interrogation: node 1 cycles do not fill the node 2 interrogation "
                          "time within 5%");
    }
    if (node1_total > node2_cycle_ms) {
        throw ConfigError("sequence.node2_cycle_ms: shorter than the node 1 cycles it contains");
    }
    const double slots = node1_interrogation_ms * 1e6 / write_trial_period_ns;
    if (std::abs(slots - std::round(slots)) > 1e-9 * slots) {
        throw ConfigError("sequence.write_trial_period_ns: does not divide the interrogation time");
    }
    if (calibration_enabled) {
        require_positive(calibration_period_s, "sequence.calibration_period_s");
        require_positive(calibration_duration_s, "sequence.calibration_duration_s");
        if (calibration_duration_s >= calibration_period_s) {
            throw ConfigError("sequence.calibration_duration_s: must be shorter than calibration_period_s");
        }
    }
}

double SequenceConfig::duty_cycle() const
{
    return (node1_interrogation_ms / node1_cycle_ms) * (cycles_per_interrogation * node1_cycle_ms / node2_cycle_ms);
}

void DriftModel::validate() const
{
    require_non_negative(std::abs(coupling_drift_rate_mhz_per_h), "drift.coupling_drift_rate_mhz_per_h");
    require_non_negative(resonance_walk_sigma_mhz_per_sqrt_h, "drift.resonance_walk_sigma_mhz_per_sqrt_h");
    require_non_negative(std::abs(trigger_rate_shift_mhz), "drift.trigger_rate_shift_mhz");
    require_non_negative(herald_rate_threshold_hz, "drift.herald_rate_threshold_hz");
}

void ScanConfig::validate() const
{
    require_positive(resonance_width_mhz, "calibration.resonance_width_mhz");
    if (!(scan_range_mhz > resonance_width_mhz)) {
        throw ConfigError("calibration.scan_range_mhz: must exceed resonance_width_mhz");
    }
    if (n_points < 5) {
        throw ConfigError("calibration.n_points: need at least 5");
    }
}

CalibrationState drift_step(const DriftModel& drift, CalibrationState state, double dt_s, Rng& rng)
{
    if (!(dt_s > 0.0)) {
        throw ConfigError("drift_step: dt must be positive");
    }
    const double hours = dt_s / kSecondsPerHour;
    state.current_detuning_mhz += drift.coupling_drift_rate_mhz_per_h * hours;
    if (drift.resonance_walk_sigma_mhz_per_sqrt_h > 0.0) {
        state.current_detuning_mhz += drift.resonance_walk_sigma_mhz_per_sqrt_h * std::sqrt(hours) * rng.normal();
    }
    return state;
}

ScanResult calibration_scan(const CalibrationState& state, const ScanConfig& scan, Rng& rng, double time_s)
{
    scan.validate();
    std::vector<analysis::FitPoint> pts;
    pts.reserve(static_cast<std::size_t>(scan.n_points));
    const double truth = state.current_detuning_mhz;
    for (int k = 0; k < scan.n_points; ++k) {
        const double d = -0.5 * scan.scan_range_mhz + scan.scan_range_mhz * k / (scan.n_points - 1);
        const double eff = analysis::gaussian(d, truth, scan.resonance_width_mhz, 1.0, 0.0);
        if (scan.counts_per_point > 0.0) {
            std::poisson_distribution<long> dist(scan.counts_per_point * eff);
            const auto counts = static_cast<double>(dist(rng));
            pts.push_back({d, counts / scan.counts_per_point, std::sqrt(std::max(counts, 1.0)) / scan.counts_per_point});
        } else {
            pts.push_back({d, eff, 0.0});
        }
    }

    ScanResult out;
    out.state = state;
    try {
        const auto fit = analysis::gaussian_fit(pts);
        if (std::abs(fit.center) > 0.5 * scan.scan_range_mhz || !(fit.amplitude > 0.0)) {
            out.diagnostic = "fitted resonance outside the scan range";
            return out;
        }
        out.ok = true;
        out.fitted_center_mhz = fit.center;
        out.fit_error_mhz = fit.center_est.error;
        out.state.current_detuning_mhz = truth - fit.center;
        out.state.last_calibration_time_s = time_s;
        out.state.corrections.push_back({time_s, -fit.center});
    } catch (const FitError& e) {
        out.diagnostic = e.what();
    }
    return out;
}

void ExperimentSetup::validate() const
{
    sequence.validate();
    dlcz.validate();
    rydberg.validate();
    detector.validate();
    drift.validate();
    if (sequence.calibration_enabled) {
        scan.validate();
    }
    const double node2_emit = sequence.mode == RunMode::distinguishable
                                  ? dlcz.memory_delay_ns - sequence.distinguishable_offset_ns
                                  : dlcz.memory_delay_ns;
    if (sequence.trigger_latency_ns > node2_emit) {
        throw ConfigError("sequence.trigger_latency_ns: node 2 would have to emit before the trigger arrives");
    }
}

ExperimentSetup make_setup(const SequenceConfig& seq, const sources::DlczConfig& dlcz,
                           const sources::RydbergConfig& ryd, const detection::DetectorConfig& det,
                           const DriftModel& drift, const ScanConfig& scan, double rise_ns, double decay_ns,
                           const photonics::TimeGrid& grid)
{
    auto node1 = sources::dlcz_state(dlcz, rise_ns, decay_ns, grid);
    auto node2 = sources::rydberg_state(ryd, photonics::make_waveform(rise_ns, decay_ns, grid));
    return ExperimentSetup{seq, dlcz, ryd, det, drift, scan, std::move(node1), std::move(node2)};
}

RunSummary run_experiment(const ExperimentSetup& setup, std::uint64_t seed, double duration_s,
                          analysis::RecordSink& sink)
{
    using analysis::Channel;
    using analysis::TimestampRecord;

    setup.validate();
    RunSummary summary;
    if (!(duration_s > 0.0)) {
        return summary;
    }
    summary.duration_s = duration_s;

    const auto& seq = setup.sequence;
    CountingSink out(sink);

    // Independent streams: herald draws, drift and calibration, per-trial photons.
    std::uint64_t mix = seed;
    Rng herald_rng(splitmix64(mix));
    Rng drift_rng(splitmix64(mix));
    const std::uint64_t trial_seed = splitmix64(mix);

    TrialModel model;
    model.mode = seq.mode;
    model.node1 = sources::dlcz_number_stats(setup.dlcz);
    model.node2 = sources::rydberg_number_stats(setup.rydberg);
    model.detector = setup.detector;
    model.memory_delay_ns = setup.dlcz.memory_delay_ns;
    model.distinguishable_offset_ns = seq.distinguishable_offset_ns;
    model.trial_span_ns = seq.trial_span_ns;

    const double cycle_s = seq.node2_cycle_ms * 1e-3;
    const double node1_cycle_s = seq.node1_cycle_ms * 1e-3;
    const double prep_s = (seq.node1_cycle_ms - seq.node1_interrogation_ms) * 1e-3;
    const double period_s = seq.write_trial_period_ns * 1e-9;
    const auto slots_per_window =
        static_cast<std::uint64_t>(std::llround(seq.node1_interrogation_ms * 1e6 / seq.write_trial_period_ns));
    const auto slots_per_trial = static_cast<std::uint64_t>(std::ceil(seq.trial_span_ns / seq.write_trial_period_ns));

    auto in_calibration = [&](double t) {
        return seq.calibration_enabled &&
               std::fmod(t, seq.calibration_period_s) >= seq.calibration_period_s - seq.calibration_duration_s;
    };

    CalibrationState cal;
    std::optional<TrialSimulator> sim;
    double sim_detuning = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t trial_index = 0;
    bool calibrating = false;
    double last_rate_hz = std::numeric_limits<double>::infinity();

    for (std::uint64_t c = 0;; ++c) {
        const double t0 = static_cast<double>(c) * cycle_s;
        if (t0 >= duration_s) {
            break;
        }
        if (c > 0) {
            cal = drift_step(setup.drift, cal, cycle_s, drift_rng);
        }

        const bool cal_now = in_calibration(t0);
        if (cal_now && !calibrating) {
            CalibrationEvent ev;
            ev.start_s = t0;
            ev.trial_index = trial_index;
            ev.detuning_before_mhz = cal.current_detuning_mhz;
            ev.diagnostic = "run ended during calibration";
            summary.calibrations.push_back(ev);
            out.push(TimestampRecord{Channel::marker, trial_index, 0});
            ++trial_index;
        } else if (!cal_now && calibrating) {
            auto& ev = summary.calibrations.back();
            ev.end_s = t0;
            ev.detuning_before_mhz = cal.current_detuning_mhz;
            const auto res = calibration_scan(cal, setup.scan, drift_rng, t0);
            ev.ok = res.ok;
            ev.diagnostic = res.diagnostic;
            if (res.ok) {
                ev.correction_mhz = -res.fitted_center_mhz;
                cal = res.state;
            }
        }
        calibrating = cal_now;

        // Interrogation time is bookkept for every node 2 cycle; data is dropped during calibration.
        for (int k = 0; k < seq.cycles_per_interrogation; ++k) {
            const double w0 = t0 + k * node1_cycle_s + prep_s;
            if (w0 >= duration_s) {
                break;
            }
            summary.interrogation_time_s += std::min(seq.node1_interrogation_ms * 1e-3, duration_s - w0);
        }
        if (cal_now) {
            continue;
        }

        const bool slow_triggers = setup.drift.herald_rate_threshold_hz > 0.0 &&
                                   last_rate_hz < setup.drift.herald_rate_threshold_hz && !setup.drift.prewarm;
        const double detuning = cal.current_detuning_mhz + (slow_triggers ? setup.drift.trigger_rate_shift_mhz : 0.0);
        if (!sim || detuning != sim_detuning) {
            sim.emplace(model, setup.node1_state, setup.node2_state.shifted(detuning));
            sim_detuning = detuning;
        }
        summary.checkpoints.push_back({t0, trial_index, detuning});

        std::uint64_t heralds_this_cycle = 0;
        for (int k = 0; k < seq.cycles_per_interrogation; ++k) {
            const double w0 = t0 + k * node1_cycle_s + prep_s;
            if (w0 >= duration_s) {
                break;
            }
            summary.data_time_s += std::min(seq.node1_interrogation_ms * 1e-3, duration_s - w0);
            const auto slots_in_run = std::min<std::uint64_t>(
                slots_per_window, static_cast<std::uint64_t>(std::ceil((duration_s - w0) / period_s)));
            std::uint64_t slot = 0;
            while (slot < slots_in_run) {
                const std::uint64_t skip = geometric_skip(setup.dlcz.herald_prob, herald_rng);
                if (skip >= slots_in_run - slot) {
                    summary.write_attempts += slots_in_run - slot;
                    break;
                }
                slot += skip;
                summary.write_attempts += skip + 1;
                Rng trial_rng = Rng::substream(trial_seed, trial_index);
                const auto outcome = sim->emit(trial_index, trial_rng, out);
                bool a = false;
                bool b = false;
                for (const auto& d : outcome.detections) {
                    (d.port == detection::Port::a ? a : b) = true;
                }
                summary.triple_coincidences += (a && b) ? 1 : 0;
                ++summary.heralded_trials;
                ++heralds_this_cycle;
                ++trial_index;
                slot += slots_per_trial;
            }
        }
        last_rate_hz = static_cast<double>(heralds_this_cycle) / cycle_s;
    }
    summary.records = out.count;
    return summary;
}

}  // namespace homduet::sequencer
