#pragma once

#include "homduet/detection.hpp"
#include "homduet/photonics.hpp"
#include "homduet/rng.hpp"
#include "homduet/sources.hpp"
#include "homduet/timestamp.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace homduet {

enum class RunMode { distinguishable, indistinguishable, autocorr_n1, autocorr_n2 };

RunMode parse_run_mode(const std::string& text);
const char* run_mode_name(RunMode mode);

/// What happens inside one heralded trial.
///
/// Trial frame: the node 1 herald (SPAD1) is at t = 0 and its read photon is
/// emitted memory_delay later. Node 2 emits at the same instant when
/// overlapped, or distinguishable_offset earlier otherwise. Each emission
/// start is stamped with a MARKER record so windows can be anchored without
/// knowing the schedule. The autocorrelation modes block one node.
struct TrialModel {
    RunMode mode = RunMode::distinguishable;
    sources::NumberStats node1;
    sources::NumberStats node2;
    detection::DetectorConfig detector;
    double memory_delay_ns = 2800.0;
    double distinguishable_offset_ns = 2600.0;
    double trial_span_ns = 5400.0;
};

class TrialSimulator {
public:
    TrialSimulator(TrialModel model, photonics::PhotonStateMixture node1_state,
                   photonics::PhotonStateMixture node2_state);

    const TrialModel& model() const { return model_; }
    const detection::HomSampler& sampler() const { return sampler_; }

    // Emission start times in the trial frame, ascending.
    const std::vector<double>& anchors_ns() const { return anchors_; }

    /// Samples one trial and pushes its records. Returns the detections.
    detection::HomOutcome emit(std::uint64_t trial_index, Rng& rng, analysis::RecordSink& sink) const;

private:
    TrialModel model_;
    detection::HomSampler sampler_;
    double node1_time_ns_ = 0.0;
    double node2_time_ns_ = 0.0;
    std::vector<double> anchors_;
};

/// Runs `count` consecutive heralded trials starting at first_index. Trial i
/// draws from Rng::substream(seed, i), so any slice reproduces the same
/// records as a full run.
void simulate_trials(const TrialSimulator& sim, std::uint64_t seed, std::uint64_t first_index, std::uint64_t count,
                     analysis::RecordSink& sink);

// Nanoseconds to the integer picosecond stamps used on the wire.
std::uint64_t to_ps(double ns);

}  // namespace homduet
