#include "homduet/trial_sim.hpp"

#include "homduet/error.hpp"

#include <algorithm>
#include <cmath>

namespace homduet {

RunMode parse_run_mode(const std::string& text)
{
    if (text == "dist" || text == "distinguishable") {
        return RunMode::distinguishable;
    }
    if (text == "indist" || text == "indistinguishable") {
        return RunMode::indistinguishable;
    }
    if (text == "autocorr-n1") {
        return RunMode::autocorr_n1;
    }
    if (text == "autocorr-n2") {
        return RunMode::autocorr_n2;
    }
    throw ConfigError("mode: expected dist, indist, autocorr-n1 or autocorr-n2, got '" + text + "'");
}

const char* run_mode_name(RunMode mode)
{
    switch (mode) {
    case RunMode::distinguishable:
        return "dist";
    case RunMode::indistinguishable:
        return "indist";
    case RunMode::autocorr_n1:
        return "autocorr-n1";
    case RunMode::autocorr_n2:
        return "autocorr-n2";
    }
    return "?";
}

std::uint64_t to_ps(double ns)
{
    if (!(ns >= 0.0)) {
        throw Error("negative timestamp");
    }
    return static_cast<std::uint64_t>(std::llround(ns * 1000.0));
}

TrialSimulator::TrialSimulator(TrialModel model, photonics::PhotonStateMixture node1_state,
                               photonics::PhotonStateMixture node2_state)
    : model_(std::move(model)), sampler_(std::move(node1_state), std::move(node2_state))
{
    model_.detector.validate();
    // Re-run the NumberStats invariants on hand-built values.
    model_.node1 = sources::NumberStats(model_.node1.p1, model_.node1.p2);
    model_.node2 = sources::NumberStats(model_.node2.p1, model_.node2.p2);

    const double span = sampler_.node1().grid().span();
    if (!(model_.memory_delay_ns > 0.0)) {
        throw ConfigError("sequence.memory_delay_ns: must be positive");
    }
    if (model_.memory_delay_ns + span > model_.trial_span_ns) {
        throw ConfigError("sequence.trial_span_ns: read photon does not fit inside the trial");
    }
    node1_time_ns_ = model_.memory_delay_ns;
    node2_time_ns_ = model_.memory_delay_ns;
    if (model_.mode == RunMode::distinguishable) {
        if (model_.distinguishable_offset_ns < span) {
            throw ConfigError("sequence.distinguishable_offset_ns: pulses would overlap (offset below photon span)");
        }
        if (model_.distinguishable_offset_ns > model_.memory_delay_ns) {
            throw ConfigError("sequence.distinguishable_offset_ns: node 2 would emit before the herald");
        }
        node2_time_ns_ = model_.memory_delay_ns - model_.distinguishable_offset_ns;
        anchors_ = {node2_time_ns_, node1_time_ns_};
    } else {
        anchors_ = {node1_time_ns_};
    }
}

detection::HomOutcome TrialSimulator::emit(std::uint64_t trial_index, Rng& rng, analysis::RecordSink& sink) const
{
    using analysis::Channel;
    using analysis::TimestampRecord;

    sources::TrialEmission e1{true, 0, node1_time_ns_};
    sources::TrialEmission e2{true, 0, node2_time_ns_};
    if (model_.mode != RunMode::autocorr_n2) {
        e1.photons = sources::sample_photon_count(model_.node1, rng);
    }
    if (model_.mode != RunMode::autocorr_n1) {
        e2.photons = sources::sample_photon_count(model_.node2, rng);
    }

    detection::HomOutcome out;
    if (e1.photons > 0 || e2.photons > 0 || model_.detector.dark_rate_hz > 0.0) {
        out = sampler_.sample(e1, e2, model_.detector, rng, model_.trial_span_ns);
    }

    sink.push(TimestampRecord{Channel::spad1, trial_index, 0});
    // Detections are sorted and never precede the first anchor except for
    // dark counts, so a merge keeps the stream ordered.
    std::size_t next_anchor = 0;
    for (const auto& d : out.detections) {
        const std::uint64_t t = to_ps(d.time_ns);
        while (next_anchor < anchors_.size() && to_ps(anchors_[next_anchor]) <= t) {
            sink.push(TimestampRecord{Channel::marker, trial_index, to_ps(anchors_[next_anchor])});
            ++next_anchor;
        }
        const Channel ch = d.port == detection::Port::a ? Channel::spad2a : Channel::spad2b;
        sink.push(TimestampRecord{ch, trial_index, t});
    }
    for (; next_anchor < anchors_.size(); ++next_anchor) {
        sink.push(TimestampRecord{Channel::marker, trial_index, to_ps(anchors_[next_anchor])});
    }
    return out;
}

void simulate_trials(const TrialSimulator& sim, std::uint64_t seed, std::uint64_t first_index, std::uint64_t count,
                     analysis::RecordSink& sink)
{
    for (std::uint64_t i = first_index; i < first_index + count; ++i) {
        Rng rng = Rng::substream(seed, i);
        sim.emit(i, rng, sink);
    }
}

}  // namespace homduet
