#pragma once

#include "homduet/error.hpp"
#include "homduet/timestamp.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace homduet::analysis {

/// Coincidence window relative to a pulse anchor (MARKER record).
struct AnalysisWindow {
    double offset_ns = 0.0;
    double length_ns = 800.0;

    void validate() const;
    bool contains_ps(std::int64_t rel_ps) const
    {
        return rel_ps >= lo_ps() && rel_ps < hi_ps();
    }
    std::int64_t lo_ps() const;
    std::int64_t hi_ps() const;
};

/// Histogram of port-b minus port-a arrival times within one trial, times
/// measured from their pulse anchors.
struct DeltaHistogram {
    double bin_ns = 20.0;
    double lo_ns = -800.0;
    std::vector<std::uint64_t> counts;

    DeltaHistogram() = default;
    DeltaHistogram(double bin_width_ns, double half_range_ns);

    std::size_t bin_of(std::int64_t delta_ps) const;
    double center_ns(std::size_t i) const { return lo_ns + (static_cast<double>(i) + 0.5) * bin_ns; }
    std::uint64_t total() const;
};

struct AccumulatorConfig {
    std::vector<AnalysisWindow> windows{AnalysisWindow{}};
    // Denominator of the count share: detections in this window.
    AnalysisWindow reference{};
    int max_lag = 10;
    double histogram_bin_ns = 20.0;
    Channel channel_a = Channel::spad2a;
    Channel channel_b = Channel::spad2b;

    void validate() const;
};

/// Per-window tallies. lag_counts[L + k] counts trials i with a click on
/// channel a in trial i and on channel b in trial i + k.
struct WindowCounts {
    std::vector<std::uint64_t> lag_counts;
    std::uint64_t detections = 0;
    std::uint64_t singles_a = 0;
    std::uint64_t singles_b = 0;
    // Detections by pulse slot: [0] is the earliest anchor in a trial, [1] the
    // last when a trial has two pulses.
    std::uint64_t slot_detections[2] = {0, 0};

    std::uint64_t zero_lag() const { return lag_counts[lag_counts.size() / 2]; }
};

/// Single-pass trial-binned correlation engine. Records are consumed in
/// stream order; each heralded trial becomes one bit pair (click on a, click
/// on b) per window, and lagged products are accumulated over a ring of the
/// last max_lag trials. Trials without a herald record (calibration
/// interludes) are skipped. Accumulators over consecutive shards merge
/// exactly, including lag pairs straddling the shard boundary.
class CorrelationAccumulator final : public RecordSink {
public:
    explicit CorrelationAccumulator(AccumulatorConfig config = {});

    void push(const TimestampRecord& rec) override;

    // Closes the trial in progress. Call before reading results.
    void finish();

    // Appends a later shard. Both sides must be finished and share a config.
    void merge(const CorrelationAccumulator& later);

    const AccumulatorConfig& config() const { return config_; }
    std::uint64_t trials() const { return trials_; }
    std::uint64_t reference_detections() const { return reference_detections_; }
    const WindowCounts& counts(std::size_t window) const { return windows_.at(window); }
    // Coincidence time differences in window 0.
    const DeltaHistogram& histogram() const { return histogram_; }

private:
    void close_trial();
    void add_mask(std::uint64_t mask);

    AccumulatorConfig config_;
    std::vector<WindowCounts> windows_;
    DeltaHistogram histogram_;
    std::uint64_t trials_ = 0;
    std::uint64_t reference_detections_ = 0;

    // First and last max_lag trial masks; bit 2w is channel a, 2w + 1 channel b.
    std::vector<std::uint64_t> head_;
    std::vector<std::uint64_t> ring_;
    std::size_t ring_pos_ = 0;

    // Trial in progress.
    bool open_ = false;
    std::uint64_t current_trial_ = 0;
    bool herald_ = false;
    std::vector<std::uint64_t> anchors_;
    struct Hit {
        Channel channel;
        std::uint64_t time_ps;
    };
    std::vector<Hit> hits_;
};

/// Routes records to one accumulator per trial-index segment.
/// boundaries[k] is the first trial index of segment k + 1.
class SegmentedSink final : public RecordSink {
public:
    SegmentedSink(std::vector<std::uint64_t> boundaries, const AccumulatorConfig& config);
    void push(const TimestampRecord& rec) override;
    void finish();
    std::vector<CorrelationAccumulator>& segments() { return segments_; }

private:
    std::vector<std::uint64_t> boundaries_;
    std::vector<CorrelationAccumulator> segments_;
    std::size_t current_ = 0;
};

struct G2Curve {
    std::vector<int> delays;
    std::vector<double> values;
    std::vector<double> errors;
    Estimate g2_zero;
    std::uint64_t zero_lag_counts = 0;
    double mean_side_counts = 0.0;
};

/// Zero-lag coincidences normalized by the mean of lags 1 <= |k| <= max_lag,
/// with Poisson errors. Throws InsufficientStatistics without side counts.
G2Curve trial_g2(const CorrelationAccumulator& acc, std::size_t window = 0);

/// Same estimator applied to a single-source (autocorrelation) stream.
Estimate heralded_autocorrelation(const CorrelationAccumulator& acc, std::size_t window = 0);

/// 1 - g2_i / g2_d with first-order error propagation.
Estimate visibility(const Estimate& g2_i, const Estimate& g2_d);

/// V (g2n1 x + g2n2 / x + 2) / 2 with first-order error propagation.
Estimate indistinguishability(const Estimate& v, const Estimate& g2n1, const Estimate& g2n2, const Estimate& x);

/// Ratio of node 1 to node 2 singles in a two-pulse (distinguishable) stream:
/// last pulse slot over first.
Estimate singles_ratio(const CorrelationAccumulator& dist, std::size_t window = 0);

/// Share of reference-window detections that fall into the window.
Estimate count_share(const CorrelationAccumulator& acc, std::size_t window = 0);

struct HomInputs {
    // Source autocorrelations; measured or supplied.
    std::optional<Estimate> g2n1;
    std::optional<Estimate> g2n2;
    // Singles ratio override; estimated from the distinguishable stream otherwise.
    std::optional<Estimate> x;
};

struct HomReport {
    AnalysisWindow window;
    Estimate g2_d;
    Estimate g2_i;
    Estimate visibility;
    std::optional<Estimate> eta;
    Estimate share;
    Estimate x;
    std::optional<Estimate> g2n1;
    std::optional<Estimate> g2n2;
    std::uint64_t coincidences_d = 0;
    std::uint64_t coincidences_i = 0;
};

HomReport hom_report(const CorrelationAccumulator& indist, const CorrelationAccumulator& dist, std::size_t window,
                     const HomInputs& inputs = {});

struct SweepRow {
    AnalysisWindow window;
    Estimate share;
    std::optional<Estimate> visibility;
    std::optional<Estimate> eta;
    bool flagged = false;
    std::string note;
};

/// One row per configured window; rows whose estimators fail are flagged.
std::vector<SweepRow> window_sweep(const CorrelationAccumulator& indist, const CorrelationAccumulator& dist,
                                   const HomInputs& inputs = {});

/// Linear interpolation between the two rows bracketing `share`. The
/// interpolated errors are the larger of the neighbours'.
SweepRow interpolate_at_share(const std::vector<SweepRow>& rows, double share);

const DeltaHistogram& time_resolved_hom(const CorrelationAccumulator& acc);

/// Streams a timestamp file through a fresh accumulator.
CorrelationAccumulator accumulate_file(const std::filesystem::path& path, const AccumulatorConfig& config);

}  // namespace homduet::analysis
