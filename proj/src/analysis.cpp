#include "homduet/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace homduet::analysis {

namespace {

constexpr std::uint64_t kEvenBits = 0x5555555555555555ULL;
constexpr std::size_t kMaxWindows = 32;

std::int64_t ns_to_ps(double ns) { return static_cast<std::int64_t>(std::llround(ns * 1000.0)); }

std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) {
        --q;
    }
    return q;
}

bool same_window(const AnalysisWindow& a, const AnalysisWindow& b)
{
    return a.offset_ns == b.offset_ns && a.length_ns == b.length_ns;
}

bool same_config(const AccumulatorConfig& a, const AccumulatorConfig& b)
{
    if (a.windows.size() != b.windows.size() || a.max_lag != b.max_lag || a.histogram_bin_ns != b.histogram_bin_ns ||
        a.channel_a != b.channel_a || a.channel_b != b.channel_b || !same_window(a.reference, b.reference)) {
        return false;
    }
    for (std::size_t i = 0; i < a.windows.size(); ++i) {
        if (!same_window(a.windows[i], b.windows[i])) {
            return false;
        }
    }
    return true;
}

}  // namespace

void AnalysisWindow::validate() const
{
    if (!(length_ns > 0.0) || !std::isfinite(length_ns)) {
        throw ConfigError("analysis.window: length must be positive");
    }
    if (!(offset_ns >= 0.0) || !std::isfinite(offset_ns)) {
        throw ConfigError("analysis.window: offset must be non-negative");
    }
}

std::int64_t AnalysisWindow::lo_ps() const { return ns_to_ps(offset_ns); }
std::int64_t AnalysisWindow::hi_ps() const { return ns_to_ps(offset_ns + length_ns); }

DeltaHistogram::DeltaHistogram(double bin_width_ns, double half_range_ns) : bin_ns(bin_width_ns), lo_ns(-half_range_ns)
{
    if (!(bin_width_ns > 0.0) || !(half_range_ns > 0.0)) {
        throw ConfigError("analysis.histogram_bin_ns: must be positive");
    }
    counts.assign(static_cast<std::size_t>(std::ceil(2.0 * half_range_ns / bin_width_ns - 1e-9)), 0);
}

std::size_t DeltaHistogram::bin_of(std::int64_t delta_ps) const
{
    const std::int64_t idx = floor_div(delta_ps - ns_to_ps(lo_ns), ns_to_ps(bin_ns));
    return static_cast<std::size_t>(std::clamp<std::int64_t>(idx, 0, static_cast<std::int64_t>(counts.size()) - 1));
}

std::uint64_t DeltaHistogram::total() const
{
    std::uint64_t s = 0;
    for (auto c : counts) {
        s += c;
    }
    return s;
}

void AccumulatorConfig::validate() const
{
    if (windows.empty() || windows.size() > kMaxWindows) {
        throw ConfigError("analysis.windows: need between 1 and 32 windows");
    }
    for (const auto& w : windows) {
        w.validate();
    }
    reference.validate();
    if (max_lag < 5) {
        throw ConfigError("analysis.max_lag: must be at least 5");
    }
    if (!(histogram_bin_ns > 0.0)) {
        throw ConfigError("analysis.histogram_bin_ns: must be positive");
    }
}

CorrelationAccumulator::CorrelationAccumulator(AccumulatorConfig config)
    : config_(std::move(config)), histogram_(config_.histogram_bin_ns, config_.windows.at(0).length_ns)
{
    config_.validate();
    const auto L = static_cast<std::size_t>(config_.max_lag);
    windows_.resize(config_.windows.size());
    for (auto& w : windows_) {
        w.lag_counts.assign(2 * L + 1, 0);
    }
    ring_.assign(L, 0);
    head_.reserve(L);
}

void CorrelationAccumulator::push(const TimestampRecord& rec)
{
    if (!open_ || rec.trial_index != current_trial_) {
        if (open_) {
            close_trial();
        }
        open_ = true;
        current_trial_ = rec.trial_index;
        herald_ = false;
        anchors_.clear();
        hits_.clear();
    }
    if (rec.channel == Channel::spad1) {
        herald_ = true;
    } else if (rec.channel == Channel::marker) {
        anchors_.push_back(rec.time_ps);
    }
    if (rec.channel == config_.channel_a || rec.channel == config_.channel_b) {
        hits_.push_back({rec.channel, rec.time_ps});
    }
}

void CorrelationAccumulator::finish()
{
    if (open_) {
        close_trial();
        open_ = false;
    }
}

void CorrelationAccumulator::close_trial()
{
    if (!herald_) {
        return;
    }
    if (anchors_.empty()) {
        anchors_.push_back(0);
    }
    std::sort(anchors_.begin(), anchors_.end());

    std::uint64_t mask = 0;
    std::int64_t first_a = 0;
    std::int64_t first_b = 0;
    for (const auto& h : hits_) {
        std::size_t slot = anchors_.size();
        for (std::size_t s = 0; s < anchors_.size() && anchors_[s] <= h.time_ps; ++s) {
            slot = s;
        }
        if (slot == anchors_.size()) {
            continue;  // before the first pulse
        }
        const auto rel = static_cast<std::int64_t>(h.time_ps - anchors_[slot]);
        if (config_.reference.contains_ps(rel)) {
            ++reference_detections_;
        }
        const bool is_a = h.channel == config_.channel_a;
        for (std::size_t w = 0; w < config_.windows.size(); ++w) {
            if (!config_.windows[w].contains_ps(rel)) {
                continue;
            }
            auto& wc = windows_[w];
            ++wc.detections;
            ++wc.slot_detections[std::min<std::size_t>(slot, 1)];
            const std::uint64_t bit = std::uint64_t{1} << (2 * w + (is_a ? 0 : 1));
            if (is_a) {
                ++wc.singles_a;
            } else {
                ++wc.singles_b;
            }
            if (w == 0 && (mask & bit) == 0) {
                (is_a ? first_a : first_b) = rel;
            }
            mask |= bit;
        }
    }
    if ((mask & 3) == 3) {
        ++histogram_.counts[histogram_.bin_of(first_b - first_a)];
    }
    add_mask(mask);
}

void CorrelationAccumulator::add_mask(std::uint64_t mask)
{
    const auto L = static_cast<std::size_t>(config_.max_lag);
    auto tally = [this](std::uint64_t bits, std::size_t lag_index) {
        while (bits != 0) {
            const int b = std::countr_zero(bits);
            ++windows_[static_cast<std::size_t>(b / 2)].lag_counts[lag_index];
            bits &= bits - 1;
        }
    };
    tally(mask & (mask >> 1) & kEvenBits, L);
    for (std::size_t k = 1; k <= L; ++k) {
        const std::uint64_t prev = ring_[(ring_pos_ + L - k) % L];
        if ((prev | mask) == 0) {
            continue;
        }
        // a in the earlier trial, b now: lag +k.
        tally(prev & (mask >> 1) & kEvenBits, L + k);
        tally(mask & (prev >> 1) & kEvenBits, L - k);
    }
    if (head_.size() < L) {
        head_.push_back(mask);
    }
    ring_[ring_pos_] = mask;
    ring_pos_ = (ring_pos_ + 1) % L;
    ++trials_;
}

void CorrelationAccumulator::merge(const CorrelationAccumulator& later)
{
    if (open_ || later.open_) {
        throw Error("merge: finish() both accumulators first");
    }
    if (!same_config(config_, later.config_)) {
        throw Error("merge: accumulator configurations differ");
    }
    const auto L = static_cast<std::size_t>(config_.max_lag);
    auto tally = [this](std::uint64_t bits, std::size_t lag_index) {
        while (bits != 0) {
            const int b = std::countr_zero(bits);
            ++windows_[static_cast<std::size_t>(b / 2)].lag_counts[lag_index];
            bits &= bits - 1;
        }
    };
    // Oldest-to-newest tails of both shards.
    auto ordered_tail = [L](const CorrelationAccumulator& acc) {
        std::vector<std::uint64_t> out;
        const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(acc.trials_, L));
        for (std::size_t k = n; k >= 1; --k) {
            out.push_back(acc.ring_[(acc.ring_pos_ + L - k) % L]);
        }
        return out;
    };
    const auto mine = ordered_tail(*this);
    for (std::size_t k = 1; k <= mine.size(); ++k) {
        const std::uint64_t early = mine[mine.size() - k];
        for (std::size_t j = 0; j < later.head_.size() && k + j <= L; ++j) {
            const std::uint64_t late = later.head_[j];
            tally(early & (late >> 1) & kEvenBits, L + k + j);
            tally(late & (early >> 1) & kEvenBits, L - k - j);
        }
    }

    for (std::size_t w = 0; w < windows_.size(); ++w) {
        auto& dst = windows_[w];
        const auto& src = later.windows_[w];
        for (std::size_t i = 0; i < dst.lag_counts.size(); ++i) {
            dst.lag_counts[i] += src.lag_counts[i];
        }
        dst.detections += src.detections;
        dst.singles_a += src.singles_a;
        dst.singles_b += src.singles_b;
        dst.slot_detections[0] += src.slot_detections[0];
        dst.slot_detections[1] += src.slot_detections[1];
    }
    for (std::size_t i = 0; i < histogram_.counts.size(); ++i) {
        histogram_.counts[i] += later.histogram_.counts[i];
    }
    for (std::size_t j = 0; j < later.head_.size() && head_.size() < L; ++j) {
        head_.push_back(later.head_[j]);
    }
    auto tail = mine;
    const auto theirs = ordered_tail(later);
    tail.insert(tail.end(), theirs.begin(), theirs.end());
    if (tail.size() > L) {
        tail.erase(tail.begin(), tail.end() - static_cast<std::ptrdiff_t>(L));
    }
    ring_.assign(L, 0);
    std::copy(tail.begin(), tail.end(), ring_.begin());
    ring_pos_ = tail.size() % L;
    trials_ += later.trials_;
    reference_detections_ += later.reference_detections_;
}

SegmentedSink::SegmentedSink(std::vector<std::uint64_t> boundaries, const AccumulatorConfig& config)
    : boundaries_(std::move(boundaries))
{
    if (!std::is_sorted(boundaries_.begin(), boundaries_.end())) {
        throw ConfigError("segment boundaries must be ascending");
    }
    segments_.assign(boundaries_.size() + 1, CorrelationAccumulator(config));
}

void SegmentedSink::push(const TimestampRecord& rec)
{
    while (current_ < boundaries_.size() && rec.trial_index >= boundaries_[current_]) {
        ++current_;
    }
    segments_[current_].push(rec);
}

void SegmentedSink::finish()
{
    for (auto& s : segments_) {
        s.finish();
    }
}

G2Curve trial_g2(const CorrelationAccumulator& acc, std::size_t window)
{
    const auto& lags = acc.counts(window).lag_counts;
    const int L = acc.config().max_lag;
    double side = 0.0;
    for (int k = -L; k <= L; ++k) {
        if (k != 0) {
            side += static_cast<double>(lags[static_cast<std::size_t>(L + k)]);
        }
    }
    if (side <= 0.0) {
        throw InsufficientStatistics("insufficient statistics: no coincidences in the normalization lags");
    }
    G2Curve out;
    out.mean_side_counts = side / (2.0 * L);
    for (int k = -L; k <= L; ++k) {
        const auto c = static_cast<double>(lags[static_cast<std::size_t>(L + k)]);
        const double v = c / out.mean_side_counts;
        const double poisson = std::sqrt(std::max(c, 1.0)) / out.mean_side_counts;
        out.delays.push_back(k);
        out.values.push_back(v);
        out.errors.push_back(std::hypot(poisson, v / std::sqrt(side)));
    }
    out.zero_lag_counts = lags[static_cast<std::size_t>(L)];
    out.g2_zero = {out.values[static_cast<std::size_t>(L)], out.errors[static_cast<std::size_t>(L)]};
    return out;
}

Estimate heralded_autocorrelation(const CorrelationAccumulator& acc, std::size_t window)
{
    if (acc.trials() == 0) {
        throw InsufficientStatistics("insufficient statistics: stream holds no heralded trials");
    }
    return trial_g2(acc, window).g2_zero;
}

Estimate visibility(const Estimate& g2_i, const Estimate& g2_d)
{
    if (!(g2_d.value > 0.0)) {
        throw InsufficientStatistics("visibility: g2_d must be positive");
    }
    const double r = g2_i.value / g2_d.value;
    const double err = std::hypot(g2_i.error / g2_d.value, r * g2_d.error / g2_d.value);
    return {1.0 - r, err};
}

Estimate indistinguishability(const Estimate& v, const Estimate& g2n1, const Estimate& g2n2, const Estimate& x)
{
    if (!(x.value > 0.0)) {
        throw ConfigError("x: singles ratio must be positive");
    }
    const double factor = g2n1.value * x.value + g2n2.value / x.value + 2.0;
    const double eta = v.value * factor / 2.0;
    const double d_v = factor / 2.0;
    const double d_g1 = v.value * x.value / 2.0;
    const double d_g2 = v.value / (2.0 * x.value);
    const double d_x = v.value * (g2n1.value - g2n2.value / (x.value * x.value)) / 2.0;
    const double var = std::pow(d_v * v.error, 2) + std::pow(d_g1 * g2n1.error, 2) + std::pow(d_g2 * g2n2.error, 2) +
                       std::pow(d_x * x.error, 2);
    return {eta, std::sqrt(var)};
}

Estimate singles_ratio(const CorrelationAccumulator& dist, std::size_t window)
{
    const auto& wc = dist.counts(window);
    const auto n2 = static_cast<double>(wc.slot_detections[0]);
    const auto n1 = static_cast<double>(wc.slot_detections[1]);
    if (n1 <= 0.0 || n2 <= 0.0) {
        throw InsufficientStatistics("insufficient statistics: singles ratio needs counts from both pulses");
    }
    const double x = n1 / n2;
    return {x, x * std::sqrt(1.0 / n1 + 1.0 / n2)};
}

Estimate count_share(const CorrelationAccumulator& acc, std::size_t window)
{
    const auto n = static_cast<double>(acc.reference_detections());
    if (n <= 0.0) {
        throw InsufficientStatistics("insufficient statistics: no detections in the reference window");
    }
    const double s = static_cast<double>(acc.counts(window).detections) / n;
    return {s, std::sqrt(std::max(s * (1.0 - s), 0.0) / n)};
}

HomReport hom_report(const CorrelationAccumulator& indist, const CorrelationAccumulator& dist, std::size_t window,
                     const HomInputs& inputs)
{
    HomReport rep;
    rep.window = indist.config().windows.at(window);
    const auto gd = trial_g2(dist, window);
    const auto gi = trial_g2(indist, window);
    rep.g2_d = gd.g2_zero;
    rep.g2_i = gi.g2_zero;
    rep.coincidences_d = gd.zero_lag_counts;
    rep.coincidences_i = gi.zero_lag_counts;
    rep.visibility = visibility(rep.g2_i, rep.g2_d);
    rep.share = count_share(indist, window);
    rep.x = inputs.x ? *inputs.x : singles_ratio(dist, window);
    rep.g2n1 = inputs.g2n1;
    rep.g2n2 = inputs.g2n2;
    if (inputs.g2n1 && inputs.g2n2) {
        rep.eta = indistinguishability(rep.visibility, *inputs.g2n1, *inputs.g2n2, rep.x);
    }
    return rep;
}

std::vector<SweepRow> window_sweep(const CorrelationAccumulator& indist, const CorrelationAccumulator& dist,
                                   const HomInputs& inputs)
{
    std::vector<SweepRow> rows;
    for (std::size_t w = 0; w < indist.config().windows.size(); ++w) {
        SweepRow row;
        row.window = indist.config().windows[w];
        try {
            row.share = count_share(indist, w);
            const auto rep = hom_report(indist, dist, w, inputs);
            row.visibility = rep.visibility;
            row.eta = rep.eta;
        } catch (const InsufficientStatistics& e) {
            row.flagged = true;
            row.note = e.what();
        }
        rows.push_back(row);
    }
    return rows;
}

SweepRow interpolate_at_share(const std::vector<SweepRow>& rows, double share)
{
    std::vector<const SweepRow*> ok;
    for (const auto& r : rows) {
        if (!r.flagged && r.visibility) {
            ok.push_back(&r);
        }
    }
    std::sort(ok.begin(), ok.end(), [](const SweepRow* a, const SweepRow* b) { return a->share.value < b->share.value; });
    for (std::size_t i = 0; i + 1 < ok.size(); ++i) {
        const SweepRow& lo = *ok[i];
        const SweepRow& hi = *ok[i + 1];
        if (lo.share.value <= share && share <= hi.share.value && hi.share.value > lo.share.value) {
            const double f = (share - lo.share.value) / (hi.share.value - lo.share.value);
            auto lerp = [f](const Estimate& a, const Estimate& b) {
                return Estimate{a.value + f * (b.value - a.value), std::max(a.error, b.error)};
            };
            SweepRow out;
            out.window = {lo.window.offset_ns, lo.window.length_ns + f * (hi.window.length_ns - lo.window.length_ns)};
            out.share = {share, std::max(lo.share.error, hi.share.error)};
            out.visibility = lerp(*lo.visibility, *hi.visibility);
            if (lo.eta && hi.eta) {
                out.eta = lerp(*lo.eta, *hi.eta);
            }
            out.note = "interpolated";
            return out;
        }
    }
    throw InsufficientStatistics("no pair of sweep rows brackets the requested count share");
}

const DeltaHistogram& time_resolved_hom(const CorrelationAccumulator& acc) { return acc.histogram(); }

CorrelationAccumulator accumulate_file(const std::filesystem::path& path, const AccumulatorConfig& config)
{
    CorrelationAccumulator acc(config);
    TimestampReader reader(path);
    reader.drain(acc);
    acc.finish();
    return acc;
}

}  // namespace homduet::analysis
