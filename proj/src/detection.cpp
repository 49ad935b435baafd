#include "homduet/detection.hpp"

#include "homduet/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace homduet::detection {

using photonics::Complex;

void DetectorConfig::validate() const
{
    if (!(efficiency_a >= 0.0 && efficiency_a <= 1.0)) {
        throw ConfigError("detector.efficiency_a: must be in [0, 1]");
    }
    if (!(efficiency_b >= 0.0 && efficiency_b <= 1.0)) {
        throw ConfigError("detector.efficiency_b: must be in [0, 1]");
    }
    if (!(dark_rate_hz >= 0.0)) {
        throw ConfigError("detector.dark_rate_hz: must be non-negative");
    }
    if (!(dead_time_ns >= 0.0)) {
        throw ConfigError("detector.dead_time_ns: must be non-negative");
    }
}

double bunching_probability(double eta)
{
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw ConfigError("eta: indistinguishability must be in [0, 1]");
    }
    return (1.0 + eta) / 2.0;
}

double expected_coincidence_prob(const sources::NumberStats& node1, const sources::NumberStats& node2, double eta)
{
    // Re-validates the invariants of possibly hand-assembled stats.
    const sources::NumberStats s1(node1.p1, node1.p2);
    const sources::NumberStats s2(node2.p1, node2.p2);
    return s1.p1 * s2.p1 * (1.0 - bunching_probability(eta)) + 0.5 * s1.p2 + 0.5 * s2.p2;
}

ClosedFormG2 closed_form_g2(double x, double g2n1, double g2n2, double eta)
{
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw ConfigError("x: singles ratio must be positive");
    }
    if (!(g2n1 >= 0.0) || !(g2n2 >= 0.0)) {
        throw ConfigError("g2n1 / g2n2: autocorrelations must be non-negative");
    }
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw ConfigError("eta: indistinguishability must be in [0, 1]");
    }
    const double prefactor = 4.0 * x / ((1.0 + x) * (1.0 + x));
    const double multi = 0.25 * g2n1 * x + 0.25 * g2n2 / x;
    ClosedFormG2 out;
    out.g2_d = prefactor * (0.5 + multi);
    out.g2_i = prefactor * ((1.0 - eta) / 2.0 + multi);
    out.visibility = 1.0 - out.g2_i / out.g2_d;
    return out;
}

HomSampler::HomSampler(photonics::PhotonStateMixture node1, photonics::PhotonStateMixture node2)
    : node1_(std::move(node1)), node2_(std::move(node2)), grid_(node1_.grid())
{
    if (!(node2_.grid() == grid_)) {
        throw ConfigError("hom sampler: node states are defined on different time grids");
    }
    comp1_ = build_components(node1_);
    comp2_ = build_components(node2_);
    const std::size_t n = grid_.n_bins;
    pairs_.reserve(comp1_.size() * comp2_.size());
    for (std::size_t i = 0; i < comp1_.size(); ++i) {
        for (std::size_t j = 0; j < comp2_.size(); ++j) {
            const auto& psi1 = comp1_[i].psi;
            const auto& psi2 = comp2_[j].psi;
            Complex ov = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                ov += std::conj(psi1[k]) * psi2[k];
            }
            ov *= grid_.dt;
            PairTables pt;
            pt.overlap = ov;
            pt.coincidence_prob = 0.5 * (1.0 - std::norm(ov));
            if (pt.coincidence_prob < 1e-12) {
                pt.coincidence_prob = 0.0;
            }
            pt.marginal_cdf.resize(n);
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double m =
                    std::norm(psi1[k]) + std::norm(psi2[k]) - 2.0 * std::real(psi1[k] * std::conj(psi2[k]) * ov);
                acc += std::max(m, 0.0);
                pt.marginal_cdf[k] = acc;
            }
            pairs_.push_back(std::move(pt));
        }
    }
}

std::vector<HomSampler::Component> HomSampler::build_components(const photonics::PhotonStateMixture& state)
{
    std::vector<Component> out;
    double cum = 0.0;
    for (const auto& c : state.components()) {
        Component comp;
        cum += c.weight;
        comp.cumulative_weight = cum;
        const std::size_t n = c.mode.grid().n_bins;
        comp.psi.resize(n);
        comp.intensity_cdf.resize(n);
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            comp.psi[k] = c.mode.amplitude(k);
            acc += c.mode.intensity(k);
            comp.intensity_cdf[k] = acc;
        }
        out.push_back(std::move(comp));
    }
    out.back().cumulative_weight = 1.0;
    return out;
}

std::size_t HomSampler::pick_component(const std::vector<Component>& comps, Rng& rng)
{
    if (comps.size() == 1) {
        return 0;
    }
    const double u = rng.uniform();
    for (std::size_t i = 0; i < comps.size(); ++i) {
        if (u < comps[i].cumulative_weight) {
            return i;
        }
    }
    return comps.size() - 1;
}

namespace {

std::size_t pick_bin(const std::vector<double>& cdf, double u)
{
    const double target = u * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

}  // namespace

double HomSampler::sample_time(const Component& c, Rng& rng) const
{
    return grid_.time(pick_bin(c.intensity_cdf, rng.uniform())) - grid_.t_start;
}

double HomSampler::coincidence_probability() const
{
    double total = 0.0;
    double prev_i = 0.0;
    for (std::size_t i = 0; i < comp1_.size(); ++i) {
        const double wi = comp1_[i].cumulative_weight - prev_i;
        prev_i = comp1_[i].cumulative_weight;
        double prev_j = 0.0;
        for (std::size_t j = 0; j < comp2_.size(); ++j) {
            const double wj = comp2_[j].cumulative_weight - prev_j;
            prev_j = comp2_[j].cumulative_weight;
            total += wi * wj * pairs_[i * comp2_.size() + j].coincidence_prob;
        }
    }
    return total;
}

void HomSampler::sample_coincidence(std::size_t i, std::size_t j, Rng& rng, double& t_a, double& t_b) const
{
    const auto& pt = pairs_[i * comp2_.size() + j];
    const auto& psi1 = comp1_[i].psi;
    const auto& psi2 = comp2_[j].psi;
    const std::size_t k1 = pick_bin(pt.marginal_cdf, rng.uniform());

    // Conditional row |psi1(t1) psi2(t2) - psi1(t2) psi2(t1)|^2 over t2.
    thread_local std::vector<double> row;
    row.resize(grid_.n_bins);
    double acc = 0.0;
    for (std::size_t k2 = 0; k2 < grid_.n_bins; ++k2) {
        acc += std::norm(psi1[k1] * psi2[k2] - psi1[k2] * psi2[k1]);
        row[k2] = acc;
    }
    const std::size_t k2 = pick_bin(row, rng.uniform());
    t_a = grid_.time(k1) - grid_.t_start;
    t_b = grid_.time(k2) - grid_.t_start;
}

HomOutcome HomSampler::sample(const sources::TrialEmission& e1, const sources::TrialEmission& e2,
                              const DetectorConfig& det, Rng& rng, double dark_window_ns) const
{
    if (e1.photons < 0 || e1.photons > 2 || e2.photons < 0 || e2.photons > 2) {
        throw ConfigError("sample_hom_trial: photon counts above two violate the truncation contract");
    }
    struct Photon {
        Port port;
        double time_ns;
    };
    boost::container::static_vector<Photon, 4> photons;
    auto random_port = [&rng] { return rng.uniform() < 0.5 ? Port::a : Port::b; };

    const bool both = e1.photons > 0 && e2.photons > 0;
    const double separation = std::abs(e1.emission_time_ns - e2.emission_time_ns);
    const bool overlapping = both && separation < 1e-6;
    if (both && !overlapping && separation < grid_.span()) {
        throw ConfigError("sample_hom_trial: partially overlapping emissions are not supported");
    }

    if (overlapping && e1.photons == 1 && e2.photons == 1) {
        const std::size_t i = pick_component(comp1_, rng);
        const std::size_t j = pick_component(comp2_, rng);
        if (rng.uniform() < pairs_[i * comp2_.size() + j].coincidence_prob) {
            double t_a = 0.0;
            double t_b = 0.0;
            sample_coincidence(i, j, rng, t_a, t_b);
            photons.push_back({Port::a, e1.emission_time_ns + t_a});
            photons.push_back({Port::b, e1.emission_time_ns + t_b});
        } else {
            const Port port = random_port();
            photons.push_back({port, e1.emission_time_ns + sample_time(comp1_[i], rng)});
            photons.push_back({port, e2.emission_time_ns + sample_time(comp2_[j], rng)});
        }
    } else {
        // No two-photon interference: separated pulses, single-source pairs and
        // the rare three/four photon events route independently.
        if (e1.photons > 0) {
            const auto& c = comp1_[pick_component(comp1_, rng)];
            for (int k = 0; k < e1.photons; ++k) {
                const Port port = random_port();
                photons.push_back({port, e1.emission_time_ns + sample_time(c, rng)});
            }
        }
        if (e2.photons > 0) {
            const auto& c = comp2_[pick_component(comp2_, rng)];
            for (int k = 0; k < e2.photons; ++k) {
                const Port port = random_port();
                photons.push_back({port, e2.emission_time_ns + sample_time(c, rng)});
            }
        }
    }

    HomOutcome out;
    for (const auto& p : photons) {
        const double eff = p.port == Port::a ? det.efficiency_a : det.efficiency_b;
        if (rng.uniform() < eff) {
            out.detections.push_back({p.port, p.time_ns});
        }
    }
    if (det.dark_rate_hz > 0.0) {
        const double mean = det.dark_rate_hz * dark_window_ns * 1e-9;
        for (Port port : {Port::a, Port::b}) {
            std::poisson_distribution<int> dist(mean);
            const int n = dist(rng);
            for (int k = 0; k < n && out.detections.size() < out.detections.capacity(); ++k) {
                out.detections.push_back({port, rng.uniform() * dark_window_ns});
            }
        }
    }
    std::sort(out.detections.begin(), out.detections.end(),
              [](const Detection& x, const Detection& y) { return x.time_ns < y.time_ns; });
    if (det.dead_time_ns > 0.0 && out.detections.size() > 1) {
        DetectionList kept;
        double last_a = -1e300;
        double last_b = -1e300;
        for (const auto& d : out.detections) {
            double& last = d.port == Port::a ? last_a : last_b;
            if (d.time_ns - last >= det.dead_time_ns) {
                kept.push_back(d);
                last = d.time_ns;
            }
        }
        out.detections = kept;
    }
    return out;
}

HomOutcome sample_hom_trial(const sources::TrialEmission& e1, const sources::TrialEmission& e2,
                            const photonics::PhotonStateMixture& state1, const photonics::PhotonStateMixture& state2,
                            const DetectorConfig& det, Rng& rng)
{
    return HomSampler(state1, state2).sample(e1, e2, det, rng);
}

}  // namespace homduet::detection
