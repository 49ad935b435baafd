#pragma once

#include "homduet/photonics.hpp"
#include "homduet/rng.hpp"
#include "homduet/sources.hpp"

#include <boost/container/static_vector.hpp>

#include <vector>

namespace homduet::detection {

struct DetectorConfig {
    double efficiency_a = 0.6;
    double efficiency_b = 0.6;
    double dark_rate_hz = 0.0;
    double dead_time_ns = 0.0;

    void validate() const;
};

enum class Port : unsigned char { a, b };

struct Detection {
    Port port;
    double time_ns;
};

// Up to four photons plus a few dark counts per trial.
using DetectionList = boost::container::static_vector<Detection, 8>;

struct HomOutcome {
    DetectionList detections;
};

/// (1 + eta) / 2 for a 50/50 beamsplitter.
double bunching_probability(double eta);

/// Probability of one photon on each output port per trial, to first order in
/// the two-photon terms.
double expected_coincidence_prob(const sources::NumberStats& node1, const sources::NumberStats& node2, double eta);

struct ClosedFormG2 {
    double g2_d = 0.0;
    double g2_i = 0.0;
    double visibility = 0.0;
};

/// Normalized coincidence rates for distinguishable and indistinguishable
/// photons and the visibility they imply. x is the node-1 / node-2 ratio of
/// single-photon arrival probabilities.
ClosedFormG2 closed_form_g2(double x, double g2n1, double g2n2, double eta);

/// Beamsplitter + detector sampler for one pair of photon states.
///
/// Precomputes component overlaps and the t1-marginals of the interfering
/// coincidence density so that a (1,1) coincidence costs O(n_bins): the bin on
/// port a is drawn from the marginal, the port-b bin from the conditional row.
/// Photon times are the emission time plus the grid time relative to t_start.
class HomSampler {
public:
    HomSampler(photonics::PhotonStateMixture node1, photonics::PhotonStateMixture node2);

    const photonics::PhotonStateMixture& node1() const { return node1_; }
    const photonics::PhotonStateMixture& node2() const { return node2_; }

    /// Probability that a (1,1) overlapping pair ends up on different ports.
    double coincidence_probability() const;

    /// Photons from the two emissions through the beamsplitter and detectors.
    /// Photon counts must be 0, 1 or 2. Emissions at the same time interfere;
    /// emissions separated by at least the grid span are treated as
    /// orthogonal; partial overlap is rejected. Dark counts are spread
    /// uniformly over [0, dark_window_ns).
    HomOutcome sample(const sources::TrialEmission& e1, const sources::TrialEmission& e2, const DetectorConfig& det,
                      Rng& rng, double dark_window_ns = 5400.0) const;

private:
    struct Component {
        double cumulative_weight;
        std::vector<photonics::Complex> psi;
        std::vector<double> intensity_cdf;
    };
    struct PairTables {
        double coincidence_prob;
        photonics::Complex overlap;
        std::vector<double> marginal_cdf;
    };

    static std::vector<Component> build_components(const photonics::PhotonStateMixture& state);
    static std::size_t pick_component(const std::vector<Component>& comps, Rng& rng);
    double sample_time(const Component& c, Rng& rng) const;
    void sample_coincidence(std::size_t i, std::size_t j, Rng& rng, double& t_a, double& t_b) const;

    photonics::PhotonStateMixture node1_;
    photonics::PhotonStateMixture node2_;
    photonics::TimeGrid grid_;
    std::vector<Component> comp1_;
    std::vector<Component> comp2_;
    std::vector<PairTables> pairs_;  // row-major [i * comp2_.size() + j]
};

/// Convenience wrapper building a sampler for a single trial.
HomOutcome sample_hom_trial(const sources::TrialEmission& e1, const sources::TrialEmission& e2,
                            const photonics::PhotonStateMixture& state1, const photonics::PhotonStateMixture& state2,
                            const DetectorConfig& det, Rng& rng);

}  // namespace homduet::detection
