#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace homduet::photonics {

using Complex = std::complex<double>;

/// Uniform time axis in nanoseconds. Samples sit at bin centers
/// t_i = t_start + (i + 1/2) * dt.
struct TimeGrid {
    double t_start = 0.0;
    double dt = 2.0;
    std::size_t n_bins = 400;

    TimeGrid() = default;
    TimeGrid(double t_start_ns, double dt_ns, std::size_t bins);

    double time(std::size_t i) const { return t_start + (static_cast<double>(i) + 0.5) * dt; }
    double t_end() const { return t_start + dt * static_cast<double>(n_bins); }
    double span() const { return dt * static_cast<double>(n_bins); }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Default analysis grid: 0-800 ns in 2 ns bins.
TimeGrid default_grid();

/// A single-photon temporal mode: a unit-norm complex envelope on a grid plus
/// a frequency offset. The offset is applied as exp(i 2 pi detuning t) when
/// amplitudes are evaluated, never baked into the stored envelope.
class TemporalMode {
public:
    TemporalMode(TimeGrid grid, std::vector<Complex> envelope, double detuning_mhz = 0.0);

    const TimeGrid& grid() const { return grid_; }
    double detuning_mhz() const { return detuning_mhz_; }
    std::span<const Complex> envelope() const { return *envelope_; }

    // Amplitude including the detuning phase.
    Complex amplitude(std::size_t i) const;
    double intensity(std::size_t i) const { return std::norm((*envelope_)[i]); }

    // Same envelope, different frequency offset. Shares storage.
    TemporalMode with_detuning(double detuning_mhz) const;

    // Sum |psi|^2 dt over the grid.
    double norm() const;

private:
    TimeGrid grid_;
    std::shared_ptr<const std::vector<Complex>> envelope_;
    double detuning_mhz_ = 0.0;
};

struct MixtureComponent {
    double weight;
    TemporalMode mode;
};

/// Incoherent mixture of pure temporal modes.
class PhotonStateMixture {
public:
    explicit PhotonStateMixture(std::vector<MixtureComponent> components);
    static PhotonStateMixture pure(TemporalMode mode);

    const std::vector<MixtureComponent>& components() const { return components_; }
    std::size_t size() const { return components_.size(); }
    const TimeGrid& grid() const { return components_.front().mode.grid(); }

    // Every component's detuning moved by delta.
    PhotonStateMixture shifted(double delta_mhz) const;

private:
    std::vector<MixtureComponent> components_;
};

/// Non-negative density over (t1, t2) on a shared grid, row-major in t1.
struct Density2D {
    TimeGrid grid;
    std::vector<double> values;
    double total_mass = 0.0;

    double at(std::size_t i1, std::size_t i2) const { return values[i1 * grid.n_bins + i2]; }
};

/// Sine^2 rise over rise_ns to the peak, then exponential intensity decay with
/// 1/e time decay_ns. The envelope is real and renormalized on the grid; an
/// error is raised if more than max_truncation of the untruncated mass falls
/// outside the grid.
TemporalMode make_waveform(double rise_ns, double decay_ns, const TimeGrid& grid,
                           double max_truncation = 0.02);

/// <a|b> = sum conj(a) b dt including detuning phases.
Complex mode_overlap(const TemporalMode& a, const TemporalMode& b);

/// Tr(rho1 rho2) = sum_ij w_i v_j |<m_i|n_j>|^2.
double state_overlap(const PhotonStateMixture& rho1, const PhotonStateMixture& rho2);

double purity(const PhotonStateMixture& rho);

/// Two-photon coincidence density for one photon on each beamsplitter port,
/// t1 on port a and t2 on port b.
Density2D joint_coincidence_density(const TemporalMode& m1, const TemporalMode& m2, bool interfering);

/// Gauss-Hermite discretization of a Gaussian detuning law with standard
/// deviation sigma_mhz around the base mode's detuning. sigma = 0 gives the
/// pure state.
PhotonStateMixture detuning_mixture(const TemporalMode& base, double sigma_mhz, std::size_t components = 9);

/// Detuning-jitter width whose mixture has the requested overlap with
/// `reference`. Solved by bisection; throws if the target is not reachable
/// with the given number of components.
double jitter_for_overlap(const PhotonStateMixture& reference, const TemporalMode& base, double target,
                          std::size_t components = 9);

/// Relative detuning at which |<base|base shifted>|^2 equals target.
double detuning_for_overlap(const TemporalMode& base, double target);

/// Fraction of a mode's intensity on [t_start + offset, t_start + offset + length).
double intensity_share(const TemporalMode& mode, double offset_ns, double length_ns);

}  // namespace homduet::photonics
