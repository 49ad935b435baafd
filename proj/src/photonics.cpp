#include "homduet/photonics.hpp"

#include "homduet/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace homduet::photonics {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// MHz * ns -> cycles
constexpr double kMhzNs = 1e-3;

void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what)
{
    if (!(a == b)) {
        throw ConfigError(std::string(what) + ": modes are defined on different time grids");
    }
}

// Untruncated integral of the sine^2-rise / exponential-decay intensity on [0, s].
double waveform_mass(double rise, double decay, double s)
{
    double mass = 0.0;
    if (rise > 0.0) {
        const double r = std::min(s, rise);
        mass += r / 2.0 - rise / (2.0 * std::numbers::pi) * std::sin(std::numbers::pi * r / rise);
    }
    if (s > rise) {
        mass += decay * (1.0 - std::exp(-(s - rise) / decay));
    }
    return mass;
}

double waveform_intensity(double rise, double decay, double t)
{
    if (t < 0.0) {
        return 0.0;
    }
    if (t < rise) {
        const double s = std::sin(0.5 * std::numbers::pi * t / rise);
        return s * s;
    }
    return std::exp(-(t - rise) / decay);
}

}  // namespace

TimeGrid::TimeGrid(double t_start_ns, double dt_ns, std::size_t bins) : t_start(t_start_ns), dt(dt_ns), n_bins(bins)
{
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw ConfigError("grid.dt_ns: must be positive");
    }
    if (n_bins < 2) {
        throw ConfigError("grid.n_bins: must be at least 2");
    }
}

TimeGrid default_grid() { return TimeGrid(0.0, 2.0, 400); }

TemporalMode::TemporalMode(TimeGrid grid, std::vector<Complex> envelope, double detuning_mhz)
    : grid_(grid), detuning_mhz_(detuning_mhz)
{
    if (envelope.size() != grid_.n_bins) {
        throw ConfigError("temporal mode: envelope length does not match the grid");
    }
    for (const auto& a : envelope) {
        if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) {
            throw ConfigError("temporal mode: envelope contains non-finite values");
        }
    }
    envelope_ = std::make_shared<const std::vector<Complex>>(std::move(envelope));
    if (std::abs(norm() - 1.0) > 1e-6) {
        throw ConfigError("temporal mode: envelope is not unit-norm");
    }
}

Complex TemporalMode::amplitude(std::size_t i) const
{
    const Complex a = (*envelope_)[i];
    if (detuning_mhz_ == 0.0) {
        return a;
    }
    return a * std::polar(1.0, kTwoPi * detuning_mhz_ * kMhzNs * grid_.time(i));
}

TemporalMode TemporalMode::with_detuning(double detuning_mhz) const
{
    TemporalMode copy = *this;
    copy.detuning_mhz_ = detuning_mhz;
    return copy;
}

double TemporalMode::norm() const
{
    double sum = 0.0;
    for (const auto& a : *envelope_) {
        sum += std::norm(a);
    }
    return sum * grid_.dt;
}

PhotonStateMixture::PhotonStateMixture(std::vector<MixtureComponent> components) : components_(std::move(components))
{
    if (components_.empty()) {
        throw ConfigError("photon state: mixture needs at least one component");
    }
    double total = 0.0;
    for (const auto& c : components_) {
        if (!(c.weight >= 0.0)) {
            throw ConfigError("photon state: negative mixture weight");
        }
        require_same_grid(c.mode.grid(), components_.front().mode.grid(), "photon state");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("photon state: mixture weights must sum to 1");
    }
}

PhotonStateMixture PhotonStateMixture::pure(TemporalMode mode)
{
    return PhotonStateMixture({MixtureComponent{1.0, std::move(mode)}});
}

PhotonStateMixture PhotonStateMixture::shifted(double delta_mhz) const
{
    std::vector<MixtureComponent> out;
    out.reserve(components_.size());
    for (const auto& c : components_) {
        out.push_back({c.weight, c.mode.with_detuning(c.mode.detuning_mhz() + delta_mhz)});
    }
    return PhotonStateMixture(std::move(out));
}

TemporalMode make_waveform(double rise_ns, double decay_ns, const TimeGrid& grid, double max_truncation)
{
    if (!(rise_ns >= 0.0)) {
        throw ConfigError("waveform.rise_ns: must be non-negative");
    }
    if (!(decay_ns > 0.0)) {
        throw ConfigError("waveform.decay_ns: must be positive");
    }
    const double total = waveform_mass(rise_ns, decay_ns, 1e300);
    const double inside = waveform_mass(rise_ns, decay_ns, grid.span());
    const double truncated = (total - inside) / total;
    if (truncated > max_truncation) {
        throw ConfigError("waveform truncated beyond tolerance: " + std::to_string(truncated) +
                          " of the intensity lies past the grid end");
    }
    std::vector<Complex> env(grid.n_bins);
    double sum = 0.0;
    for (std::size_t i = 0; i < grid.n_bins; ++i) {
        const double intensity = waveform_intensity(rise_ns, decay_ns, grid.time(i) - grid.t_start);
        env[i] = std::sqrt(intensity);
        sum += intensity;
    }
    const double scale = 1.0 / std::sqrt(sum * grid.dt);
    for (auto& a : env) {
        a *= scale;
    }
    return TemporalMode(grid, std::move(env));
}

Complex mode_overlap(const TemporalMode& a, const TemporalMode& b)
{
    require_same_grid(a.grid(), b.grid(), "mode_overlap");
    const TimeGrid& g = a.grid();
    const double rel = b.detuning_mhz() - a.detuning_mhz();
    const auto ea = a.envelope();
    const auto eb = b.envelope();
    Complex sum = 0.0;
    if (rel == 0.0) {
        for (std::size_t i = 0; i < g.n_bins; ++i) {
            sum += std::conj(ea[i]) * eb[i];
        }
    } else {
        // Phase advanced by recurrence, re-anchored every 64 bins.
        const Complex step = std::polar(1.0, kTwoPi * rel * kMhzNs * g.dt);
        Complex phase;
        for (std::size_t i = 0; i < g.n_bins; ++i) {
            if (i % 64 == 0) {
                phase = std::polar(1.0, kTwoPi * rel * kMhzNs * g.time(i));
            }
            sum += std::conj(ea[i]) * eb[i] * phase;
            phase *= step;
        }
    }
    return sum * g.dt;
}

double state_overlap(const PhotonStateMixture& rho1, const PhotonStateMixture& rho2)
{
    require_same_grid(rho1.grid(), rho2.grid(), "state_overlap");
    double total = 0.0;
    for (const auto& c1 : rho1.components()) {
        for (const auto& c2 : rho2.components()) {
            total += c1.weight * c2.weight * std::norm(mode_overlap(c1.mode, c2.mode));
        }
    }
    return std::clamp(total, 0.0, 1.0);
}

double purity(const PhotonStateMixture& rho) { return state_overlap(rho, rho); }

Density2D joint_coincidence_density(const TemporalMode& m1, const TemporalMode& m2, bool interfering)
{
    require_same_grid(m1.grid(), m2.grid(), "joint_coincidence_density");
    const TimeGrid& g = m1.grid();
    const std::size_t n = g.n_bins;
    std::vector<Complex> psi1(n), psi2(n);
    for (std::size_t i = 0; i < n; ++i) {
        psi1[i] = m1.amplitude(i);
        psi2[i] = m2.amplitude(i);
    }
    Density2D out{g, std::vector<double>(n * n), 0.0};
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double v;
            if (interfering) {
                v = std::norm(psi1[i] * psi2[j] - psi1[j] * psi2[i]) / 4.0;
            } else {
                v = (std::norm(psi1[i]) * std::norm(psi2[j]) + std::norm(psi1[j]) * std::norm(psi2[i])) / 4.0;
            }
            out.values[i * n + j] = v;
            sum += v;
        }
    }
    out.total_mass = sum * g.dt * g.dt;
    return out;
}

PhotonStateMixture detuning_mixture(const TemporalMode& base, double sigma_mhz, std::size_t components)
{
    if (!(sigma_mhz >= 0.0)) {
        throw ConfigError("spectral jitter: sigma must be non-negative");
    }
    if (sigma_mhz == 0.0 || components <= 1) {
        return PhotonStateMixture::pure(base);
    }
    // Golub-Welsch for the probabilists' Hermite weight exp(-x^2/2).
    const auto k = static_cast<Eigen::Index>(components);
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 1; i < k; ++i) {
        jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    const Eigen::VectorXd nodes = solver.eigenvalues();
    std::vector<MixtureComponent> out;
    out.reserve(components);
    double total = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
        const double v0 = solver.eigenvectors()(0, i);
        total += v0 * v0;
    }
    for (Eigen::Index i = 0; i < k; ++i) {
        const double v0 = solver.eigenvectors()(0, i);
        out.push_back({v0 * v0 / total, base.with_detuning(base.detuning_mhz() + sigma_mhz * nodes(i))});
    }
    return PhotonStateMixture(std::move(out));
}

double jitter_for_overlap(const PhotonStateMixture& reference, const TemporalMode& base, double target,
                          std::size_t components)
{
    if (!(target > 0.0 && target <= 1.0)) {
        throw ConfigError("jitter_for_overlap: target overlap must be in (0, 1]");
    }
    auto overlap_at = [&](double sigma) {
        return state_overlap(reference, detuning_mixture(base, sigma, components));
    };
    if (overlap_at(0.0) <= target) {
        return 0.0;
    }
    double hi = 0.05;
    while (overlap_at(hi) > target) {
        hi *= 2.0;
        if (hi > 1e3) {
            throw ConfigError("jitter_for_overlap: target overlap not reachable");
        }
    }
    double lo = 0.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (overlap_at(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double detuning_for_overlap(const TemporalMode& base, double target)
{
    if (!(target > 0.0 && target <= 1.0)) {
        throw ConfigError("detuning_for_overlap: target overlap must be in (0, 1]");
    }
    auto overlap_at = [&](double delta) {
        return std::norm(mode_overlap(base, base.with_detuning(base.detuning_mhz() + delta)));
    };
    if (target >= 1.0) {
        return 0.0;
    }
    double lo = 0.0;
    double hi = 0.01;
    while (overlap_at(hi) > target) {
        lo = hi;
        hi *= 1.5;
        if (hi > 1e4) {
            throw ConfigError("detuning_for_overlap: target overlap not reachable");
        }
    }
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (overlap_at(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double intensity_share(const TemporalMode& mode, double offset_ns, double length_ns)
{
    const TimeGrid& g = mode.grid();
    double inside = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < g.n_bins; ++i) {
        const double rel = g.time(i) - g.t_start;
        const double w = mode.intensity(i);
        total += w;
        if (rel >= offset_ns && rel < offset_ns + length_ns) {
            inside += w;
        }
    }
    return inside / total;
}

}  // namespace homduet::photonics
