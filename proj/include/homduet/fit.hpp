#pragma once

#include "homduet/error.hpp"

#include <vector>

namespace homduet::analysis {

struct FitPoint {
    double x = 0.0;
    double y = 0.0;
    // 1-sigma uncertainty of y. Zero means unweighted; parameter errors are
    // then scaled by the residual scatter.
    double sigma = 0.0;
};

struct FitReport {
    double center = 0.0;
    // FWHM for the Lorentzian, standard deviation for the Gaussian.
    double width = 0.0;
    double amplitude = 0.0;
    double offset = 0.0;
    Estimate center_est;
    Estimate width_est;
    Estimate amplitude_est;
    Estimate offset_est;
    double chi2 = 0.0;
    int dof = 0;
    int iterations = 0;
    bool converged = false;
};

/// offset + amplitude / (1 + (2 (x - center) / fwhm)^2). Amplitude is
/// negative for a dip. Throws FitError on non-convergence, a singular
/// Jacobian or an amplitude compatible with zero.
FitReport lorentzian_fit(const std::vector<FitPoint>& points);

/// offset + amplitude exp(-(x - center)^2 / (2 sigma^2)).
FitReport gaussian_fit(const std::vector<FitPoint>& points);

double lorentzian(double x, double center, double fwhm, double amplitude, double offset);
double gaussian(double x, double center, double sigma, double amplitude, double offset);

}  // namespace homduet::analysis
