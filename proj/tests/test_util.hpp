#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace testutil {

// Upper-tail probability of a chi-square statistic.
inline double chi2_p_value(double chi2, double dof)
{
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), chi2));
}

// Pearson chi-square of observed counts against expected counts; bins with
// expectation below min_expected are pooled into their neighbour.
struct Chi2Result {
    double chi2 = 0.0;
    int dof = 0;
    double p = 0.0;
};

inline Chi2Result pearson(const std::vector<double>& observed, const std::vector<double>& expected,
                          double min_expected = 5.0, int fitted_params = 0)
{
    Chi2Result r;
    double o = 0.0;
    double e = 0.0;
    int bins = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        o += observed[i];
        e += expected[i];
        if (e >= min_expected) {
            r.chi2 += (o - e) * (o - e) / e;
            ++bins;
            o = 0.0;
            e = 0.0;
        }
    }
    if (e > 0.0) {
        r.chi2 += (o - e) * (o - e) / e;
        ++bins;
    }
    r.dof = bins - 1 - fitted_params;
    r.p = chi2_p_value(r.chi2, r.dof);
    return r;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("homduet_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
