#include "homduet/fit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace homduet::analysis {

namespace {

using Vec4 = Eigen::Vector4d;

// Model value and gradient with respect to (center, width, amplitude, offset).
using Model = std::function<double(double x, const Vec4& p, Vec4& grad)>;

double lorentz_eval(double x, const Vec4& p, Vec4& g)
{
    const double u = 2.0 * (x - p[0]) / p[1];
    const double den = 1.0 + u * u;
    const double shape = 1.0 / den;
    const double d_shape_du = -2.0 * u / (den * den);
    g[0] = p[2] * d_shape_du * (-2.0 / p[1]);
    g[1] = p[2] * d_shape_du * (-u / p[1]);
    g[2] = shape;
    g[3] = 1.0;
    return p[3] + p[2] * shape;
}

double gauss_eval(double x, const Vec4& p, Vec4& g)
{
    const double u = (x - p[0]) / p[1];
    const double shape = std::exp(-0.5 * u * u);
    g[0] = p[2] * shape * u / p[1];
    g[1] = p[2] * shape * u * u / p[1];
    g[2] = shape;
    g[3] = 1.0;
    return p[3] + p[2] * shape;
}

// Peak-or-dip initial guess: offset from the edges, amplitude and center
// from the most deviant point, width from the half-height crossing.
Vec4 initial_guess(std::vector<FitPoint> pts, double width_per_hwhm)
{
    std::sort(pts.begin(), pts.end(), [](const FitPoint& a, const FitPoint& b) { return a.x < b.x; });
    const std::size_t edge = std::max<std::size_t>(1, pts.size() / 8);
    double offset = 0.0;
    for (std::size_t i = 0; i < edge; ++i) {
        offset += pts[i].y + pts[pts.size() - 1 - i].y;
    }
    offset /= static_cast<double>(2 * edge);
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (std::abs(pts[i].y - offset) > std::abs(pts[best].y - offset)) {
            best = i;
        }
    }
    const double amplitude = pts[best].y - offset;
    const double half = offset + 0.5 * amplitude;
    const auto beyond_half = [&](std::size_t i) {
        return amplitude > 0.0 ? pts[i].y < half : pts[i].y > half;
    };
    std::size_t lo = best;
    while (lo > 0 && !beyond_half(lo)) {
        --lo;
    }
    std::size_t hi = best;
    while (hi + 1 < pts.size() && !beyond_half(hi)) {
        ++hi;
    }
    const double hwhm = std::max(0.5 * (pts[hi].x - pts[lo].x),
                                 (pts.back().x - pts.front().x) / (2.0 * static_cast<double>(pts.size())));
    return Vec4(pts[best].x, width_per_hwhm * hwhm, amplitude, offset);
}

FitReport levenberg_marquardt(const std::vector<FitPoint>& points, const Model& model, Vec4 p, const char* name)
{
    const int n = static_cast<int>(points.size());
    const bool weighted = std::all_of(points.begin(), points.end(), [](const FitPoint& q) { return q.sigma > 0.0; });
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) {
        w[i] = weighted ? 1.0 / points[i].sigma : 1.0;
    }

    Eigen::MatrixXd J(n, 4);
    Eigen::VectorXd r(n);
    auto evaluate = [&](const Vec4& q, Eigen::MatrixXd* jac, Eigen::VectorXd& res) {
        Vec4 g;
        for (int i = 0; i < n; ++i) {
            const double m = model(points[i].x, q, g);
            res[i] = (points[i].y - m) * w[i];
            if (jac != nullptr) {
                jac->row(i) = g.transpose() * w[i];
            }
        }
        return res.squaredNorm();
    };

    double chi2 = evaluate(p, &J, r);
    double lambda = 1e-3;
    FitReport rep;
    int it = 0;
    for (; it < 500; ++it) {
        const Eigen::Matrix4d JtJ = J.transpose() * J;
        const Vec4 Jtr = J.transpose() * r;
        Eigen::Matrix4d A = JtJ;
        A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-300);
        const Vec4 step = A.ldlt().solve(Jtr);
        if (!step.allFinite()) {
            throw FitError(std::string(name) + " fit: singular normal equations");
        }
        Vec4 trial = p + step;
        Eigen::VectorXd r_trial(n);
        const double chi2_trial = trial[1] > 0.0 ? evaluate(trial, nullptr, r_trial) : INFINITY;
        if (chi2_trial <= chi2) {
            const double drop = chi2 - chi2_trial;
            p = trial;
            chi2 = evaluate(p, &J, r);
            lambda = std::max(lambda / 10.0, 1e-12);
            const bool small_step = (step.cwiseAbs().array() <= 1e-12 * (p.cwiseAbs().array() + 1e-12)).all();
            if (small_step || drop <= 1e-15 * (chi2 + 1e-300) || chi2 == 0.0) {
                rep.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) {
                // No downhill step left: at a minimum up to rounding.
                rep.converged = true;
                break;
            }
        }
    }
    rep.iterations = it + 1;
    if (!rep.converged) {
        std::ostringstream msg;
        msg << name << " fit did not converge after " << rep.iterations << " iterations (chi2 " << chi2 << ")";
        throw FitError(msg.str());
    }

    const Eigen::Matrix4d JtJ = J.transpose() * J;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    if (qr.rank() < 4) {
        throw FitError(std::string(name) + " fit: singular Jacobian (data show no resolvable feature)");
    }
    rep.dof = n - 4;
    rep.chi2 = chi2;
    Eigen::Matrix4d cov = JtJ.inverse();
    if (!weighted) {
        cov *= rep.dof > 0 ? chi2 / rep.dof : 0.0;
    }
    rep.center = p[0];
    rep.width = std::abs(p[1]);
    rep.amplitude = p[2];
    rep.offset = p[3];
    rep.center_est = {p[0], std::sqrt(std::max(cov(0, 0), 0.0))};
    rep.width_est = {rep.width, std::sqrt(std::max(cov(1, 1), 0.0))};
    rep.amplitude_est = {p[2], std::sqrt(std::max(cov(2, 2), 0.0))};
    rep.offset_est = {p[3], std::sqrt(std::max(cov(3, 3), 0.0))};
    if (!(std::abs(rep.amplitude) > 2.0 * rep.amplitude_est.error)) {
        std::ostringstream msg;
        msg << name << " fit: amplitude " << rep.amplitude << " +- " << rep.amplitude_est.error
            << " is not significant (chi2 " << chi2 << ", dof " << rep.dof << ")";
        throw FitError(msg.str());
    }
    return rep;
}

void check_points(const std::vector<FitPoint>& points, const char* name)
{
    if (points.size() < 5) {
        throw FitError(std::string(name) + " fit: need at least 5 points");
    }
    for (const auto& q : points) {
        if (!std::isfinite(q.x) || !std::isfinite(q.y) || !(q.sigma >= 0.0)) {
            throw FitError(std::string(name) + " fit: non-finite input point");
        }
    }
}

}  // namespace

double lorentzian(double x, double center, double fwhm, double amplitude, double offset)
{
    const double u = 2.0 * (x - center) / fwhm;
    return offset + amplitude / (1.0 + u * u);
}

double gaussian(double x, double center, double sigma, double amplitude, double offset)
{
    const double u = (x - center) / sigma;
    return offset + amplitude * std::exp(-0.5 * u * u);
}

FitReport lorentzian_fit(const std::vector<FitPoint>& points)
{
    check_points(points, "lorentzian");
    // A Lorentzian's FWHM is twice its half-width.
    return levenberg_marquardt(points, lorentz_eval, initial_guess(points, 2.0), "lorentzian");
}

FitReport gaussian_fit(const std::vector<FitPoint>& points)
{
    check_points(points, "gaussian");
    // sigma = HWHM / sqrt(2 ln 2).
    return levenberg_marquardt(points, gauss_eval, initial_guess(points, 1.0 / std::sqrt(2.0 * std::log(2.0))),
                               "gaussian");
}

}  // namespace homduet::analysis
