#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>

#include <Eigen/Dense>

#include "dosedr/dataset.hpp"
#include "dosedr/features.hpp"
#include "dosedr/rng.hpp"

namespace dosedr {

using PointFn = std::function<double(double, const Eigen::RowVectorXd&)>;
using VecFn = std::function<double(const Eigen::RowVectorXd&)>;
using ScalarFn = std::function<double(double)>;
//! Quadratic-in-a coefficients (c0(v), c1(v), c2) of tau; enables O(1) fold
//! averages and influence-function integrals for parametric fits.
using TauPolyFn = std::function<Eigen::Vector3d(const Eigen::RowVectorXd&)>;

//! Ordinary least squares behind a FeatureMap.
struct LinearModel {
    FeatureMap features;
    Eigen::VectorXd beta;

    double operator()(double a, const Eigen::RowVectorXd& x) const {
        Eigen::VectorXd g(beta.size());
        features.eval(a, x, g);
        return g.dot(beta);
    }
};

//! Logistic regression behind a FeatureMap (zero-variance columns are
//! dropped during fitting and report coefficient 0).
struct LogisticModel {
    FeatureMap features;
    Eigen::VectorXd beta;

    double operator()(double a, const Eigen::RowVectorXd& x) const {
        Eigen::VectorXd g(beta.size());
        features.eval(a, x, g);
        const double z = g.dot(beta);
        return 1.0 / (1.0 + std::exp(-z));
    }
};

//! Gaussian conditional density with linear mean: A | V=v ~ N(mean(v), sigma2).
struct GaussianLinearDensity {
    Eigen::VectorXd mean_beta;  // on [1, v...]
    double sigma2 = 1.0;

    double mean(const Eigen::RowVectorXd& v) const {
        double m = mean_beta[0];
        for (Eigen::Index j = 0; j < v.size(); ++j) m += mean_beta[1 + j] * v[j];
        return m;
    }
    double operator()(double a, const Eigen::RowVectorXd& v) const {
        const double d = a - mean(v);
        return std::exp(-0.5 * d * d / sigma2) / std::sqrt(2.0 * std::numbers::pi * sigma2);
    }
};

//! Callable nuisance estimates mu, tau, rho, pi, f, w with the clipping
//! required by the bias bounds: rho >= clip_rho_min, w <= clip_w_max.
//! Evaluation is pure; clip events tick a shared counter.
struct NuisanceBundle {
    PointFn mu;   // (a, x)
    PointFn tau;  // (a, v)
    PointFn rho;  // (a, x), clipped below
    PointFn pi;   // (a, v), conditional density
    ScalarFn f;   // marginal density
    PointFn w;    // (a, v) = min(f/pi, clip_w_max)

    double clip_rho_min = 0.01;
    double clip_w_max = 50.0;
    std::shared_ptr<std::atomic<std::uint64_t>> clip_events =
        std::make_shared<std::atomic<std::uint64_t>>(0);

    // Structured handles (null when the component is a black box).
    TauPolyFn tau_poly;          // tau(a,v) = p[0] + p[1] a + p[2] a^2
    VecFn pi_mean;               // lambda(v) for Gaussian pi
    double pi_var = 0.0;         // sigma^2 for Gaussian pi (0 = unstructured)

    std::uint64_t clip_count() const { return clip_events->load(); }
};

//! Constants for the stabilized-weight construction.
inline constexpr double kPiFloor = 1e-12;

struct ClipConfig {
    double rho_min = 0.01;
    double w_max = 50.0;
};

//! OLS of Y on features(A, X) over labeled rows. Requires at least
//! dim+1 labeled rows and a design that stays full rank past the ridge
//! guard; throws FitError otherwise.
LinearModel fit_outcome_regression(const Dataset& data, const FeatureMap& features);

//! OLS of mu_hat(A_i, X_i) on features(A_i, V_i) over all rows (mu_hat is
//! evaluable everywhere, so the full semi-supervised sample is used).
LinearModel fit_tau(const Dataset& data, const PointFn& mu, const FeatureMap& features);

//! Logistic regression of R on features(A, X); Newton iterations capped at
//! 100 with mean-gradient tolerance 1e-8. Throws FitError on a single-class
//! label vector or on detected separation (diverging coefficients).
LogisticModel fit_label_propensity(const Dataset& data, const FeatureMap& features);

//! Gaussian conditional density: OLS mean model on [1, V] and mean squared
//! residual as variance. Throws FitError on degenerate (zero) variance.
GaussianLinearDensity fit_conditional_density(const Dataset& data);

//! f_hat(a) = average of pi(a | V_i) over the captured fold rows (exact).
ScalarFn estimate_marginal_density(const PointFn& pi, const Eigen::MatrixXd& fold_covariates);

//! Exact fold-average marginal for a Gaussian-structured pi; the component
//! means are precomputed so each evaluation is one vectorized pass.
ScalarFn gaussian_mixture_marginal(Eigen::VectorXd component_means, double sigma2);

//! Dense-grid tabulation of a smooth nonnegative function with local cubic
//! interpolation; evaluations outside [a_lo, a_hi] fall back to `base`.
//! Used by the Monte Carlo studies where repeated marginal-density sums
//! would dominate the runtime (interpolation error ~1e-9 on these scales).
ScalarFn tabulate_scalar_fn(const ScalarFn& base, double a_lo, double a_hi, int grid_points = 512);

//! w(a, v) = min(f(a) / max(pi(a|v), 1e-12), cap); floor/cap hits tick
//! `events` when provided.
PointFn make_stabilized_weight(const ScalarFn& f, const PointFn& pi, double cap,
                               std::shared_ptr<std::atomic<std::uint64_t>> events = nullptr);

//! Assembles a bundle from fitted components (f must already be the
//! fold-average marginal). rho is clipped below at clip.rho_min.
NuisanceBundle make_fitted_bundle(LinearModel mu, LinearModel tau, LogisticModel rho,
                                  GaussianLinearDensity pi, ScalarFn f, const ClipConfig& clip);

//! The manual nuisance-error injection of the benchmark DGP: with
//! eps_1..eps_4 ~ N(n^-alpha, n^-2alpha) drawn once,
//!   lambda_hat = lambda + eps1 (hence pi_hat = N(lambda_hat(v), pi_var),
//!   f_hat(a) = f(a - eps1), w_hat = min(f_hat/pi_hat, cap)),
//!   mu_hat = mu + eps2, tau_hat = tau + eps3,
//!   logit(rho_hat) = logit(rho) + eps4.
//! Requires truth.pi_mean/pi_var to be structured. Reproducible bit-for-bit
//! for a given rng state (exactly four normal draws).
NuisanceBundle oracle_noisy_bundle(const NuisanceBundle& truth, double alpha, Eigen::Index n,
                                   Rng& rng);

//! Deterministic core of oracle_noisy_bundle with explicit errors.
NuisanceBundle apply_nuisance_errors(const NuisanceBundle& truth,
                                     const Eigen::Vector4d& eps);

} // namespace dosedr
