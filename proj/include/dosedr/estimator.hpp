#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dosedr/dataset.hpp"
#include "dosedr/local_linear.hpp"
#include "dosedr/nuisance.hpp"

namespace dosedr {

enum class Method { plugin, dr, oracle, supervised };

std::string method_name(Method m);
Method parse_method(const std::string& name);

//! Fixed bandwidth when `fixed` > 0, otherwise LOOCV over a geometric grid
//! of range fractions.
struct BandwidthPolicy {
    double fixed = 0.0;
    double grid_lo = 0.05;
    double grid_hi = 1.0;
    int grid_count = 20;
    bool is_fixed() const { return fixed > 0.0; }
};

struct EstimationConfig {
    Method method = Method::dr;
    KernelSpec kernel{KernelKind::epanechnikov};
    BandwidthPolicy bandwidth;
    ClipConfig clip;
    bool rotate = true;      // average over cyclic role rotations
    double ci_level = 0.95;
    std::uint64_t seed = 1;
    int threads = 1;
    FeatureMap outcome_features;      // mu and tau fits
    FeatureMap propensity_features;   // rho fit
    std::vector<double> grid;         // empty: default grid from the data
    int grid_points = 25;
    bool compute_se = true;
    int accel_f_grid = 0;             // >= 8: dense-grid marginal-density evaluation
};

//! Hard-coded normal quantiles for levels 0.90 / 0.95 / 0.99.
double z_quantile(double level);

//! Pseudo-outcomes phi_hat over one fold plus the initial estimator.
struct PseudoOutcomeSet {
    Eigen::VectorXd phi;
    std::function<double(double)> theta0;
    std::uint64_t clip_events = 0;
};

struct DoseResponseEstimate {
    std::vector<double> grid;
    std::vector<double> theta;
    std::vector<double> se;        // empty for methods without a variance estimator
    std::vector<double> ci_lower;  // empty whenever se is
    std::vector<double> ci_upper;
    std::vector<int> n_effective;
    std::vector<double> rotation_bandwidths;
    std::string method;
    double ci_level = 0.95;
    std::uint64_t clip_events = 0;
    int degenerate_fallbacks = 0;

    double bandwidth_mean() const;
    void write_csv(const std::string& path) const;
};

//! Eq.-(3) plug-in: theta_hat(a) = P_n[tau_hat(a, V_i)] over all rows.
//! `tau_poly`, when given, collapses the average to a quadratic in a.
DoseResponseEstimate plugin_estimate(const PointFn& tau, const Dataset& data,
                                     std::span<const double> grid,
                                     const TauPolyFn& tau_poly = nullptr);

//! theta0_hat(a): mean of tau_hat(a, V_i) over the fold.
double initial_estimate(const PointFn& tau, const Dataset& fold, double a);

//! Fold-mean initial estimator as a callable; O(1) per evaluation when
//! tau_poly is available.
std::function<double(double)> make_initial_estimator(const PointFn& tau,
                                                     const Eigen::MatrixXd& fold_covariates,
                                                     const TauPolyFn& tau_poly = nullptr);

//! phi_hat(Z) = [R (Y - mu_hat)/rho_hat + mu_hat - tau_hat] w_hat + theta0(A);
//! rows with R=0 contribute through the (mu_hat - tau_hat) w_hat + theta0 path only.
PseudoOutcomeSet pseudo_outcomes(const NuisanceBundle& bundle,
                                 const std::function<double(double)>& theta0,
                                 const Dataset& fold);

//! Influence-function standard error sqrt(P_n[phi_hat_ha^2] / n) at the fit's
//! center. The dP_n(t) integral runs over the fold's own treatments
//! (window-restricted for compact kernels, evenly subsampled above
//! `t_subsample_cap` draws).
double influence_se(std::span<const double> treatments, std::span<const double> phi,
                    const LocalLinearFit& fit, const PointFn& tau,
                    const Eigen::MatrixXd& fold_covariates, const TauPolyFn& tau_poly = nullptr,
                    std::size_t t_subsample_cap = 2000);

namespace detail {
//! Per-row influence terms (residual term and the tau-integral term), for
//! tests of the decomposition. phi_hat_ha_i = term1_i + term2_i - theta_hat.
void influence_components(std::span<const double> treatments, std::span<const double> phi,
                          const LocalLinearFit& fit, const PointFn& tau,
                          const Eigen::MatrixXd& fold_covariates, const TauPolyFn& tau_poly,
                          std::size_t t_subsample_cap, std::vector<double>& term1,
                          std::vector<double>& term2);
} // namespace detail

//! Three-fold cross-fitted doubly robust estimator (Algorithm-1 pipeline):
//! nuisances on D1; theta0, f_hat and the LOOCV bandwidth on D2;
//! pseudo-outcome local-linear regression on T; optionally averaged over the
//! three cyclic role rotations.
DoseResponseEstimate dr_estimate(const Dataset& data, const EstimationConfig& config);

//! Same pipeline with externally supplied nuisances (mu, tau, rho, pi) and a
//! two-fold D/T split: theta0 and f_hat come from D's fold average, the
//! bandwidth is selected on D, smoothing runs on T, and the roles are
//! swapped and averaged.
DoseResponseEstimate dr_estimate_with_bundle(const Dataset& data, const NuisanceBundle& bundle,
                                             const EstimationConfig& config);

//! Labeled-rows-only estimator: pseudo-outcome (Y - tau_L) w_L + theta0_L
//! with every nuisance fitted on labeled data.
DoseResponseEstimate supervised_estimate(const Dataset& data, const EstimationConfig& config);

//! Oracle smoother: plain local-linear regression of supplied true
//! pseudo-outcomes. Throws BandwidthError on a degenerate window.
double oracle_estimate(std::span<const double> true_phi, std::span<const double> treatments,
                       double a, double h, const KernelSpec& kernel);

//! Default evaluation grid: `count` equally spaced points between the 5th
//! and 95th percentiles of the observed treatment.
std::vector<double> default_grid(const Eigen::VectorXd& treatment, int count = 25);

} // namespace dosedr
