#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dosedr/csv.hpp"
#include "dosedr/dataset.hpp"
#include "dosedr/estimator.hpp"
#include "dosedr/nuisance.hpp"
#include "dosedr/rng.hpp"

namespace dosedr {

enum class DgpVariant { independent_surrogates, dependent_surrogates };

DgpVariant parse_dgp_variant(const std::string& name);
std::string dgp_variant_name(DgpVariant v);

//! Benchmark dose-response 1 + a - a^2 (independent-surrogate DGP).
double true_theta(double a);
//! Variant-aware truth; the dependent-surrogate DGP implies 1 + 1.2a - a^2.
double true_theta(double a, DgpVariant variant);

//! Draws the benchmark DGP: V ~ N(0, I4); A|V ~ N(lambda(V), 1) with
//! lambda(V) = 1 + 0.2 V1 + 0.2 V2 - 0.2 V3 + 0.3 V4; S ~ N(0, I2)
//! (dependent variant: S ~ N((V1+A, V2-A), I2)); R ~ Bernoulli(0.5);
//! Y | A,X,R=1 ~ N(mu(A,X,1), 1). Returns the dataset (Y erased where R=0)
//! and the exact nuisance bundle (closed-form marginal N(1, 1.21)).
std::pair<Dataset, NuisanceBundle> dgp_sample(Eigen::Index n, DgpVariant variant, Rng& rng);

//! The exact nuisance bundle of the DGP (no data attached).
NuisanceBundle dgp_truth_bundle(DgpVariant variant, const ClipConfig& clip = {});

//! Correct parametric feature map for the DGP outcome models
//! (a-interactions with V1 and V3, quadratic term per `correct`).
FeatureMap dgp_outcome_features(bool correct);

struct SimulationSpec {
    std::vector<Eigen::Index> n_values{500, 2000};
    std::vector<double> alphas{0.1};          // synthetic-noise mode
    bool fit_mode = false;                    // alpha = "fit": real nuisance fitting
    int replications = 500;                   // M
    DgpVariant variant = DgpVariant::independent_surrogates;
    std::vector<Method> estimators{Method::dr, Method::plugin};
    bool misspecify_outcome = false;          // drop the quadratic term (fit mode)
    std::uint64_t seed = 1;
    double eval_point = 1.0;                  // a*
    int threads = 1;

    KernelSpec kernel{KernelKind::epanechnikov};
    BandwidthPolicy bandwidth;                // LOOCV by default
    ClipConfig clip;
    bool compute_se = true;
    bool coverage = true;                     // CI coverage of theta_bar(a*) for dr
    std::size_t coverage_draws = 2'000'000;
    int accel_f_grid = 256;

    void validate() const;
};

//! One (n, alpha, estimator) cell of a study, with per-replication vectors
//! retained for downstream checks.
struct CellResult {
    Eigen::Index n = 0;
    double alpha = 0.0;
    bool fit_mode = false;
    std::string estimator;
    DgpVariant variant = DgpVariant::independent_surrogates;
    int replications = 0;  // attempted
    std::uint64_t seed = 0;

    double rmse = 0.0, bias = 0.0, sd = 0.0;
    double mean_se = std::numeric_limits<double>::quiet_NaN();
    double coverage = std::numeric_limits<double>::quiet_NaN();
    int fail_count = 0;

    std::vector<double> estimates;   // NaN where the replication failed
    std::vector<double> ses;         // NaN where unavailable
    std::vector<double> bandwidths;  // mean over rotations, NaN where unavailable
    std::vector<std::int8_t> covered;  // -1 unknown, else 0/1
};

struct ResultsTable {
    std::vector<CellResult> cells;

    //! Pinned schema: n, alpha, estimator, dgp_variant, M, rmse, bias, sd,
    //! mean_se, coverage, fail_count, seed.
    csv::Table to_csv() const;
    void write_csv(const std::string& path) const;
};

//! Synthetic-noise RMSE benchmark: nuisances from oracle_noisy_bundle and
//! the two-fold D/T protocol (fit mode runs the full three-fold pipeline).
//! Replication m draws from an independent RNG substream; a failed
//! bandwidth selection retries once at h = n^{-1/5} range(A)/2. Throws if
//! more than 5% of replications fail in any cell.
ResultsTable run_rmse_experiment(const SimulationSpec& spec);

//! Appendix-style misspecification study (fit mode): plugin vs dr with the
//! outcome quadratic term kept and dropped. Estimator tags gain a `_mis`
//! suffix for the misspecified rows.
ResultsTable run_misspecification_study(const SimulationSpec& spec);

//! Supervised (labeled-rows-only) vs semi-supervised dr comparison under
//! correct parametric nuisances (fit mode).
ResultsTable run_supervised_comparison(const SimulationSpec& spec);

//! Monte Carlo oracle for the smoothed target theta_bar(a): a large-sample
//! local-linear fit of true pseudo-outcomes at bandwidth h. Draws are kept
//! only within the maximal window around a.
class SmoothedTargetOracle {
public:
    SmoothedTargetOracle(DgpVariant variant, double a, double h_max, std::size_t draws,
                         std::uint64_t seed, KernelSpec kernel);

    double theta_bar(double h) const;
    std::size_t stored() const { return a_.size(); }

private:
    double a_star_;
    KernelSpec kernel_;
    std::vector<double> a_;    // sorted
    std::vector<double> phi_;
};

//! Delta-method standard error of RMSE(arm1) - RMSE(arm2) from paired
//! per-replication squared errors.
double rmse_diff_se(const std::vector<double>& sqerr1, const std::vector<double>& sqerr2);

} // namespace dosedr
