#include "dosedr/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dosedr/csv.hpp"
#include "dosedr/errors.hpp"
#include "dosedr/parallel.hpp"

namespace dosedr {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string method_name(Method m) {
    switch (m) {
        case Method::plugin: return "plugin";
        case Method::dr: return "dr";
        case Method::oracle: return "oracle";
        case Method::supervised: return "supervised";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "plugin") return Method::plugin;
    if (name == "dr") return Method::dr;
    if (name == "oracle") return Method::oracle;
    if (name == "supervised") return Method::supervised;
    throw UsageError("unknown method '" + name + "' (expected plugin|dr|supervised|oracle)");
}

double z_quantile(double level) {
    if (level == 0.90) return 1.6448536269514722;
    if (level == 0.95) return 1.959963984540054;
    if (level == 0.99) return 2.5758293035489004;
    throw UsageError("ci level must be one of 0.90, 0.95, 0.99");
}

double DoseResponseEstimate::bandwidth_mean() const {
    if (rotation_bandwidths.empty()) return kNaN;
    double s = 0.0;
    for (double h : rotation_bandwidths) s += h;
    return s / static_cast<double>(rotation_bandwidths.size());
}

void DoseResponseEstimate::write_csv(const std::string& path) const {
    csv::Table table;
    table.header = {"a", "theta_hat", "se", "ci_lower", "ci_upper",
                    "method", "bandwidth", "n_effective"};
    const bool has_se = !se.empty();
    const double h_mean = bandwidth_mean();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        std::vector<std::string> row(8);
        row[0] = csv::format_double(grid[g]);
        row[1] = csv::format_double(theta[g]);
        row[2] = has_se ? csv::format_double(se[g]) : "";
        row[3] = has_se ? csv::format_double(ci_lower[g]) : "";
        row[4] = has_se ? csv::format_double(ci_upper[g]) : "";
        row[5] = method;
        row[6] = std::isnan(h_mean) ? "" : csv::format_double(h_mean);
        row[7] = std::to_string(n_effective[g]);
        table.rows.push_back(std::move(row));
    }
    csv::write_file(path, table);
}

std::vector<double> default_grid(const Eigen::VectorXd& treatment, int count) {
    if (treatment.size() < 2) throw UsageError("need at least 2 rows for a default grid");
    if (count < 1) throw UsageError("grid point count must be positive");
    std::vector<double> sorted(treatment.data(), treatment.data() + treatment.size());
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&sorted](double p) {
        const double idx = p * static_cast<double>(sorted.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(idx);
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        const double frac = idx - static_cast<double>(lo);
        return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
    };
    const double lo = quantile(0.05), hi = quantile(0.95);
    std::vector<double> grid(static_cast<std::size_t>(count));
    if (count == 1) {
        grid[0] = 0.5 * (lo + hi);
        return grid;
    }
    for (int g = 0; g < count; ++g)
        grid[static_cast<std::size_t>(g)] = lo + (hi - lo) * g / (count - 1);
    return grid;
}

std::function<double(double)> make_initial_estimator(const PointFn& tau,
                                                     const Eigen::MatrixXd& fold_covariates,
                                                     const TauPolyFn& tau_poly) {
    if (fold_covariates.rows() == 0) throw UsageError("initial estimator: empty fold");
    if (tau_poly) {
        Eigen::Vector3d c = Eigen::Vector3d::Zero();
        for (Eigen::Index i = 0; i < fold_covariates.rows(); ++i)
            c += tau_poly(fold_covariates.row(i));
        c /= static_cast<double>(fold_covariates.rows());
        return [c](double a) { return c[0] + c[1] * a + c[2] * a * a; };
    }
    const auto rows = std::make_shared<const Eigen::MatrixXd>(fold_covariates);
    return [tau, rows](double a) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < rows->rows(); ++i) sum += tau(a, rows->row(i));
        return sum / static_cast<double>(rows->rows());
    };
}

double initial_estimate(const PointFn& tau, const Dataset& fold, double a) {
    if (fold.n() == 0) throw UsageError("initial estimator: empty fold");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < fold.n(); ++i) sum += tau(a, fold.v_row(i));
    return sum / static_cast<double>(fold.n());
}

DoseResponseEstimate plugin_estimate(const PointFn& tau, const Dataset& data,
                                     std::span<const double> grid, const TauPolyFn& tau_poly) {
    if (!tau) throw UsageError("plugin estimate: tau component not fitted");
    if (data.n() == 0) throw ValidationError("plugin estimate: empty dataset");
    const double a_min = data.treatment().minCoeff(), a_max = data.treatment().maxCoeff();
    const double slack = 1e-9 * std::max(1.0, a_max - a_min);
    for (double a : grid)
        if (a < a_min - slack || a > a_max + slack)
            throw UsageError("grid point " + std::to_string(a) +
                             " outside observed treatment range");
    auto theta0 = make_initial_estimator(tau, data.covariates(), tau_poly);
    DoseResponseEstimate est;
    est.method = method_name(Method::plugin);
    est.grid.assign(grid.begin(), grid.end());
    est.theta.resize(grid.size());
    est.n_effective.assign(grid.size(), static_cast<int>(data.n()));
    for (std::size_t g = 0; g < grid.size(); ++g) est.theta[g] = theta0(grid[g]);
    return est;
}

PseudoOutcomeSet pseudo_outcomes(const NuisanceBundle& bundle,
                                 const std::function<double(double)>& theta0,
                                 const Dataset& fold) {
    if (!bundle.mu || !bundle.tau || !bundle.rho || !bundle.w)
        throw UsageError("pseudo outcomes: incomplete nuisance bundle");
    const std::uint64_t clip_before = bundle.clip_count();
    PseudoOutcomeSet out;
    out.phi.resize(fold.n());
    out.theta0 = theta0;
    Eigen::RowVectorXd x(fold.p() + fold.q());
    for (Eigen::Index i = 0; i < fold.n(); ++i) {
        const double a = fold.a(i);
        x.head(fold.p()) = fold.covariates().row(i);
        x.tail(fold.q()) = fold.surrogates().row(i);
        const Eigen::RowVectorXd v = fold.covariates().row(i);
        const double mu = bundle.mu(a, x);
        const double tau = bundle.tau(a, v);
        double core = mu - tau;
        if (fold.labeled(i)) core += (fold.y(i) - mu) / bundle.rho(a, x);
        out.phi[i] = core * bundle.w(a, v) + theta0(a);
    }
    out.clip_events = bundle.clip_count() - clip_before;
    return out;
}

namespace detail {

void influence_components(std::span<const double> treatments, std::span<const double> phi,
                          const LocalLinearFit& fit, const PointFn& tau,
                          const Eigen::MatrixXd& fold_covariates, const TauPolyFn& tau_poly,
                          std::size_t t_subsample_cap, std::vector<double>& term1,
                          std::vector<double>& term2) {
    const std::size_t n = treatments.size();
    if (n == 0 || phi.size() != n || fold_covariates.rows() != static_cast<Eigen::Index>(n))
        throw UsageError("influence components: inconsistent fold arrays");
    if (fit.degenerate) throw BandwidthError("influence components: degenerate fit");
    const double det = fit.det();
    const double e0 = fit.d11 / det, e1 = -fit.d01 / det;
    const double a = fit.center, h = fit.bandwidth;
    const KernelSpec& kernel = fit.kernel;

    term1.assign(n, 0.0);
    term2.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = (treatments[i] - a) / h;
        const double kha = kernel(u) / h;
        if (kha > 0.0) {
            const double resid = phi[i] - (fit.beta0 + fit.beta1 * u);
            term1[i] = (e0 + e1 * u) * kha * resid;
        }
    }

    // The dP_n(t) integral over the fold's treatments. For compact kernels
    // only window points contribute; above the cap an evenly spaced
    // subsample of the sorted window stands in for the full sum.
    std::vector<double> t_sorted(treatments.begin(), treatments.end());
    std::sort(t_sorted.begin(), t_sorted.end());
    std::size_t lo = 0, hi = n;
    if (kernel.compact_support()) {
        lo = static_cast<std::size_t>(
            std::lower_bound(t_sorted.begin(), t_sorted.end(), a - h) - t_sorted.begin());
        hi = static_cast<std::size_t>(
            std::upper_bound(t_sorted.begin(), t_sorted.end(), a + h) - t_sorted.begin());
    }
    const std::size_t window = hi - lo;
    if (window == 0) return;  // integral is exactly zero

    std::vector<double> t_sel;
    if (window <= t_subsample_cap) {
        t_sel.assign(t_sorted.begin() + static_cast<long>(lo),
                     t_sorted.begin() + static_cast<long>(hi));
    } else {
        t_sel.resize(t_subsample_cap);
        for (std::size_t j = 0; j < t_subsample_cap; ++j) {
            const double pos = static_cast<double>(j) *
                               static_cast<double>(window - 1) /
                               static_cast<double>(t_subsample_cap - 1);
            t_sel[j] = t_sorted[lo + static_cast<std::size_t>(pos + 0.5)];
        }
    }
    // (1/n) sum over window == (window/n) * mean over the selection.
    const double scale =
        static_cast<double>(window) / (static_cast<double>(t_sel.size()) * static_cast<double>(n));

    if (tau_poly) {
        Eigen::Vector2d m0 = Eigen::Vector2d::Zero(), m1 = m0, m2 = m0;
        for (double t : t_sel) {
            const double u = (t - a) / h;
            const double kha = kernel(u) / h;
            if (kha <= 0.0) continue;
            const Eigen::Vector2d g(kha, kha * u);
            m0 += g;
            m1 += g * t;
            m2 += g * (t * t);
        }
        m0 *= scale;
        m1 *= scale;
        m2 *= scale;
        for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d c = tau_poly(fold_covariates.row(static_cast<Eigen::Index>(i)));
            const Eigen::Vector2d integral = c[0] * m0 + c[1] * m1 + c[2] * m2;
            term2[i] = e0 * integral[0] + e1 * integral[1];
        }
        return;
    }

    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::RowVectorXd v = fold_covariates.row(static_cast<Eigen::Index>(i));
        double i0 = 0.0, i1 = 0.0;
        for (double t : t_sel) {
            const double u = (t - a) / h;
            const double kha = kernel(u) / h;
            if (kha <= 0.0) continue;
            const double tv = tau(t, v);
            i0 += kha * tv;
            i1 += kha * u * tv;
        }
        term2[i] = (e0 * i0 + e1 * i1) * scale;
    }
}

} // namespace detail

double influence_se(std::span<const double> treatments, std::span<const double> phi,
                    const LocalLinearFit& fit, const PointFn& tau,
                    const Eigen::MatrixXd& fold_covariates, const TauPolyFn& tau_poly,
                    std::size_t t_subsample_cap) {
    std::vector<double> term1, term2;
    detail::influence_components(treatments, phi, fit, tau, fold_covariates, tau_poly,
                                 t_subsample_cap, term1, term2);
    const double theta = fit.beta0;
    double ss = 0.0;
    for (std::size_t i = 0; i < term1.size(); ++i) {
        const double c = term1[i] + term2[i] - theta;
        ss += c * c;
    }
    return std::sqrt(ss) / static_cast<double>(term1.size());
}

double oracle_estimate(std::span<const double> true_phi, std::span<const double> treatments,
                       double a, double h, const KernelSpec& kernel) {
    const LocalLinearPoint llp = local_linear_point(treatments, true_phi, a, h, kernel);
    if (llp.fit.degenerate)
        throw BandwidthError("oracle estimate: degenerate window at a=" + std::to_string(a));
    return llp.estimate;
}

// ---------------------------------------------------------------------------
// Cross-fitted pipeline shared by dr / supervised / bundle-given estimation.
// ---------------------------------------------------------------------------

namespace {

struct RotationPieces {
    NuisanceBundle bundle;
    std::function<double(double)> theta0;
};

using Fitter = std::function<RotationPieces(const Dataset& d1, const Dataset& d2, double a_lo,
                                            double a_hi)>;

ScalarFn marginal_for(const PointFn& pi, const VecFn& pi_mean, double pi_var,
                      const Eigen::MatrixXd& covs, double a_lo, double a_hi, int accel_grid) {
    ScalarFn base;
    if (pi_mean && pi_var > 0.0) {
        Eigen::VectorXd means(covs.rows());
        for (Eigen::Index i = 0; i < covs.rows(); ++i) means[i] = pi_mean(covs.row(i));
        base = gaussian_mixture_marginal(std::move(means), pi_var);
    } else {
        base = estimate_marginal_density(pi, covs);
    }
    if (accel_grid >= 8) return tabulate_scalar_fn(base, a_lo, a_hi, accel_grid);
    return base;
}

DoseResponseEstimate crossfit_estimate(const Dataset& data, const EstimationConfig& cfg, int k,
                                       const Fitter& fitter, Method tag) {
    const ValidationReport report = validate(data);
    if (report.fatal) throw ValidationError("invalid dataset: " + report.to_string());

    const std::vector<double> grid =
        cfg.grid.empty() ? default_grid(data.treatment(), cfg.grid_points) : cfg.grid;
    const FoldAssignment folds = split_folds(data, cfg.seed, k);

    std::vector<Dataset> fold_data;
    fold_data.reserve(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        fold_data.push_back(data.subset(folds.rows_in_fold(f)));
        Eigen::Index labeled = fold_data.back().n_labeled();
        if (labeled < 2)
            throw ValidationError("fold " + std::to_string(f) + " has " + std::to_string(labeled) +
                                  " labeled rows (need at least 2)");
    }
    const double a_lo = data.treatment().minCoeff();
    const double a_hi = data.treatment().maxCoeff();

    const int rotations = cfg.rotate ? k : 1;
    DoseResponseEstimate est;
    est.method = method_name(tag);
    est.ci_level = cfg.ci_level;
    est.grid = grid;
    est.theta.assign(grid.size(), 0.0);
    est.n_effective.assign(grid.size(), 0);
    const bool with_se = cfg.compute_se;
    std::vector<double> se2(grid.size(), 0.0);
    bool se_valid = with_se;

    for (int r = 0; r < rotations; ++r) {
        const Dataset& d1 = fold_data[static_cast<std::size_t>(r % k)];
        const Dataset& d2 = fold_data[static_cast<std::size_t>(k == 2 ? r % k : (r + 1) % k)];
        const Dataset& t_fold = fold_data[static_cast<std::size_t>(k == 2 ? (r + 1) % k : (r + 2) % k)];

        RotationPieces pieces;
        try {
            pieces = fitter(d1, d2, a_lo, a_hi);
        } catch (const FitError& e) {
            throw FitError("rotation " + std::to_string(r) + " (nuisances on fold " +
                           std::to_string(r % k) + "): " + e.what());
        }

        double h = cfg.bandwidth.fixed;
        if (!cfg.bandwidth.is_fixed()) {
            const PseudoOutcomeSet po_d2 = pseudo_outcomes(pieces.bundle, pieces.theta0, d2);
            const std::vector<double> candidates = geometric_bandwidth_grid(
                d2.treatment().minCoeff(), d2.treatment().maxCoeff(), cfg.bandwidth.grid_lo,
                cfg.bandwidth.grid_hi, cfg.bandwidth.grid_count);
            try {
                h = loocv_bandwidth(
                    std::span<const double>(d2.treatment().data(),
                                            static_cast<std::size_t>(d2.n())),
                    std::span<const double>(po_d2.phi.data(), static_cast<std::size_t>(d2.n())),
                    candidates, cfg.kernel);
            } catch (const BandwidthError& e) {
                throw BandwidthError("rotation " + std::to_string(r) + ": " + e.what());
            }
        }
        est.rotation_bandwidths.push_back(h);

        const PseudoOutcomeSet po_t = pseudo_outcomes(pieces.bundle, pieces.theta0, t_fold);
        est.clip_events += pieces.bundle.clip_count();

        const std::span<const double> a_t(t_fold.treatment().data(),
                                          static_cast<std::size_t>(t_fold.n()));
        const std::span<const double> phi_t(po_t.phi.data(), static_cast<std::size_t>(t_fold.n()));

        std::vector<double> theta_r(grid.size()), se_r(grid.size(), kNaN);
        std::vector<int> neff_r(grid.size(), 0);
        std::vector<int> fallback_r(grid.size(), 0);
        parallel_for(grid.size(), cfg.threads, [&](std::size_t g) {
            const LocalLinearPoint llp = local_linear_point(a_t, phi_t, grid[g], h, cfg.kernel);
            neff_r[g] = llp.fit.effective_points;
            if (llp.fit.degenerate) {
                const double nw = nadaraya_watson(a_t, phi_t, grid[g], h, cfg.kernel);
                if (std::isnan(nw))
                    throw BandwidthError("empty smoothing window at a=" + std::to_string(grid[g]));
                theta_r[g] = nw;
                fallback_r[g] = 1;
                return;
            }
            theta_r[g] = llp.estimate;
            if (with_se)
                se_r[g] = influence_se(a_t, phi_t, llp.fit, pieces.bundle.tau,
                                       t_fold.covariates(), pieces.bundle.tau_poly);
        });
        for (std::size_t g = 0; g < grid.size(); ++g) {
            est.theta[g] += theta_r[g];
            est.n_effective[g] += neff_r[g];
            est.degenerate_fallbacks += fallback_r[g];
            if (with_se) {
                if (std::isnan(se_r[g]))
                    se_valid = false;
                else
                    se2[g] += se_r[g] * se_r[g];
            }
        }
    }

    const double inv_r = 1.0 / static_cast<double>(rotations);
    for (double& th : est.theta) th *= inv_r;
    if (with_se && se_valid) {
        const double z = z_quantile(cfg.ci_level);
        est.se.resize(grid.size());
        est.ci_lower.resize(grid.size());
        est.ci_upper.resize(grid.size());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            est.se[g] = std::sqrt(se2[g]) * inv_r;
            est.ci_lower[g] = est.theta[g] - z * est.se[g];
            est.ci_upper[g] = est.theta[g] + z * est.se[g];
        }
    }
    return est;
}

PointFn as_point_fn(std::shared_ptr<const LinearModel> model) {
    return [model](double a, const Eigen::RowVectorXd& x) { return (*model)(a, x); };
}

} // namespace

DoseResponseEstimate dr_estimate(const Dataset& data, const EstimationConfig& cfg) {
    for (int j : cfg.outcome_features.interactions)
        if (j < 0 || j >= data.p())
            throw UsageError("outcome-feature interaction index " + std::to_string(j) +
                             " must reference a covariate (0.." + std::to_string(data.p() - 1) + ")");
    Fitter fitter = [&cfg](const Dataset& d1, const Dataset& d2, double a_lo, double a_hi) {
        LinearModel mu = fit_outcome_regression(d1, cfg.outcome_features);
        auto mu_ptr = std::make_shared<const LinearModel>(std::move(mu));
        LinearModel tau = fit_tau(d1, as_point_fn(mu_ptr), cfg.outcome_features);

        LogisticModel rho;
        const bool all_labeled = d1.n_labeled() == d1.n();
        if (!all_labeled) rho = fit_label_propensity(d1, cfg.propensity_features);

        GaussianLinearDensity pi = fit_conditional_density(d1);
        auto pi_ptr = std::make_shared<const GaussianLinearDensity>(pi);
        PointFn pi_fn = [pi_ptr](double a, const Eigen::RowVectorXd& v) { return (*pi_ptr)(a, v); };
        VecFn mean_fn = [pi_ptr](const Eigen::RowVectorXd& v) { return pi_ptr->mean(v); };
        ScalarFn f = marginal_for(pi_fn, mean_fn, pi_ptr->sigma2, d2.covariates(), a_lo, a_hi,
                                  cfg.accel_f_grid);

        RotationPieces pieces;
        if (all_labeled) {
            // No unlabeled rows: rho == 1 is known exactly, skip the logistic fit.
            NuisanceBundle b;
            b.clip_rho_min = cfg.clip.rho_min;
            b.clip_w_max = cfg.clip.w_max;
            b.mu = as_point_fn(mu_ptr);
            auto tau_ptr = std::make_shared<const LinearModel>(std::move(tau));
            b.tau = as_point_fn(tau_ptr);
            b.tau_poly = [tau_ptr](const Eigen::RowVectorXd& v) {
                Eigen::Vector3d c;
                tau_ptr->features.poly_in_a(tau_ptr->beta, v, c[0], c[1], c[2]);
                return c;
            };
            b.rho = [](double, const Eigen::RowVectorXd&) { return 1.0; };
            b.pi = pi_fn;
            b.pi_mean = [pi_ptr](const Eigen::RowVectorXd& v) { return pi_ptr->mean(v); };
            b.pi_var = pi_ptr->sigma2;
            b.f = f;
            b.w = make_stabilized_weight(b.f, b.pi, cfg.clip.w_max, b.clip_events);
            pieces.bundle = std::move(b);
        } else {
            pieces.bundle = make_fitted_bundle(*mu_ptr, std::move(tau), std::move(rho), pi,
                                               std::move(f), cfg.clip);
        }
        pieces.theta0 =
            make_initial_estimator(pieces.bundle.tau, d2.covariates(), pieces.bundle.tau_poly);
        return pieces;
    };
    return crossfit_estimate(data, cfg, 3, fitter, Method::dr);
}

DoseResponseEstimate dr_estimate_with_bundle(const Dataset& data, const NuisanceBundle& bundle,
                                             const EstimationConfig& cfg) {
    Fitter fitter = [&bundle, &cfg](const Dataset&, const Dataset& d2, double a_lo, double a_hi) {
        RotationPieces pieces;
        pieces.bundle = bundle;
        // theta0_hat and f_hat come from the D fold, as in the two-fold
        // protocol; the stabilized weight is rebuilt from the fold marginal.
        pieces.bundle.f = marginal_for(bundle.pi, bundle.pi_mean, bundle.pi_var,
                                       d2.covariates(), a_lo, a_hi, cfg.accel_f_grid);
        pieces.bundle.clip_events = std::make_shared<std::atomic<std::uint64_t>>(0);
        pieces.bundle.w = make_stabilized_weight(pieces.bundle.f, pieces.bundle.pi,
                                                 bundle.clip_w_max, pieces.bundle.clip_events);
        pieces.theta0 = make_initial_estimator(bundle.tau, d2.covariates(), bundle.tau_poly);
        return pieces;
    };
    return crossfit_estimate(data, cfg, 2, fitter, Method::dr);
}

DoseResponseEstimate supervised_estimate(const Dataset& data, const EstimationConfig& cfg) {
    const Dataset labeled = data.labeled_subset();
    if (labeled.n() < 3)
        throw ValidationError("supervised estimate needs at least 3 labeled rows");
    const Eigen::Index p = labeled.p();
    Fitter fitter = [&cfg, p](const Dataset& d1, const Dataset& d2, double a_lo, double a_hi) {
        // Outcome regression on (A, V) only; no label propensity is needed.
        const Eigen::Index dim = cfg.outcome_features.dim(p);
        if (d1.n() < dim + 1)
            throw FitError("supervised outcome regression needs at least " +
                           std::to_string(dim + 1) + " labeled rows");
        Eigen::MatrixXd design(d1.n(), dim);
        Eigen::VectorXd g(dim);
        for (Eigen::Index i = 0; i < d1.n(); ++i) {
            cfg.outcome_features.eval(d1.a(i), d1.v_row(i), g);
            design.row(i) = g;
        }
        LinearModel tau_l{cfg.outcome_features,
                          Eigen::VectorXd()};
        tau_l.beta = [&]() {
            // Same ridge-guarded solve as the nuisance fits.
            Eigen::MatrixXd normal = design.transpose() * design;
            Eigen::VectorXd rhs = design.transpose() * d1.outcome();
            const double scale = normal.diagonal().maxCoeff();
            if (!(scale > 0.0)) throw FitError("supervised outcome regression: all-zero design");
            normal.diagonal().array() += 1e-10 * scale;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
            if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < 1e-8 * scale)
                throw FitError("supervised outcome regression: rank deficient design");
            return ldlt.solve(rhs).eval();
        }();
        auto tau_ptr = std::make_shared<const LinearModel>(std::move(tau_l));

        GaussianLinearDensity pi = fit_conditional_density(d1);
        auto pi_ptr = std::make_shared<const GaussianLinearDensity>(pi);
        PointFn pi_fn = [pi_ptr](double a, const Eigen::RowVectorXd& v) { return (*pi_ptr)(a, v); };

        NuisanceBundle b;
        b.clip_rho_min = cfg.clip.rho_min;
        b.clip_w_max = cfg.clip.w_max;
        b.tau = as_point_fn(tau_ptr);
        b.mu = [tau_ptr, p](double a, const Eigen::RowVectorXd& x) {
            return (*tau_ptr)(a, x.head(p));
        };
        b.tau_poly = [tau_ptr](const Eigen::RowVectorXd& v) {
            Eigen::Vector3d c;
            tau_ptr->features.poly_in_a(tau_ptr->beta, v, c[0], c[1], c[2]);
            return c;
        };
        b.rho = [](double, const Eigen::RowVectorXd&) { return 1.0; };
        b.pi = pi_fn;
        b.pi_mean = [pi_ptr](const Eigen::RowVectorXd& v) { return pi_ptr->mean(v); };
        b.pi_var = pi_ptr->sigma2;
        b.f = marginal_for(pi_fn, b.pi_mean, b.pi_var, d2.covariates(), a_lo, a_hi,
                           cfg.accel_f_grid);
        b.w = make_stabilized_weight(b.f, b.pi, cfg.clip.w_max, b.clip_events);

        RotationPieces pieces;
        pieces.bundle = std::move(b);
        pieces.theta0 =
            make_initial_estimator(pieces.bundle.tau, d2.covariates(), pieces.bundle.tau_poly);
        return pieces;
    };
    return crossfit_estimate(labeled, cfg, 3, fitter, Method::supervised);
}

} // namespace dosedr
