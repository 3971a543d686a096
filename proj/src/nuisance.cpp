#include "dosedr/nuisance.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "dosedr/errors.hpp"

namespace dosedr {

namespace {

//! Ridge-guarded normal-equation solve. The 1e-10 ridge is relative to the
//! largest diagonal entry of G^T G; pivots below 1e-8 * scale mean the design
//! is rank deficient beyond the guard.
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                                       const char* what) {
    Eigen::MatrixXd normal = design.transpose() * design;
    Eigen::VectorXd rhs = design.transpose() * y;
    const double scale = normal.diagonal().maxCoeff();
    if (!(scale > 0.0)) throw FitError(std::string(what) + ": all-zero design");
    normal.diagonal().array() += 1e-10 * scale;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() < 1e-8 * scale)
        throw FitError(std::string(what) + ": design matrix rank deficient beyond ridge guard");
    return ldlt.solve(rhs);
}

void fill_x_row(const Dataset& data, Eigen::Index i, Eigen::RowVectorXd& x) {
    x.head(data.p()) = data.covariates().row(i);
    x.tail(data.q()) = data.surrogates().row(i);
}

double expit(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double logit(double p) {
    p = std::min(std::max(p, 1e-300), 1.0 - 1e-16);
    return std::log(p / (1.0 - p));
}

} // namespace

LinearModel fit_outcome_regression(const Dataset& data, const FeatureMap& features) {
    const Eigen::Index xdim = data.p() + data.q();
    const Eigen::Index dim = features.dim(xdim);
    const Eigen::Index m = data.n_labeled();
    if (m < dim + 1)
        throw FitError("outcome regression needs at least " + std::to_string(dim + 1) +
                       " labeled rows, have " + std::to_string(m));
    Eigen::MatrixXd design(m, dim);
    Eigen::VectorXd y(m);
    Eigen::RowVectorXd x(xdim);
    Eigen::VectorXd g(dim);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (!data.labeled(i)) continue;
        fill_x_row(data, i, x);
        features.eval(data.a(i), x, g);
        design.row(r) = g;
        y[r] = data.y(i);
        ++r;
    }
    return {features, solve_normal_equations(design, y, "outcome regression (mu)")};
}

LinearModel fit_tau(const Dataset& data, const PointFn& mu, const FeatureMap& features) {
    const Eigen::Index dim = features.dim(data.p());
    const Eigen::Index m = data.n();
    if (m < dim + 1)
        throw FitError("tau regression needs at least " + std::to_string(dim + 1) + " rows");
    Eigen::MatrixXd design(m, dim);
    Eigen::VectorXd y(m);
    Eigen::RowVectorXd x(data.p() + data.q());
    Eigen::VectorXd g(dim);
    for (Eigen::Index i = 0; i < m; ++i) {
        fill_x_row(data, i, x);
        y[i] = mu(data.a(i), x);
        features.eval(data.a(i), data.v_row(i), g);
        design.row(i) = g;
    }
    return {features, solve_normal_equations(design, y, "tau regression")};
}

LogisticModel fit_label_propensity(const Dataset& data, const FeatureMap& features) {
    const Eigen::Index n = data.n();
    if (data.n_labeled() == 0 || data.n_labeled() == n)
        throw FitError("label propensity needs both labeled and unlabeled rows (n1=" +
                       std::to_string(data.n_labeled()) + ", n=" + std::to_string(n) + ")");
    const Eigen::Index xdim = data.p() + data.q();
    const Eigen::Index dim = features.dim(xdim);
    Eigen::MatrixXd design(n, dim);
    Eigen::RowVectorXd x(xdim);
    Eigen::VectorXd g(dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        fill_x_row(data, i, x);
        features.eval(data.a(i), x, g);
        design.row(i) = g;
    }

    // Zero-variance columns (besides the intercept) carry no information and
    // would make the Hessian singular; they are dropped and reported as 0.
    std::vector<Eigen::Index> active{0};
    for (Eigen::Index j = 1; j < dim; ++j) {
        const double lo = design.col(j).minCoeff(), hi = design.col(j).maxCoeff();
        if (hi > lo) active.push_back(j);
    }
    const Eigen::Index adim = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd ad(n, adim);
    for (Eigen::Index j = 0; j < adim; ++j) ad.col(j) = design.col(active[j]);

    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = data.labeled(i) ? 1.0 : 0.0;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(adim);
    Eigen::VectorXd eta(n), p(n);
    for (int iter = 0; iter < 100; ++iter) {
        eta = ad * beta;
        for (Eigen::Index i = 0; i < n; ++i) p[i] = expit(eta[i]);
        Eigen::VectorXd grad = ad.transpose() * (r - p) / static_cast<double>(n);
        if (grad.lpNorm<Eigen::Infinity>() < 1e-8) break;
        Eigen::VectorXd wvec = p.array() * (1.0 - p.array());
        Eigen::MatrixXd hess =
            ad.transpose() * wvec.asDiagonal() * ad / static_cast<double>(n);
        const double scale = hess.diagonal().maxCoeff();
        if (!(scale > 0.0))
            throw FitError("label propensity: degenerate Hessian; consider clipping or simpler features");
        hess.diagonal().array() += 1e-10 * scale;
        beta += hess.ldlt().solve(grad);
        if (beta.lpNorm<Eigen::Infinity>() > 30.0)
            throw FitError("label propensity: coefficients diverging (complete separation); "
                           "consider clipping or simpler features");
    }

    Eigen::VectorXd full = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index j = 0; j < adim; ++j) full[active[j]] = beta[j];
    return {features, full};
}

GaussianLinearDensity fit_conditional_density(const Dataset& data) {
    const Eigen::Index n = data.n();
    const Eigen::Index dim = mean_design_dim(data.p());
    if (n < dim + 2)
        throw FitError("conditional density needs at least " + std::to_string(dim + 2) + " rows");
    Eigen::MatrixXd design(n, dim);
    Eigen::VectorXd g(dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        mean_design(data.v_row(i), g);
        design.row(i) = g;
    }
    Eigen::VectorXd beta = solve_normal_equations(design, data.treatment(), "conditional density mean");
    const Eigen::VectorXd resid = data.treatment() - design * beta;
    const double sigma2 = resid.squaredNorm() / static_cast<double>(n);
    const double a_scale = std::max(1.0, data.treatment().squaredNorm() / static_cast<double>(n));
    if (sigma2 < 1e-12 * a_scale)
        throw FitError("conditional density: zero residual variance (degenerate density)");
    return {beta, sigma2};
}

ScalarFn estimate_marginal_density(const PointFn& pi, const Eigen::MatrixXd& fold_covariates) {
    if (fold_covariates.rows() == 0) throw UsageError("marginal density: empty fold");
    const auto rows = std::make_shared<const Eigen::MatrixXd>(fold_covariates);
    return [pi, rows](double a) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < rows->rows(); ++i) sum += pi(a, rows->row(i));
        return sum / static_cast<double>(rows->rows());
    };
}

ScalarFn gaussian_mixture_marginal(Eigen::VectorXd component_means, double sigma2) {
    if (component_means.size() == 0) throw UsageError("marginal density: empty fold");
    if (!(sigma2 > 0.0)) throw UsageError("marginal density: sigma2 must be positive");
    auto means = std::make_shared<const Eigen::ArrayXd>(component_means.array());
    const double inv2s2 = -0.5 / sigma2;
    const double norm =
        1.0 / (std::sqrt(2.0 * std::numbers::pi * sigma2) * static_cast<double>(means->size()));
    return [means, inv2s2, norm](double a) {
        return norm * ((a - *means).square() * inv2s2).exp().sum();
    };
}

ScalarFn tabulate_scalar_fn(const ScalarFn& base, double a_lo, double a_hi, int grid_points) {
    ScalarFn exact = base;
    if (grid_points < 8 || !(a_hi > a_lo)) return exact;
    auto values = std::make_shared<Eigen::VectorXd>(grid_points);
    const double step = (a_hi - a_lo) / (grid_points - 1);
    for (int i = 0; i < grid_points; ++i) (*values)[i] = exact(a_lo + step * i);
    const int npts = grid_points;
    return [exact, values, a_lo, a_hi, step, npts](double a) {
        if (a < a_lo || a > a_hi) return exact(a);
        const double t = (a - a_lo) / step;
        int i1 = static_cast<int>(t);
        i1 = std::min(std::max(i1, 1), npts - 3);
        const double s = t - i1;  // in [-1, 2] near the edges, else [0, 1]
        const double ym1 = (*values)[i1 - 1], y0 = (*values)[i1], y1 = (*values)[i1 + 1],
                     y2 = (*values)[i1 + 2];
        // 4-point Lagrange cubic on the uniform grid.
        const double c0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        const double c1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        const double c2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        const double c3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        return std::max(0.0, c0 * ym1 + c1 * y0 + c2 * y1 + c3 * y2);
    };
}

PointFn make_stabilized_weight(const ScalarFn& f, const PointFn& pi, double cap,
                               std::shared_ptr<std::atomic<std::uint64_t>> events) {
    if (!(cap > 0.0)) throw UsageError("stabilized-weight cap must be positive");
    return [f, pi, cap, events](double a, const Eigen::RowVectorXd& v) {
        double pv = pi(a, v);
        if (pv < kPiFloor) {
            pv = kPiFloor;
            if (events) events->fetch_add(1, std::memory_order_relaxed);
        }
        double w = f(a) / pv;
        if (w > cap) {
            w = cap;
            if (events) events->fetch_add(1, std::memory_order_relaxed);
        }
        return std::max(w, std::numeric_limits<double>::min());
    };
}

NuisanceBundle make_fitted_bundle(LinearModel mu, LinearModel tau, LogisticModel rho,
                                  GaussianLinearDensity pi, ScalarFn f, const ClipConfig& clip) {
    NuisanceBundle b;
    b.clip_rho_min = clip.rho_min;
    b.clip_w_max = clip.w_max;
    auto mu_m = std::make_shared<const LinearModel>(std::move(mu));
    auto tau_m = std::make_shared<const LinearModel>(std::move(tau));
    auto rho_m = std::make_shared<const LogisticModel>(std::move(rho));
    auto pi_m = std::make_shared<const GaussianLinearDensity>(std::move(pi));
    b.mu = [mu_m](double a, const Eigen::RowVectorXd& x) { return (*mu_m)(a, x); };
    b.tau = [tau_m](double a, const Eigen::RowVectorXd& v) { return (*tau_m)(a, v); };
    const double rho_min = clip.rho_min;
    auto events = b.clip_events;
    b.rho = [rho_m, rho_min, events](double a, const Eigen::RowVectorXd& x) {
        const double r = (*rho_m)(a, x);
        if (r < rho_min) {
            events->fetch_add(1, std::memory_order_relaxed);
            return rho_min;
        }
        return r;
    };
    b.pi = [pi_m](double a, const Eigen::RowVectorXd& v) { return (*pi_m)(a, v); };
    b.f = std::move(f);
    b.w = make_stabilized_weight(b.f, b.pi, clip.w_max, b.clip_events);
    b.tau_poly = [tau_m](const Eigen::RowVectorXd& v) {
        Eigen::Vector3d c;
        tau_m->features.poly_in_a(tau_m->beta, v, c[0], c[1], c[2]);
        return c;
    };
    b.pi_mean = [pi_m](const Eigen::RowVectorXd& v) { return pi_m->mean(v); };
    b.pi_var = pi_m->sigma2;
    return b;
}

NuisanceBundle apply_nuisance_errors(const NuisanceBundle& truth, const Eigen::Vector4d& eps) {
    if (!truth.pi_mean || !(truth.pi_var > 0.0))
        throw UsageError("nuisance-error injection needs a Gaussian-structured pi (pi_mean/pi_var)");
    NuisanceBundle b;
    b.clip_rho_min = truth.clip_rho_min;
    b.clip_w_max = truth.clip_w_max;

    const double e1 = eps[0], e2 = eps[1], e3 = eps[2], e4 = eps[3];
    const VecFn base_mean = truth.pi_mean;
    const double var = truth.pi_var;
    b.pi_mean = [base_mean, e1](const Eigen::RowVectorXd& v) { return base_mean(v) + e1; };
    b.pi_var = var;
    const VecFn noisy_mean = b.pi_mean;
    b.pi = [noisy_mean, var](double a, const Eigen::RowVectorXd& v) {
        const double d = a - noisy_mean(v);
        return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
    };
    const ScalarFn base_f = truth.f;
    b.f = [base_f, e1](double a) { return base_f(a - e1); };

    const PointFn base_mu = truth.mu;
    b.mu = [base_mu, e2](double a, const Eigen::RowVectorXd& x) { return base_mu(a, x) + e2; };
    const PointFn base_tau = truth.tau;
    b.tau = [base_tau, e3](double a, const Eigen::RowVectorXd& v) { return base_tau(a, v) + e3; };
    if (truth.tau_poly) {
        const TauPolyFn base_poly = truth.tau_poly;
        b.tau_poly = [base_poly, e3](const Eigen::RowVectorXd& v) {
            Eigen::Vector3d c = base_poly(v);
            c[0] += e3;
            return c;
        };
    }

    const PointFn base_rho = truth.rho;
    const double rho_min = truth.clip_rho_min;
    auto events = b.clip_events;
    b.rho = [base_rho, e4, rho_min, events](double a, const Eigen::RowVectorXd& x) {
        const double r = expit(logit(base_rho(a, x)) + e4);
        if (r < rho_min) {
            events->fetch_add(1, std::memory_order_relaxed);
            return rho_min;
        }
        return r;
    };
    b.w = make_stabilized_weight(b.f, b.pi, b.clip_w_max, b.clip_events);
    return b;
}

NuisanceBundle oracle_noisy_bundle(const NuisanceBundle& truth, double alpha, Eigen::Index n,
                                   Rng& rng) {
    if (!(alpha > 0.0)) throw UsageError("alpha must be positive");
    if (n < 1) throw UsageError("n must be at least 1");
    const double level = std::pow(static_cast<double>(n), -alpha);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Vector4d eps;
    for (int k = 0; k < 4; ++k) eps[k] = level + level * normal(rng);
    return apply_nuisance_errors(truth, eps);
}

} // namespace dosedr
