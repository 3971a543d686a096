#pragma once

#include <vector>

#include <Eigen/Dense>

namespace dosedr {

//! Deterministic basis expansion of (a, x): intercept, x main effects, a,
//! selected a*x_j interactions and optionally a^2. Dropping the quadratic
//! term while keeping main effects and interactions realizes the
//! misspecified outcome model used by the benchmark studies.
struct FeatureMap {
    bool quadratic_a = true;
    std::vector<int> interactions;  // indices into x for a*x_j terms

    Eigen::Index dim(Eigen::Index x_dim) const {
        return 2 + x_dim + static_cast<Eigen::Index>(interactions.size()) + (quadratic_a ? 1 : 0);
    }

    //! Fills out = [1, x..., a, a*x_j..., (a^2)]; out must have size dim(x.size()).
    template <typename XVec>
    void eval(double a, const XVec& x, Eigen::VectorXd& out) const {
        const Eigen::Index p = x.size();
        out[0] = 1.0;
        for (Eigen::Index j = 0; j < p; ++j) out[1 + j] = x[j];
        Eigen::Index pos = 1 + p;
        out[pos++] = a;
        for (int j : interactions) out[pos++] = a * x[j];
        if (quadratic_a) out[pos++] = a * a;
    }

    //! Coefficient view of a fitted beta as a quadratic in a at fixed x:
    //! beta^T features(a, x) = c0(x) + c1(x) a + c2 a^2.
    template <typename XVec>
    void poly_in_a(const Eigen::VectorXd& beta, const XVec& x, double& c0, double& c1,
                   double& c2) const {
        const Eigen::Index p = x.size();
        c0 = beta[0];
        for (Eigen::Index j = 0; j < p; ++j) c0 += beta[1 + j] * x[j];
        Eigen::Index pos = 1 + p;
        c1 = beta[pos++];
        for (int j : interactions) c1 += beta[pos++] * x[j];
        c2 = quadratic_a ? beta[pos] : 0.0;
    }
};

//! Intercept + main effects of v (the conditional-density mean model).
inline Eigen::Index mean_design_dim(Eigen::Index v_dim) { return 1 + v_dim; }

template <typename VVec>
void mean_design(const VVec& v, Eigen::VectorXd& out) {
    out[0] = 1.0;
    for (Eigen::Index j = 0; j < v.size(); ++j) out[1 + j] = v[j];
}

} // namespace dosedr
