#pragma once

#include <span>
#include <vector>

#include "dosedr/kernels.hpp"

namespace dosedr {

//! One local-linear weighted least-squares fit at a point: basis
//! g(t) = [1, (t-a)/h], kernel weights K((t-a)/h)/h, moment matrix
//! D = P_n[g K g^T], coefficients beta = D^{-1} P_n[g K phi].
struct LocalLinearFit {
    double center = 0.0;
    double bandwidth = 0.0;
    KernelSpec kernel;
    // D entries (symmetric 2x2, P_n-normalized over all supplied points).
    double d00 = 0.0, d01 = 0.0, d11 = 0.0;
    double beta0 = 0.0, beta1 = 0.0;
    int effective_points = 0;  // points with positive kernel weight
    bool degenerate = false;   // <2 distinct weighted points or det(D) below floor

    double det() const { return d00 * d11 - d01 * d01; }
};

//! Determinant floor below which a window is treated as degenerate.
inline constexpr double kDetFloor = 1e-12;

struct LocalLinearPoint {
    double estimate;  // NaN when fit.degenerate
    LocalLinearFit fit;
};

//! Closed-form local linear regression of phi on treatments at `a`.
//! Degenerate windows are signalled via fit.degenerate (no throw), so
//! callers can fall back to a kernel-weighted mean.
LocalLinearPoint local_linear_point(std::span<const double> treatments,
                                    std::span<const double> phi, double a, double h,
                                    const KernelSpec& kernel);

//! Linear-smoother weights W_i(a): sum_i W_i(a) phi_i reproduces
//! local_linear_point for every phi; sum W_i = 1 and sum W_i (A_i - a) = 0.
//! Throws BandwidthError on a degenerate window.
std::vector<double> smoother_weights(std::span<const double> treatments, double a, double h,
                                     const KernelSpec& kernel);

//! Self weight W_hat_h(A_i) = e1^T D_{hA_i}^{-1} e1 K(0) / (n h), the hat-matrix
//! diagonal of the smoother with point i included. Equals
//! smoother_weights(treatments, A_i, h, kernel)[i].
double self_weight(std::span<const double> treatments, std::size_t i, double h,
                   const KernelSpec& kernel);

//! Kernel-weighted mean (degenerate-window fallback). NaN when the window
//! carries no weight.
double nadaraya_watson(std::span<const double> treatments, std::span<const double> phi,
                       double a, double h, const KernelSpec& kernel);

struct LoocvScore {
    double h = 0.0;
    double score = 0.0;
    bool feasible = false;
};

//! Leave-one-out cross-validation scores via the shortcut identity
//! sum_i {(phi_i - theta_h(A_i)) / (1 - W_hat_h(A_i))}^2, which equals the
//! brute-force refit score exactly for this smoother. A candidate is
//! infeasible when any window is degenerate or |1 - W_hat| < 1e-8.
std::vector<LoocvScore> loocv_scores(std::span<const double> treatments,
                                     std::span<const double> phi,
                                     std::span<const double> grid, const KernelSpec& kernel);

//! Grid element minimizing the LOOCV score; ties break to the smallest h.
//! Throws BandwidthError when every candidate is infeasible.
double loocv_bandwidth(std::span<const double> treatments, std::span<const double> phi,
                       std::span<const double> grid, const KernelSpec& kernel);

//! Geometric candidate grid from lo_frac*(a_max - a_min) to
//! hi_frac*(a_max - a_min); scale-free default 0.05 .. 1.0 with 20 points.
std::vector<double> geometric_bandwidth_grid(double a_min, double a_max,
                                             double lo_frac = 0.05, double hi_frac = 1.0,
                                             int count = 20);

} // namespace dosedr
