#pragma once

#include <utility>
#include <vector>

#include "treenet/types.hpp"

namespace treenet {

// Variational EM for the Poisson log-Normal mixed model
//   Y_ij ~ Poisson(exp(x_i' theta_j + o_ij + Z_ij)),   Z_i ~ N(0, Sigma),
// with a Gaussian N(m_i, S_i) variational posterior per site. The fit
// alternates per-site ascent in (m_i, S_i) with Newton updates of theta and
// the closed-form Sigma update; every move is backtracked on the bound, so
// the ELBO trace is nondecreasing.

struct PlnConfig {
  int max_iter = 200;
  double tol = 1e-6;  // relative ELBO change between outer iterations
  bool diagonal_vcov = false;  // restrict S_i to diagonal (faster, coarser)
  int mean_steps = 3;          // per-site Newton steps per sweep
  int cov_steps = 2;           // per-site covariance steps per sweep
  int theta_steps = 3;         // per-species Newton steps per sweep
};

struct PlnFit {
  Matrix theta;              // d x p regression coefficients
  Matrix sigma;              // p x p latent covariance
  Matrix vmean;              // n x p variational means
  std::vector<Matrix> vcov;  // n variational covariances, p x p each
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;
  bool diagonal_vcov = false;
};

/// Evidence lower bound at the given state. Throws ValidationError on
/// dimension mismatch or a non-PD sigma / S_i.
double elbo(const IntMatrix& y, const Matrix& x, const Matrix& o,
            const PlnFit& fit);

/// Fits the model. Throws ValidationError for a rank-deficient design (the
/// message names the aliased columns) and NumericError when the linear
/// predictor overflows exp (suggesting offset rescaling).
PlnFit fit_pln(const IntMatrix& y, const Matrix& x, const Matrix& o,
               const PlnConfig& config = {});

constexpr double kRhoClamp = 1e-6;

struct MomentEstimates {
  Vector sigma2;  // per-species conditional second moments, length p
  Matrix rho;     // conditional correlations, unit diagonal, |rho| <= 1-kRhoClamp
  std::vector<std::pair<int, int>> clamped;  // pairs where the clamp fired
};

/// Conditional moment estimates from the variational posterior:
///   sigma2_j = mean_i(m_ij^2 + S_i(j,j)),
///   rho_jk   = mean_i(m_ij m_ik + S_i(j,k)) / (sigma_j sigma_k), clamped.
/// Throws ValidationError when a species has vanishing second moment.
MomentEstimates conditional_moments(const PlnFit& fit);

}  // namespace treenet
