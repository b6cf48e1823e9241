#include "treenet/pln.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <string>

namespace treenet {

namespace {

constexpr double kExpCap = 700.0;       // exp argument guard
constexpr double kSigmaEigFloor = 1e-8;
constexpr int kMaxBacktracks = 40;

double neg_inf() { return -std::numeric_limits<double>::infinity(); }

// sum_j y_j * z_j - exp(z_j + s_j / 2), -inf on exp overflow. The Poisson
// part of the bound for one site; s is the variational variance diagonal.
double site_poisson_term(const Vector& y, const Vector& zbase, const Vector& m,
                         const Vector& s_diag) {
  double acc = 0.0;
  for (Index j = 0; j < y.size(); ++j) {
    const double z = zbase(j) + m(j);
    const double e = z + 0.5 * s_diag(j);
    if (e > kExpCap) return neg_inf();
    acc += y(j) * z - std::exp(e);
  }
  return acc;
}

void check_dimensions(const IntMatrix& y, const Matrix& x, const Matrix& o) {
  if (y.rows() < 1 || y.cols() < 1)
    throw ValidationError("count matrix must be non-empty");
  if (y.minCoeff() < 0)
    throw ValidationError("count matrix has negative entries");
  if (x.rows() != y.rows())
    throw ValidationError("design matrix row count does not match counts");
  if (x.cols() < 1) throw ValidationError("design matrix needs d >= 1");
  if (!x.allFinite()) throw ValidationError("design matrix has non-finite entries");
  if (o.rows() != y.rows() || o.cols() != y.cols())
    throw ValidationError("offset matrix shape does not match counts");
  if (!o.allFinite()) throw ValidationError("offset matrix has non-finite entries");
}

void check_full_rank(const Eigen::ColPivHouseholderQR<Matrix>& qr, Index d) {
  if (qr.rank() == d) return;
  std::string cols;
  const auto perm = qr.colsPermutation().indices();
  for (Index i = qr.rank(); i < d; ++i) {
    if (!cols.empty()) cols += ", ";
    cols += std::to_string(perm(i));
  }
  throw ValidationError("design matrix is rank deficient; aliased columns: " +
                        cols);
}

struct SigmaView {
  Matrix omega;    // Sigma^-1
  double log_det;  // log det Sigma

  explicit SigmaView(const Matrix& sigma) {
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw ValidationError("latent covariance is not positive definite");
    log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    omega = llt.solve(Matrix::Identity(sigma.rows(), sigma.rows()));
    omega = 0.5 * (omega + omega.transpose()).eval();
  }
};

// Gaussian part of the bound for one site:
// 0.5 * (log det S_i - log det Sigma - tr(Omega (S_i + m m')) + p).
double site_gaussian_term(const SigmaView& sv, const Vector& m, const Matrix& s,
                          double log_det_s) {
  const double trace = (sv.omega.cwiseProduct(s)).sum() + m.dot(sv.omega * m);
  return 0.5 * (log_det_s - sv.log_det - trace + static_cast<double>(m.size()));
}

double log_det_spd(const Matrix& s) {
  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success)
    throw ValidationError("variational covariance is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

// Mutable fit state plus cached quantities shared by the update sweeps.
struct Optimizer {
  const IntMatrix& y;
  const Matrix& x;
  const Matrix& o;
  const PlnConfig& cfg;
  const Index n, p, d;

  Matrix theta;
  Matrix sigma;
  Matrix vmean;
  std::vector<Matrix> vcov;

  Matrix zbase;  // x theta + o
  SigmaView sv;
  Matrix yd;  // counts as doubles

  Optimizer(const IntMatrix& y_, const Matrix& x_, const Matrix& o_,
            const PlnConfig& cfg_, Matrix theta0, Matrix sigma0, Matrix m0)
      : y(y_), x(x_), o(o_), cfg(cfg_), n(y_.rows()), p(y_.cols()),
        d(x_.cols()), theta(std::move(theta0)), sigma(std::move(sigma0)),
        vmean(std::move(m0)), sv(sigma) {
    vcov.assign(static_cast<size_t>(n), (0.1 * Matrix::Identity(p, p)).eval());
    zbase = x * theta + o;
    yd = y.cast<double>();
  }

  double bound() const {
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      const Matrix& s = vcov[static_cast<size_t>(i)];
      acc += site_poisson_term(yd.row(i), zbase.row(i), vmean.row(i),
                               s.diagonal());
      acc += site_gaussian_term(sv, vmean.row(i), s, log_det_spd(s));
    }
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < p; ++j) acc -= std::lgamma(yd(i, j) + 1.0);
    return acc;
  }

  // Per-site rate diagonal a_j = exp(zbase + m + S_jj/2), +inf capped.
  Vector site_rate(Index i) const {
    const Matrix& s = vcov[static_cast<size_t>(i)];
    Vector a(p);
    for (Index j = 0; j < p; ++j) {
      const double e = zbase(i, j) + vmean(i, j) + 0.5 * s(j, j);
      a(j) = e > kExpCap ? std::numeric_limits<double>::infinity() : std::exp(e);
    }
    return a;
  }

  // Newton ascent with backtracking on the site objective in m_i.
  void update_mean(Index i) {
    const Vector yrow = yd.row(i);
    const Vector zb = zbase.row(i);
    const Matrix& s = vcov[static_cast<size_t>(i)];
    const Vector s_diag = s.diagonal();
    Vector m = vmean.row(i);

    auto objective = [&](const Vector& mv) {
      const double pois = site_poisson_term(yrow, zb, mv, s_diag);
      return pois == neg_inf() ? neg_inf()
                               : pois - 0.5 * mv.dot(sv.omega * mv);
    };

    double f = objective(m);
    for (int step = 0; step < cfg.mean_steps; ++step) {
      Vector a(p);
      for (Index j = 0; j < p; ++j)
        a(j) = std::exp(std::min(zb(j) + m(j) + 0.5 * s_diag(j), kExpCap));
      const Vector grad = yrow - a - sv.omega * m;
      Matrix h = sv.omega;
      h.diagonal() += a;
      const Vector dir = Eigen::LLT<Matrix>(h).solve(grad);
      double t = 1.0;
      bool moved = false;
      for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= 0.5) {
        const Vector cand = m + t * dir;
        const double fc = objective(cand);
        if (fc >= f) {
          m = cand;
          f = fc;
          moved = true;
          break;
        }
      }
      if (!moved || grad.norm() < 1e-10) break;
    }
    vmean.row(i) = m;
  }

  // Quasi-Newton step toward S* = (Omega + diag(a))^-1, line-searched along
  // the Cholesky factor so every candidate stays positive definite.
  void update_cov_full(Index i) {
    Matrix& s = vcov[static_cast<size_t>(i)];
    const Vector yrow = yd.row(i);
    const Vector zb = zbase.row(i);
    const Vector m = vmean.row(i);

    auto objective = [&](const Matrix& chol_lower) {
      double log_det = 0.0;
      Vector s_diag(p);
      for (Index j = 0; j < p; ++j) {
        const double cjj = chol_lower(j, j);
        if (!(cjj > 0.0)) return neg_inf();
        log_det += 2.0 * std::log(cjj);
        s_diag(j) = chol_lower.row(j).head(j + 1).squaredNorm();
      }
      const double pois = site_poisson_term(yrow, zb, m, s_diag);
      if (pois == neg_inf()) return neg_inf();
      const Matrix sc = chol_lower * chol_lower.transpose();
      return pois + 0.5 * (log_det - (sv.omega.cwiseProduct(sc)).sum());
    };

    Eigen::LLT<Matrix> llt_s(s);
    if (llt_s.info() != Eigen::Success)
      throw NumericError("variational covariance lost positive definiteness");
    Matrix c = llt_s.matrixL();
    double f = objective(c);

    for (int step = 0; step < cfg.cov_steps; ++step) {
      Vector a(p);
      for (Index j = 0; j < p; ++j)
        a(j) = std::exp(std::min(zb(j) + m(j) + 0.5 * s(j, j), kExpCap));
      Matrix target = sv.omega;
      target.diagonal() += a;
      // S* via Cholesky of the target precision.
      const Matrix s_star = Eigen::LLT<Matrix>(target).solve(
          Matrix::Identity(p, p));
      Eigen::LLT<Matrix> llt_star(symmetrize(s_star));
      if (llt_star.info() != Eigen::Success) break;
      const Matrix c_star = llt_star.matrixL();

      double t = 1.0;
      bool moved = false;
      for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= 0.5) {
        const Matrix cand = c + t * (c_star - c);
        const double fc = objective(cand);
        if (fc >= f) {
          c = cand;
          f = fc;
          moved = true;
          break;
        }
      }
      if (!moved) break;
      s = symmetrize(c * c.transpose());
    }
  }

  // Diagonal family: same move on the per-species standard deviations.
  void update_cov_diagonal(Index i) {
    Matrix& s = vcov[static_cast<size_t>(i)];
    const Vector yrow = yd.row(i);
    const Vector zb = zbase.row(i);
    const Vector m = vmean.row(i);
    Vector sd = s.diagonal().cwiseSqrt();

    auto objective = [&](const Vector& sdv) {
      if ((sdv.array() <= 0.0).any()) return neg_inf();
      const Vector s_diag = sdv.cwiseProduct(sdv);
      const double pois = site_poisson_term(yrow, zb, m, s_diag);
      if (pois == neg_inf()) return neg_inf();
      return pois + sdv.array().log().sum() -
             0.5 * sv.omega.diagonal().dot(s_diag);
    };

    double f = objective(sd);
    for (int step = 0; step < cfg.cov_steps; ++step) {
      Vector a(p);
      for (Index j = 0; j < p; ++j)
        a(j) = std::exp(std::min(zb(j) + m(j) + 0.5 * sd(j) * sd(j), kExpCap));
      const Vector target =
          (sv.omega.diagonal() + a).cwiseInverse().cwiseSqrt();
      double t = 1.0;
      bool moved = false;
      for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= 0.5) {
        const Vector cand = sd + t * (target - sd);
        const double fc = objective(cand);
        if (fc >= f) {
          sd = cand;
          f = fc;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    s.setZero();
    s.diagonal() = sd.cwiseProduct(sd);
  }

  // Per-species Newton with backtracking on the Poisson surrogate.
  void update_theta() {
    for (Index j = 0; j < p; ++j) {
      Vector cj(n);  // o + m + S_jj/2 per site
      for (Index i = 0; i < n; ++i)
        cj(i) = o(i, j) + vmean(i, j) +
                0.5 * vcov[static_cast<size_t>(i)](j, j);
      const Vector yj = yd.col(j);
      Vector th = theta.col(j);

      auto objective = [&](const Vector& tv) {
        const Vector eta = x * tv + cj;
        if ((eta.array() > kExpCap).any()) return neg_inf();
        return yj.dot(x * tv) - eta.array().exp().sum();
      };

      double f = objective(th);
      for (int step = 0; step < cfg.theta_steps; ++step) {
        const Vector a = ((x * th + cj).array().min(kExpCap)).exp();
        const Vector grad = x.transpose() * (yj - a);
        Matrix h = x.transpose() * a.asDiagonal() * x;
        h.diagonal().array() += 1e-12;
        const Vector dir = Eigen::LLT<Matrix>(h).solve(grad);
        double t = 1.0;
        bool moved = false;
        for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= 0.5) {
          const Vector cand = th + t * dir;
          const double fc = objective(cand);
          if (fc >= f) {
            th = cand;
            f = fc;
            moved = true;
            break;
          }
        }
        if (!moved || grad.norm() < 1e-10) break;
      }
      theta.col(j) = th;
    }
    zbase = x * theta + o;
  }

  // Closed-form maximizer with an eigenvalue floor.
  void update_sigma() {
    Matrix acc = vmean.transpose() * vmean;
    for (const Matrix& s : vcov) acc += s;
    sigma = symmetrize(acc / static_cast<double>(n));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma);
    if (eig.info() != Eigen::Success)
      throw NumericError("latent covariance eigendecomposition failed");
    if (eig.eigenvalues().minCoeff() < kSigmaEigFloor) {
      const Vector vals = eig.eigenvalues().cwiseMax(kSigmaEigFloor);
      sigma = symmetrize(eig.eigenvectors() * vals.asDiagonal() *
                         eig.eigenvectors().transpose());
    }
    sv = SigmaView(sigma);
  }
};

}  // namespace

double elbo(const IntMatrix& y, const Matrix& x, const Matrix& o,
            const PlnFit& fit) {
  check_dimensions(y, x, o);
  const Index n = y.rows(), p = y.cols();
  if (fit.theta.rows() != x.cols() || fit.theta.cols() != p)
    throw ValidationError("theta shape mismatch");
  if (fit.vmean.rows() != n || fit.vmean.cols() != p)
    throw ValidationError("variational mean shape mismatch");
  if (fit.vcov.size() != static_cast<size_t>(n))
    throw ValidationError("variational covariance count mismatch");

  const SigmaView sv(fit.sigma);
  const Matrix zbase = x * fit.theta + o;
  const Matrix yd = y.cast<double>();
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Matrix& s = fit.vcov[static_cast<size_t>(i)];
    acc += site_poisson_term(yd.row(i), zbase.row(i), fit.vmean.row(i),
                             s.diagonal());
    acc += site_gaussian_term(sv, fit.vmean.row(i), s, log_det_spd(s));
    for (Index j = 0; j < p; ++j) acc -= std::lgamma(yd(i, j) + 1.0);
  }
  return acc;
}

PlnFit fit_pln(const IntMatrix& y, const Matrix& x, const Matrix& o,
               const PlnConfig& config) {
  check_dimensions(y, x, o);
  const Index n = y.rows(), p = y.cols(), d = x.cols();

  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  check_full_rank(qr, d);

  // Log-linear start: species-wise regression of log(1+y) - o, residuals as
  // variational means, their covariance (plus the initial S) as Sigma.
  const Matrix lin = (y.cast<double>().array() + 1.0).log().matrix() - o;
  Matrix theta0 = qr.solve(lin);
  Matrix m0 = lin - x * theta0;
  Matrix sigma0 = symmetrize((m0.transpose() * m0) / static_cast<double>(n)) +
                  0.1 * Matrix::Identity(p, p);

  Optimizer opt(y, x, o, config, std::move(theta0), std::move(sigma0),
                std::move(m0));

  PlnFit fit;
  fit.diagonal_vcov = config.diagonal_vcov;

  double current = opt.bound();
  if (!std::isfinite(current)) {
    throw NumericError(
        "linear predictor overflows exp at the starting point; consider "
        "rescaling offsets or covariates");
  }
  fit.elbo_trace.push_back(current);

  for (int iter = 0; iter < config.max_iter; ++iter) {
    for (Index i = 0; i < n; ++i) {
      opt.update_mean(i);
      if (config.diagonal_vcov)
        opt.update_cov_diagonal(i);
      else
        opt.update_cov_full(i);
    }
    opt.update_theta();
    opt.update_sigma();

    const double next = opt.bound();
    if (!std::isfinite(next))
      throw NumericError("ELBO became non-finite at iteration " +
                         std::to_string(iter));
    fit.elbo_trace.push_back(next);
    fit.iterations = iter + 1;
    if (std::abs(next - current) <
        config.tol * (std::abs(current) + 1e-12)) {
      fit.converged = true;
      current = next;
      break;
    }
    current = next;
  }

  fit.theta = std::move(opt.theta);
  fit.sigma = std::move(opt.sigma);
  fit.vmean = std::move(opt.vmean);
  fit.vcov = std::move(opt.vcov);
  return fit;
}

MomentEstimates conditional_moments(const PlnFit& fit) {
  const Index n = fit.vmean.rows(), p = fit.vmean.cols();
  if (fit.vcov.size() != static_cast<size_t>(n))
    throw ValidationError("fit has inconsistent variational state");

  Matrix second = fit.vmean.transpose() * fit.vmean;
  for (const Matrix& s : fit.vcov) second += s;
  second /= static_cast<double>(n);

  MomentEstimates est;
  est.sigma2 = second.diagonal();
  for (Index j = 0; j < p; ++j) {
    if (!(est.sigma2(j) > 1e-12)) {
      throw ValidationError("species " + std::to_string(j) +
                            " has a degenerate conditional second moment");
    }
  }
  est.rho = Matrix::Identity(p, p);
  const Vector sd = est.sigma2.cwiseSqrt();
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) {
      double r = second(j, k) / (sd(j) * sd(k));
      if (std::abs(r) > 1.0 - kRhoClamp) {
        r = std::copysign(1.0 - kRhoClamp, r);
        est.clamped.emplace_back(static_cast<int>(j), static_cast<int>(k));
      }
      est.rho(j, k) = r;
      est.rho(k, j) = r;
    }
  }
  return est;
}

}  // namespace treenet
