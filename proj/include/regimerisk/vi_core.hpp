#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace regimerisk {

// Digamma function for x > 0: upward recurrence to x >= 10, then the
// asymptotic series. Absolute error below 1e-13 on (0, inf).
double digamma(double x);

// Priors of the regime model.
//
//   c_t ~ Cat(pi)              mu_k ~ N(mu0[k], R0[k])
//   x_t | c_t = k ~ N(mu_k, M) theta_k ~ Dirichlet(alpha0.row(k))
//   d_t | c_t = k ~ Cat(theta_k)
struct VIHyperparams {
  Eigen::VectorXd pi;                // K, fixed prior cluster weights
  std::vector<Eigen::VectorXd> mu0;  // K vectors of length n
  std::vector<Eigen::MatrixXd> R0;   // K SPD n x n
  Eigen::MatrixXd M;                 // SPD n x n, shared intra-cluster covariance
  Eigen::MatrixXd alpha0;            // K x J, positive

  int clusters() const noexcept { return static_cast<int>(pi.size()); }
  int categories() const noexcept { return static_cast<int>(alpha0.cols()); }
  int dim() const noexcept { return static_cast<int>(M.rows()); }

  // Throws ConfigError when shapes disagree, pi is not a positive simplex,
  // alpha0 has a nonpositive entry, or R0 / M fail a Cholesky factorization.
  void validate() const;
};

// Observations (x_t, d_t). Categories are zero-based: d[t] in [0, J).
struct ObservationSet {
  Eigen::MatrixXd x;  // T x n
  std::vector<int> d;

  int size() const noexcept { return static_cast<int>(d.size()); }
  void validate(const VIHyperparams& hyper) const;
};

struct VariationalState {
  Eigen::MatrixXd phi;                 // T x K responsibilities
  std::vector<Eigen::VectorXd> mu_hat;  // K posterior means
  std::vector<Eigen::MatrixXd> R_hat;   // K posterior covariances
  Eigen::MatrixXd alpha_hat;           // K x J posterior Dirichlet parameters
  std::vector<double> elbo_trace;      // ELBO at initialization, then after every sweep
  int sweeps = 0;
  bool converged = false;

  // The prior state: mu_hat = mu0, R_hat = R0, alpha_hat = alpha0, phi empty.
  static VariationalState from_prior(const VIHyperparams& hyper, int observations = 0);
};

struct CaviOptions {
  int max_sweeps = 500;
  double rel_tol = 1e-8;
  int restarts = 3;  // random-responsibility initializations on top of the k-means++ one
  std::uint64_t seed = 0;
};

// phi_tk proportional to exp(log pi_k + x_t' M^-1 mu_k - tr(M^-1 (mu_k mu_k' + R_k)) / 2
//                             + digamma(alpha_k[d_t]) - digamma(sum_j alpha_kj)),
// normalized in log space.
Eigen::MatrixXd update_responsibilities(const ObservationSet& obs, const VIHyperparams& hyper,
                                        const VariationalState& state);

struct ClusterMoments {
  std::vector<Eigen::VectorXd> mu_hat;
  std::vector<Eigen::MatrixXd> R_hat;
};

// R_k = (R0_k^-1 + M^-1 sum_t phi_tk)^-1,
// mu_k = R_k (R0_k^-1 mu0_k + M^-1 sum_t phi_tk x_t).
ClusterMoments update_cluster_moments(const ObservationSet& obs, const VIHyperparams& hyper,
                                      const Eigen::MatrixXd& phi);

// alpha_kj = alpha0_kj + sum_t phi_tk [d_t == j].
Eigen::MatrixXd update_dirichlet(const ObservationSet& obs, const VIHyperparams& hyper, const Eigen::MatrixXd& phi);

// Evidence lower bound of the mean-field posterior, including every constant.
double elbo(const ObservationSet& obs, const VIHyperparams& hyper, const VariationalState& state);

// One CAVI sweep: responsibilities, then cluster moments, then Dirichlet
// parameters. Appends the resulting ELBO to the trace.
void cavi_sweep(const ObservationSet& obs, const VIHyperparams& hyper, VariationalState& state);

// Runs CAVI from the given responsibilities until the relative ELBO change
// |dELBO| / (1 + |ELBO|) drops below opts.rel_tol or opts.max_sweeps is hit.
VariationalState cavi_from(const ObservationSet& obs, const VIHyperparams& hyper, const Eigen::MatrixXd& phi0,
                           const CaviOptions& opts);

// k-means++ seeding then one hard assignment, plus opts.restarts random
// responsibility draws; returns the run with the highest final ELBO.
VariationalState cavi_fit(const ObservationSet& obs, const VIHyperparams& hyper, const CaviOptions& opts);

// k-means++ seeded centers (rows). Deterministic given the seed.
Eigen::MatrixXd kmeanspp_centers(const Eigen::MatrixXd& x, int clusters, std::uint64_t seed);

struct PriorOptions {
  double alpha0 = 1.0;
  double prior_scale = 4.0;  // R0 = prior_scale * diag(var x)
};

// Weak, scale-aware defaults: pi uniform, mu0 = k-means++ centers for `seed`,
// R0 = prior_scale * diag(var x), M = diag(var x), alpha0 constant.
VIHyperparams default_hyperparams(const Eigen::MatrixXd& x, int clusters, int categories, std::uint64_t seed,
                                  const PriorOptions& opts = {});

// Cluster probabilities for a new feature vector, without its category.
Eigen::VectorXd predictive_cluster_probs(const Eigen::VectorXd& x, const VIHyperparams& hyper,
                                         const VariationalState& state);

// p(d = j) = sum_k alpha_kj / sum_i alpha_ki * q_pred(k).
Eigen::VectorXd predictive_category_probs(const Eigen::VectorXd& x, const VIHyperparams& hyper,
                                          const VariationalState& state);

// Dirichlet means alpha_kj / sum_i alpha_ki, K x J.
Eigen::MatrixXd dirichlet_means(const Eigen::MatrixXd& alpha);

}  // namespace regimerisk
