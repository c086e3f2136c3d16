#include "regimerisk/vi_core.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "regimerisk/error.hpp"
#include "regimerisk/stats.hpp"

namespace regimerisk {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::LLT<MatrixXd> checked_llt(const MatrixXd& m, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + " is not positive definite");
  return llt;
}

double log_det(const Eigen::LLT<MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Inverses and log-determinants of the fixed hyperparameters.
struct ModelCache {
  MatrixXd M_inv;
  double log_det_M = 0.0;
  std::vector<MatrixXd> R0_inv;
  std::vector<VectorXd> R0_inv_mu0;
  std::vector<double> log_det_R0;

  explicit ModelCache(const VIHyperparams& h) {
    const int n = h.dim();
    const auto llt_m = checked_llt(h.M, "M");
    M_inv = symmetrize(llt_m.solve(MatrixXd::Identity(n, n)));
    log_det_M = log_det(llt_m);
    for (int k = 0; k < h.clusters(); ++k) {
      const auto llt = checked_llt(h.R0[k], "R0");
      R0_inv.push_back(symmetrize(llt.solve(MatrixXd::Identity(n, n))));
      R0_inv_mu0.push_back(R0_inv.back() * h.mu0[k]);
      log_det_R0.push_back(log_det(llt));
    }
  }
};

// k-independent part dropped: log pi_k + x' M^-1 mu_k - tr(M^-1 (mu_k mu_k' + R_k)) / 2.
VectorXd cluster_log_terms(const VectorXd& x, const VIHyperparams& h, const ModelCache& c,
                           const std::vector<VectorXd>& mu_hat, const std::vector<MatrixXd>& R_hat) {
  const int K = h.clusters();
  VectorXd out(K);
  for (int k = 0; k < K; ++k) {
    const VectorXd m_mu = c.M_inv * mu_hat[k];
    const double quad = mu_hat[k].dot(m_mu) + (c.M_inv.cwiseProduct(R_hat[k])).sum();
    out(k) = std::log(h.pi(k)) + x.dot(m_mu) - 0.5 * quad;
  }
  return out;
}

VectorXd softmax(const VectorXd& logits) {
  const double mx = logits.maxCoeff();
  if (!std::isfinite(mx)) throw NumericError("non-finite cluster log-weight");
  VectorXd w = (logits.array() - mx).exp().matrix();
  return w / w.sum();
}

MatrixXd responsibilities(const ObservationSet& obs, const VIHyperparams& h, const ModelCache& c,
                          const VariationalState& s) {
  const int T = obs.size();
  const int K = h.clusters();
  const int J = h.categories();
  MatrixXd e_log_theta(K, J);
  for (int k = 0; k < K; ++k) {
    const double psi_sum = digamma(s.alpha_hat.row(k).sum());
    for (int j = 0; j < J; ++j) e_log_theta(k, j) = digamma(s.alpha_hat(k, j)) - psi_sum;
  }
  MatrixXd phi(T, K);
  for (int t = 0; t < T; ++t) {
    VectorXd logits = cluster_log_terms(obs.x.row(t).transpose(), h, c, s.mu_hat, s.R_hat);
    logits += e_log_theta.col(obs.d[t]);
    phi.row(t) = softmax(logits).transpose();
  }
  return phi;
}

ClusterMoments moments(const ObservationSet& obs, const VIHyperparams& h, const ModelCache& c, const MatrixXd& phi) {
  const int K = h.clusters();
  const int n = h.dim();
  ClusterMoments out;
  for (int k = 0; k < K; ++k) {
    const double nk = phi.col(k).sum();
    if (nk == 0.0) {
      out.mu_hat.push_back(h.mu0[k]);
      out.R_hat.push_back(h.R0[k]);
      continue;
    }
    const VectorXd sx = obs.x.transpose() * phi.col(k);
    const MatrixXd precision = symmetrize(c.R0_inv[k] + nk * c.M_inv);
    const auto llt = checked_llt(precision, "posterior precision");
    const MatrixXd R = symmetrize(llt.solve(MatrixXd::Identity(n, n)));
    out.mu_hat.push_back(R * (c.R0_inv_mu0[k] + c.M_inv * sx));
    out.R_hat.push_back(R);
  }
  return out;
}

double elbo_impl(const ObservationSet& obs, const VIHyperparams& h, const ModelCache& c, const VariationalState& s) {
  const int T = obs.size();
  const int K = h.clusters();
  const int J = h.categories();
  const int n = h.dim();
  double total = 0.0;

  for (int k = 0; k < K; ++k) {
    // Cluster mean: E log p(mu_k) + H(q_mu_k).
    const auto llt_r = checked_llt(s.R_hat[k], "R_hat");
    const VectorXd dm = s.mu_hat[k] - h.mu0[k];
    total += -0.5 * (n * kLog2Pi + c.log_det_R0[k] + c.R0_inv[k].cwiseProduct(s.R_hat[k]).sum() +
                     dm.dot(c.R0_inv[k] * dm));
    total += 0.5 * n * (1.0 + kLog2Pi) + 0.5 * log_det(llt_r);

    // Proportions: E log p(theta_k) - E log q(theta_k).
    const double a0_sum = h.alpha0.row(k).sum();
    const double ah_sum = s.alpha_hat.row(k).sum();
    const double psi_sum = digamma(ah_sum);
    total += std::lgamma(a0_sum) - std::lgamma(ah_sum);
    for (int j = 0; j < J; ++j) {
      const double e_log = digamma(s.alpha_hat(k, j)) - psi_sum;
      total += -std::lgamma(h.alpha0(k, j)) + std::lgamma(s.alpha_hat(k, j)) +
               (h.alpha0(k, j) - s.alpha_hat(k, j)) * e_log;
    }
  }

  MatrixXd e_log_theta(K, J);
  std::vector<double> trace_term(K);
  for (int k = 0; k < K; ++k) {
    const double psi_sum = digamma(s.alpha_hat.row(k).sum());
    for (int j = 0; j < J; ++j) e_log_theta(k, j) = digamma(s.alpha_hat(k, j)) - psi_sum;
    trace_term[k] = c.M_inv.cwiseProduct(s.R_hat[k]).sum();
  }
  const double log_norm_x = -0.5 * (n * kLog2Pi + c.log_det_M);
  for (int t = 0; t < T; ++t) {
    const VectorXd xt = obs.x.row(t).transpose();
    for (int k = 0; k < K; ++k) {
      const double p = s.phi(t, k);
      if (p == 0.0) continue;
      const VectorXd r = xt - s.mu_hat[k];
      const double e_log_x = log_norm_x - 0.5 * (r.dot(c.M_inv * r) + trace_term[k]);
      total += p * (std::log(h.pi(k)) + e_log_x + e_log_theta(k, obs.d[t]) - std::log(p));
    }
  }
  if (!std::isfinite(total)) throw NumericError("ELBO is not finite");
  return total;
}

void check_state_shape(const ObservationSet& obs, const VIHyperparams& h, const VariationalState& s, bool need_phi) {
  const auto K = h.clusters();
  if (static_cast<int>(s.mu_hat.size()) != K || static_cast<int>(s.R_hat.size()) != K || s.alpha_hat.rows() != K ||
      s.alpha_hat.cols() != h.categories()) {
    throw ConfigError("variational state does not match the hyperparameters");
  }
  if (need_phi && (s.phi.rows() != obs.size() || s.phi.cols() != K)) {
    throw ConfigError("responsibility matrix does not match the observations");
  }
}

void check_phi(const ObservationSet& obs, const VIHyperparams& h, const MatrixXd& phi) {
  if (phi.rows() != obs.size() || phi.cols() != h.clusters()) {
    throw ConfigError("responsibility matrix must be T x K");
  }
}

}  // namespace

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("digamma: argument must be a positive finite number");
  double shift = 0.0;
  while (x < 10.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number series in 1/x^2.
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

void VIHyperparams::validate() const {
  const int K = clusters();
  if (K < 1) throw ConfigError("need at least one cluster");
  if (categories() < 1 || alpha0.rows() != K) throw ConfigError("alpha0 must be K x J with J >= 1");
  if (static_cast<int>(mu0.size()) != K || static_cast<int>(R0.size()) != K) {
    throw ConfigError("mu0 and R0 need one entry per cluster");
  }
  const int n = dim();
  if (n < 1 || M.cols() != n) throw ConfigError("M must be a square matrix of the feature dimension");
  if (std::abs(pi.sum() - 1.0) > 1e-9 || (pi.array() <= 0.0).any()) {
    throw ConfigError("pi must be a simplex with positive entries");
  }
  if ((alpha0.array() <= 0.0).any() || !alpha0.allFinite()) throw ConfigError("alpha0 entries must be positive");
  const auto spd = [](const MatrixXd& m, const std::string& what) {
    if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + m.cwiseAbs().maxCoeff())) {
      throw ConfigError(what + " must be symmetric");
    }
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) throw ConfigError(what + " must be positive definite");
  };
  spd(M, "M");
  for (int k = 0; k < K; ++k) {
    if (mu0[k].size() != n || !mu0[k].allFinite()) throw ConfigError("mu0 entries must be finite n-vectors");
    if (R0[k].rows() != n || R0[k].cols() != n) throw ConfigError("R0 entries must be n x n");
    spd(R0[k], "R0[" + std::to_string(k) + "]");
  }
}

void ObservationSet::validate(const VIHyperparams& hyper) const {
  if (x.rows() != static_cast<Eigen::Index>(d.size())) throw ConfigError("x and d must have the same length");
  if (x.cols() != hyper.dim()) throw ConfigError("feature dimension does not match the hyperparameters");
  if (!x.allFinite()) throw DataError("observations contain non-finite features");
  for (int v : d) {
    if (v < 0 || v >= hyper.categories()) throw DataError("category index out of range");
  }
}

VariationalState VariationalState::from_prior(const VIHyperparams& hyper, int observations) {
  VariationalState s;
  s.phi = MatrixXd::Zero(observations, hyper.clusters());
  s.mu_hat = hyper.mu0;
  s.R_hat = hyper.R0;
  s.alpha_hat = hyper.alpha0;
  return s;
}

Eigen::MatrixXd update_responsibilities(const ObservationSet& obs, const VIHyperparams& hyper,
                                        const VariationalState& state) {
  check_state_shape(obs, hyper, state, false);
  return responsibilities(obs, hyper, ModelCache(hyper), state);
}

ClusterMoments update_cluster_moments(const ObservationSet& obs, const VIHyperparams& hyper,
                                      const Eigen::MatrixXd& phi) {
  check_phi(obs, hyper, phi);
  return moments(obs, hyper, ModelCache(hyper), phi);
}

Eigen::MatrixXd update_dirichlet(const ObservationSet& obs, const VIHyperparams& hyper, const Eigen::MatrixXd& phi) {
  check_phi(obs, hyper, phi);
  MatrixXd alpha = hyper.alpha0;
  for (int t = 0; t < obs.size(); ++t) alpha.col(obs.d[t]) += phi.row(t).transpose();
  return alpha;
}

double elbo(const ObservationSet& obs, const VIHyperparams& hyper, const VariationalState& state) {
  check_state_shape(obs, hyper, state, true);
  return elbo_impl(obs, hyper, ModelCache(hyper), state);
}

namespace {

void sweep_impl(const ObservationSet& obs, const VIHyperparams& h, const ModelCache& c, VariationalState& s) {
  s.phi = responsibilities(obs, h, c, s);
  auto m = moments(obs, h, c, s.phi);
  s.mu_hat = std::move(m.mu_hat);
  s.R_hat = std::move(m.R_hat);
  s.alpha_hat = update_dirichlet(obs, h, s.phi);
  s.elbo_trace.push_back(elbo_impl(obs, h, c, s));
  ++s.sweeps;
}

VariationalState run_from(const ObservationSet& obs, const VIHyperparams& h, const ModelCache& c, const MatrixXd& phi0,
                          const CaviOptions& opts) {
  VariationalState s;
  s.phi = phi0;
  auto m = moments(obs, h, c, s.phi);
  s.mu_hat = std::move(m.mu_hat);
  s.R_hat = std::move(m.R_hat);
  s.alpha_hat = update_dirichlet(obs, h, s.phi);
  s.elbo_trace.push_back(elbo_impl(obs, h, c, s));
  for (int i = 0; i < opts.max_sweeps; ++i) {
    const double before = s.elbo_trace.back();
    sweep_impl(obs, h, c, s);
    const double after = s.elbo_trace.back();
    if (std::abs(after - before) / (1.0 + std::abs(after)) < opts.rel_tol) {
      s.converged = true;
      break;
    }
  }
  return s;
}

}  // namespace

void cavi_sweep(const ObservationSet& obs, const VIHyperparams& hyper, VariationalState& state) {
  check_state_shape(obs, hyper, state, false);
  sweep_impl(obs, hyper, ModelCache(hyper), state);
}

VariationalState cavi_from(const ObservationSet& obs, const VIHyperparams& hyper, const Eigen::MatrixXd& phi0,
                           const CaviOptions& opts) {
  hyper.validate();
  obs.validate(hyper);
  check_phi(obs, hyper, phi0);
  return run_from(obs, hyper, ModelCache(hyper), phi0, opts);
}

Eigen::MatrixXd kmeanspp_centers(const Eigen::MatrixXd& x, int clusters, std::uint64_t seed) {
  const auto T = x.rows();
  if (T < 1) throw DataError("k-means++ needs at least one observation");
  if (clusters < 1) throw ConfigError("k-means++ needs at least one cluster");
  // Standardize so features on different scales contribute comparably.
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd scale = ((x.rowwise() - mean).array().square().colwise().sum() /
                              std::max<double>(1.0, static_cast<double>(T - 1)))
                                 .sqrt();
  for (Eigen::Index j = 0; j < scale.size(); ++j) {
    if (!(scale(j) > 1e-12)) scale(j) = 1.0;
  }
  const MatrixXd z = (x.rowwise() - mean).array().rowwise() / scale.array();

  Rng rng = Rng(seed).split(0x6b6d);
  MatrixXd centers(clusters, x.cols());
  std::vector<double> dist(static_cast<std::size_t>(T), std::numeric_limits<double>::infinity());
  std::vector<double> uniform(static_cast<std::size_t>(T), 1.0);
  Eigen::Index pick = static_cast<Eigen::Index>(rng.categorical(uniform));
  for (int k = 0; k < clusters; ++k) {
    if (k > 0) {
      double total = 0.0;
      for (double d : dist) total += d;
      pick = static_cast<Eigen::Index>(total > 0.0 ? rng.categorical(dist) : rng.categorical(uniform));
    }
    centers.row(k) = x.row(pick);
    for (Eigen::Index t = 0; t < T; ++t) {
      const double d2 = (z.row(t) - z.row(pick)).squaredNorm();
      dist[static_cast<std::size_t>(t)] = std::min(dist[static_cast<std::size_t>(t)], d2);
    }
  }
  return centers;
}

VariationalState cavi_fit(const ObservationSet& obs, const VIHyperparams& hyper, const CaviOptions& opts) {
  hyper.validate();
  obs.validate(hyper);
  const int T = obs.size();
  if (T < 1) throw DataError("cavi_fit needs at least one observation");
  const int K = hyper.clusters();
  const ModelCache cache(hyper);

  // Hard assignment to the nearest k-means++ center, in the M^-1 metric.
  const MatrixXd centers = kmeanspp_centers(obs.x, K, opts.seed);
  MatrixXd phi0 = MatrixXd::Zero(T, K);
  for (int t = 0; t < T; ++t) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const VectorXd r = (obs.x.row(t) - centers.row(k)).transpose();
      const double d = r.dot(cache.M_inv * r);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    phi0(t, best) = 1.0;
  }
  VariationalState best = run_from(obs, hyper, cache, phi0, opts);

  const std::vector<double> flat(static_cast<std::size_t>(K), 1.0);
  for (int r = 0; r < opts.restarts; ++r) {
    Rng rng = Rng(opts.seed).split(static_cast<std::uint64_t>(r) + 1);
    MatrixXd phi(T, K);
    for (int t = 0; t < T; ++t) {
      const auto row = rng.dirichlet(flat);
      for (int k = 0; k < K; ++k) phi(t, k) = row[static_cast<std::size_t>(k)];
    }
    VariationalState cand = run_from(obs, hyper, cache, phi, opts);
    if (cand.elbo_trace.back() > best.elbo_trace.back()) best = std::move(cand);
  }
  return best;
}

VIHyperparams default_hyperparams(const Eigen::MatrixXd& x, int clusters, int categories, std::uint64_t seed,
                                  const PriorOptions& opts) {
  if (clusters < 1 || categories < 1) throw ConfigError("K and J must be positive");
  if (x.rows() < 1 || x.cols() < 1) throw DataError("default priors need at least one observation");
  if (!(opts.alpha0 > 0.0) || !(opts.prior_scale > 0.0)) throw ConfigError("alpha0 and prior_scale must be positive");
  const auto n = x.cols();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  VectorXd var(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double v = x.rows() > 1 ? (x.col(j).array() - mean(j)).square().sum() / static_cast<double>(x.rows() - 1)
                                  : 0.0;
    var(j) = v > 1e-12 ? v : 1.0;
  }
  VIHyperparams h;
  h.pi = VectorXd::Constant(clusters, 1.0 / clusters);
  h.M = var.asDiagonal();
  h.alpha0 = MatrixXd::Constant(clusters, categories, opts.alpha0);
  const MatrixXd centers = kmeanspp_centers(x, clusters, seed);
  for (int k = 0; k < clusters; ++k) {
    h.mu0.push_back(centers.row(k).transpose());
    h.R0.push_back((opts.prior_scale * var).asDiagonal());
  }
  return h;
}

Eigen::VectorXd predictive_cluster_probs(const Eigen::VectorXd& x, const VIHyperparams& hyper,
                                         const VariationalState& state) {
  if (x.size() != hyper.dim()) throw ConfigError("feature vector has the wrong dimension");
  if (!x.allFinite()) throw DataError("feature vector is not finite");
  const ModelCache cache(hyper);
  return softmax(cluster_log_terms(x, hyper, cache, state.mu_hat, state.R_hat));
}

Eigen::MatrixXd dirichlet_means(const Eigen::MatrixXd& alpha) {
  return alpha.array().colwise() / alpha.rowwise().sum().array();
}

Eigen::VectorXd predictive_category_probs(const Eigen::VectorXd& x, const VIHyperparams& hyper,
                                          const VariationalState& state) {
  const VectorXd q = predictive_cluster_probs(x, hyper, state);
  VectorXd p = dirichlet_means(state.alpha_hat).transpose() * q;
  return p / p.sum();
}

}  // namespace regimerisk
