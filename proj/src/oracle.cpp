#include "conn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace conn::oracle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sum(const Row& r) {
  double s = 0.0;
  for (double x : r) s += x;
  return s;
}

double log_beta_fn(const Row& a) {
  double s = -std::lgamma(sum(a));
  for (double x : a) s += std::lgamma(x);
  return s;
}

Row expected_log_theta(const Row& gamma) {
  const double total = digamma(sum(gamma));
  Row out(gamma.size());
  for (std::size_t k = 0; k < gamma.size(); ++k) out[k] = digamma(gamma[k]) - total;
  return out;
}

void check_word(const Table& beta, std::uint32_t w) {
  for (const auto& row : beta)
    if (w >= row.size()) throw OracleError("word id " + std::to_string(w) + " is outside the vocabulary");
}

// Trapezoid rule on the uniform grid over [0, 1].
double trapezoid(const std::vector<double>& f) {
  const std::size_t n = f.size() - 1;
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t j = 1; j < n; ++j) s += f[j];
  return s / static_cast<double>(n);
}

}  // namespace

double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw OracleError("digamma needs a positive finite argument");
  double r = 0.0;
  while (x < 10.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  const double series =
      f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132 - f * (691.0 / 32760))))));
  return r + std::log(x) - 0.5 / x - series;
}

Row update_q_theta(const Row& alpha, const Table& q_z) {
  Row gamma = alpha;
  for (const auto& q : q_z) {
    if (q.size() != alpha.size()) throw OracleError("q_z row length differs from the number of topics");
    for (std::size_t k = 0; k < q.size(); ++k) gamma[k] += q[k];
  }
  return gamma;
}

Row update_q_z(const Table& beta, std::uint32_t w, const Row& gamma) {
  if (beta.size() != gamma.size()) throw OracleError("beta and gamma disagree on the number of topics");
  check_word(beta, w);
  const Row elog = expected_log_theta(gamma);
  Row logits(gamma.size());
  double top = -kInf;
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    logits[k] = beta[k][w] > 0.0 ? std::log(beta[k][w]) + elog[k] : -kInf;
    top = std::max(top, logits[k]);
  }
  if (top == -kInf) throw OracleError("word " + std::to_string(w) + " has zero probability under every topic");
  double total = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    total += l;
  }
  for (double& l : logits) l /= total;
  return logits;
}

double free_energy(const MeanFieldState& state, const Row& alpha, const Table& beta,
                   const std::vector<std::uint32_t>& doc) {
  const std::size_t K = alpha.size();
  if (state.gamma.size() != K || state.q_z.size() != doc.size())
    throw OracleError("free_energy: state shape does not match the document");
  const Row elog = expected_log_theta(state.gamma);

  // E_q[log q(theta)] - E_q[log p(theta | alpha)]
  double f = log_beta_fn(alpha) - log_beta_fn(state.gamma);
  for (std::size_t k = 0; k < K; ++k) f += (state.gamma[k] - alpha[k]) * elog[k];

  for (std::size_t i = 0; i < doc.size(); ++i) {
    check_word(beta, doc[i]);
    for (std::size_t k = 0; k < K; ++k) {
      const double q = state.q_z[i][k];
      if (q == 0.0) continue;
      if (beta[k][doc[i]] == 0.0) return kInf;
      f += q * (std::log(q) - elog[k] - std::log(beta[k][doc[i]]));
    }
  }
  return f;
}

MeanFieldResult run_meanfield(const Row& alpha, const Table& beta, const std::vector<std::uint32_t>& doc,
                              std::size_t max_sweeps, double tol) {
  if (!(tol > 0.0)) throw OracleError("tol must be positive");
  const std::size_t K = alpha.size();
  if (K == 0 || beta.size() != K) throw OracleError("alpha and beta disagree on the number of topics");
  for (double a : alpha)
    if (!(a > 0.0)) throw OracleError("alpha must be positive");

  MeanFieldResult res;
  res.state.q_z.assign(doc.size(), Row(K, 1.0 / static_cast<double>(K)));
  res.state.gamma = update_q_theta(alpha, res.state.q_z);
  res.initial_free_energy = free_energy(res.state, alpha, beta, doc);

  while (res.sweeps < max_sweeps) {
    for (std::size_t i = 0; i < doc.size(); ++i) res.state.q_z[i] = update_q_z(beta, doc[i], res.state.gamma);
    Row gamma = update_q_theta(alpha, res.state.q_z);
    double change = 0.0;
    for (std::size_t k = 0; k < K; ++k) change = std::max(change, std::abs(gamma[k] - res.state.gamma[k]));
    res.state.gamma = std::move(gamma);
    ++res.sweeps;
    res.trace.push_back(free_energy(res.state, alpha, beta, doc));
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

FixedPointResiduals fixed_point_residuals(const MeanFieldState& state, const Row& alpha, const Table& beta,
                                          const std::vector<std::uint32_t>& doc) {
  FixedPointResiduals r;
  const Row gamma = update_q_theta(alpha, state.q_z);
  for (std::size_t k = 0; k < gamma.size(); ++k) r.theta = std::max(r.theta, std::abs(gamma[k] - state.gamma[k]));
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const Row q = update_q_z(beta, doc[i], state.gamma);
    for (std::size_t k = 0; k < q.size(); ++k) r.z = std::max(r.z, std::abs(q[k] - state.q_z[i][k]));
  }
  return r;
}

BruteForcePosterior brute_force_posterior(const Row& alpha, const Table& beta,
                                          const std::vector<std::uint32_t>& doc, std::size_t resolution) {
  if (alpha.size() != 2 || beta.size() != 2) throw OracleError("brute-force posterior needs exactly two topics");
  if (doc.size() > 10) throw OracleError("brute-force posterior supports at most 10 words");
  if (resolution < 1000) throw OracleError("grid resolution must be at least 1000");
  if (alpha[0] < 1.0 || alpha[1] < 1.0) throw OracleError("brute-force posterior needs alpha >= 1");
  for (auto w : doc) check_word(beta, w);

  const std::size_t N = doc.size();
  BruteForcePosterior out;
  out.grid.resize(resolution + 1);
  for (std::size_t j = 0; j <= resolution; ++j)
    out.grid[j] = static_cast<double>(j) / static_cast<double>(resolution);

  const double log_b_alpha = log_beta_fn(alpha);
  std::vector<double> prior(resolution + 1);
  for (std::size_t j = 0; j <= resolution; ++j) {
    const double x = out.grid[j];
    prior[j] = std::pow(x, alpha[0] - 1.0) * std::pow(1.0 - x, alpha[1] - 1.0) * std::exp(-log_b_alpha);
  }

  // integral[n0] = int Dir(x | alpha) x^n0 (1 - x)^(N - n0) dx, on the grid and in closed form.
  std::vector<double> integral(N + 1), integral_closed(N + 1);
  std::vector<std::vector<double>> kernel(N + 1, std::vector<double>(resolution + 1));
  for (std::size_t n0 = 0; n0 <= N; ++n0) {
    for (std::size_t j = 0; j <= resolution; ++j) {
      const double x = out.grid[j];
      kernel[n0][j] = prior[j] * std::pow(x, static_cast<double>(n0)) * std::pow(1.0 - x, static_cast<double>(N - n0));
    }
    integral[n0] = trapezoid(kernel[n0]);
    integral_closed[n0] = std::exp(log_beta_fn({alpha[0] + static_cast<double>(n0),
                                                alpha[1] + static_cast<double>(N - n0)}) - log_b_alpha);
  }

  // Enumerate every assignment; bit i set means z_i = 1.
  const std::size_t count = std::size_t{1} << N;
  std::vector<double> likelihood(count);
  std::vector<double> by_n0(N + 1, 0.0);
  for (std::size_t a = 0; a < count; ++a) {
    double prod = 1.0;
    std::size_t n0 = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t k = (a >> i) & 1U;
      prod *= beta[k][doc[i]];
      n0 += k == 0;
    }
    likelihood[a] = prod;
    by_n0[n0] += prod;
  }
  for (std::size_t n0 = 0; n0 <= N; ++n0) {
    out.evidence += by_n0[n0] * integral[n0];
    out.evidence_closed += by_n0[n0] * integral_closed[n0];
  }
  if (!(out.evidence > 0.0)) throw OracleError("document has zero evidence");

  out.density.assign(resolution + 1, 0.0);
  for (std::size_t n0 = 0; n0 <= N; ++n0)
    for (std::size_t j = 0; j <= resolution; ++j) out.density[j] += by_n0[n0] * kernel[n0][j] / out.evidence;
  std::vector<double> first_moment(resolution + 1);
  for (std::size_t j = 0; j <= resolution; ++j) first_moment[j] = out.grid[j] * out.density[j];
  out.mean_theta0 = trapezoid(first_moment);

  out.z_marginals.assign(N, Row(2, 0.0));
  for (std::size_t a = 0; a < count; ++a) {
    std::size_t n0 = 0;
    for (std::size_t i = 0; i < N; ++i) n0 += ((a >> i) & 1U) == 0;
    const double p = likelihood[a] * integral[n0] / out.evidence;
    for (std::size_t i = 0; i < N; ++i) out.z_marginals[i][(a >> i) & 1U] += p;
  }
  return out;
}

double direct_kl(const MeanFieldState& state, const Row& alpha, const Table& beta,
                 const std::vector<std::uint32_t>& doc, const BruteForcePosterior& exact) {
  if (state.gamma.size() != 2 || alpha.size() != 2) throw OracleError("direct_kl needs exactly two topics");
  const Row& g = state.gamma;
  const double log_b_gamma = log_beta_fn(g);
  const double log_b_alpha = log_beta_fn(alpha);

  Row assigned(2, 0.0);
  for (const auto& q : state.q_z)
    for (std::size_t k = 0; k < 2; ++k) assigned[k] += q[k];

  // theta part: int q(x) [log q(x) - log p(x | alpha) - sum_k a_k log theta_k] dx
  const std::size_t n = exact.grid.size();
  std::vector<double> integrand(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double x = exact.grid[j];
    const double q = std::pow(x, g[0] - 1.0) * std::pow(1.0 - x, g[1] - 1.0) * std::exp(-log_b_gamma);
    if (q == 0.0) continue;
    const double prior = std::pow(x, alpha[0] - 1.0) * std::pow(1.0 - x, alpha[1] - 1.0) * std::exp(-log_b_alpha);
    double v = std::log(q) - std::log(prior);
    if (assigned[0] != 0.0) v -= assigned[0] * std::log(x);
    if (assigned[1] != 0.0) v -= assigned[1] * std::log(1.0 - x);
    integrand[j] = q * v;
  }
  double kl = trapezoid(integrand);

  // z part: sum_i sum_k q_ik (log q_ik - log beta_k,w_i)
  for (std::size_t i = 0; i < doc.size(); ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double q = state.q_z[i][k];
      if (q == 0.0) continue;
      kl += q * (std::log(q) - std::log(beta[k][doc[i]]));
    }
  }
  return kl + std::log(exact.evidence);
}

}  // namespace conn::oracle
