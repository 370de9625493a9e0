#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace conn::oracle {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Row = std::vector<double>;
using Table = std::vector<std::vector<double>>;  // Table[k][w] for beta, [i][k] for q_z

/// psi(x) for x > 0: upward recurrence to x >= 10, then the asymptotic series.
double digamma(double x);

struct MeanFieldState {
  Row gamma;  // Dirichlet parameters of q(theta)
  Table q_z;  // one categorical row per word occurrence
};

/// gamma_k = alpha_k + sum_i q_z[i][k]
Row update_q_theta(const Row& alpha, const Table& q_z);

/// q(k) proportional to beta[k][w] exp(psi(gamma_k) - psi(sum gamma)).
/// Throws OracleError when beta[k][w] = 0 for every k.
Row update_q_z(const Table& beta, std::uint32_t w, const Row& gamma);

/// Variational free energy of q(theta) prod_i q_i(z_i) for one document.
/// Zero-probability terms follow 0 log 0 = 0; a positive q on a zero beta
/// entry gives +infinity.
double free_energy(const MeanFieldState& state, const Row& alpha, const Table& beta,
                   const std::vector<std::uint32_t>& doc);

struct MeanFieldResult {
  MeanFieldState state;
  double initial_free_energy = 0.0;
  std::vector<double> trace;  // free energy after each sweep
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Coordinate descent from gamma = alpha + N/K and uniform q rows. A sweep
/// updates every q_i from the current gamma, then gamma. Stops once the
/// largest change in gamma over a sweep is below tol.
MeanFieldResult run_meanfield(const Row& alpha, const Table& beta, const std::vector<std::uint32_t>& doc,
                              std::size_t max_sweeps = 1000, double tol = 1e-10);

struct FixedPointResiduals {
  double theta = 0.0;  // max |update_q_theta - gamma|
  double z = 0.0;      // max |update_q_z - q_z|
};
FixedPointResiduals fixed_point_residuals(const MeanFieldState& state, const Row& alpha, const Table& beta,
                                          const std::vector<std::uint32_t>& doc);

/// Exact posterior of a two-topic document, theta = (x, 1 - x) on a uniform
/// grid over [0, 1] integrated with the trapezoid rule.
struct BruteForcePosterior {
  std::vector<double> grid;        // x_j = j / resolution
  std::vector<double> density;     // p(x_j | w)
  double evidence = 0.0;           // p(w) by grid integration
  double evidence_closed = 0.0;    // p(w) from Beta-function integrals
  double mean_theta0 = 0.0;        // E[x | w]
  Table z_marginals;               // p(z_i = k | w)
};

/// Requires K = 2, N <= 10, resolution >= 1000 and alpha >= 1 (so the prior
/// density is bounded on the grid).
BruteForcePosterior brute_force_posterior(const Row& alpha, const Table& beta,
                                          const std::vector<std::uint32_t>& doc, std::size_t resolution);

/// KL(q || p(theta, z | w)) with every theta integral taken on the brute-force
/// grid rather than through digamma identities.
double direct_kl(const MeanFieldState& state, const Row& alpha, const Table& beta,
                 const std::vector<std::uint32_t>& doc, const BruteForcePosterior& exact);

}  // namespace conn::oracle
