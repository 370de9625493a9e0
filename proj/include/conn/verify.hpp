#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace conn::verify {

/// One checked property: `measured` is compared against `threshold` in the
/// direction given by `at_most` (measured <= threshold) or its opposite.
struct Property {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool at_most = true;
  bool passed = false;
};

struct Report {
  std::string suite;
  std::vector<Property> properties;
  double seconds = 0.0;

  bool passed() const;
  void add(std::string name, double measured, double threshold, bool at_most = true);
  /// {"suite", "passed", "seconds", "properties": [{name, measured, threshold, comparison, passed}]}
  std::string to_json() const;
};

/// Backward pass against finite differences on `configs` random small
/// models (D in {2,4,8}, T in {1,2,3}, depth 1-2 for both stacks, N <= 10,
/// V <= 30), half of them with train-mode dropout masks.
Report gradcheck_suite(std::size_t configs = 100, std::uint64_t seed = 1, std::size_t threads = 1);

/// Free-energy monotonicity and fixed-point consistency on random instances
/// (K <= 5, V <= 10, N <= 8), then the variational bound, the direct KL gap
/// and the posterior-mean envelope on random two-topic instances.
struct OracleSuiteOptions {
  std::size_t meanfield_instances = 100;
  std::size_t bound_instances = 20;
  std::size_t grid_resolution = 5000;
  std::uint64_t seed = 1;
};
Report oracle_suite(const OracleSuiteOptions& opt = {});

/// Sorted-rank AUC against brute-force pairs on random instances with ties.
Report auc_suite(std::size_t instances = 1000, std::uint64_t seed = 1);

}  // namespace conn::verify
