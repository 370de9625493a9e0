#include "conn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <limits>

#include "conn/diff.hpp"
#include "conn/oracle.hpp"
#include "conn/parallel.hpp"
#include "conn/rng.hpp"
#include "conn/train.hpp"

namespace conn::verify {

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

oracle::Table random_beta(Rng& rng, std::size_t K, std::size_t V) {
  const std::vector<double> ones(V, 1.0);
  oracle::Table beta;
  for (std::size_t k = 0; k < K; ++k) beta.push_back(rng.dirichlet(ones));
  return beta;
}

std::vector<std::uint32_t> random_doc(Rng& rng, std::size_t N, std::size_t V) {
  std::vector<std::uint32_t> doc(N);
  for (auto& w : doc) w = static_cast<std::uint32_t>(rng.index(V));
  return doc;
}

}  // namespace

bool Report::passed() const {
  return std::all_of(properties.begin(), properties.end(), [](const Property& p) { return p.passed; });
}

void Report::add(std::string name, double measured, double threshold, bool at_most) {
  const bool ok = at_most ? measured <= threshold : measured >= threshold;
  properties.push_back({std::move(name), measured, threshold, at_most, ok});
}

std::string Report::to_json() const {
  nlohmann::ordered_json j;
  j["suite"] = suite;
  j["passed"] = passed();
  j["seconds"] = seconds;
  j["properties"] = nlohmann::ordered_json::array();
  for (const auto& p : properties) {
    j["properties"].push_back({{"name", p.name},
                               {"measured", p.measured},
                               {"threshold", p.threshold},
                               {"comparison", p.at_most ? "<=" : ">="},
                               {"passed", p.passed}});
  }
  return j.dump(2);
}

Report gradcheck_suite(std::size_t configs, std::uint64_t seed, std::size_t threads) {
  Stopwatch clock;
  std::vector<double> errors(configs, 0.0);
  std::vector<std::size_t> coords(configs, 0);
  parallel_for(configs, threads, [&](std::size_t c) {
    Rng rng = Rng::stream(seed, c);
    model::HyperParams hp;
    constexpr std::size_t dims[] = {2, 4, 8};
    hp.dim = dims[rng.index(3)];
    hp.unroll = 1 + rng.index(3);
    hp.depth_z = 1 + rng.index(2);
    hp.depth_theta = 1 + rng.index(2);
    hp.num_classes = rng.bernoulli(0.5) ? 2 : 3;
    const bool dropout = c % 2 == 1;
    if (dropout) hp.dropout_word = hp.dropout_z = hp.dropout_theta = 0.2;
    const std::size_t V = 2 + rng.index(29);
    const std::size_t N = 1 + rng.index(10);

    const auto params = model::init_params(hp, V, rng.bits());
    Document doc;
    doc.word_ids = random_doc(rng, N, V);
    doc.label = static_cast<int>(rng.index(hp.num_classes));
    diff::GradCheckOptions opt;
    opt.seed = rng.bits();
    if (dropout) opt.masks = model::sample_masks(hp, N, rng);
    const auto report = diff::grad_check(params, hp, doc, diff::LossConfig::for_classes(hp.num_classes), opt);
    errors[c] = report.max_rel_error;
    coords[c] = report.coordinates;
  });

  Report r;
  r.suite = "gradcheck";
  std::size_t total = 0;
  for (auto n : coords) total += n;
  r.add("max_relative_error", configs ? *std::max_element(errors.begin(), errors.end()) : 0.0, 1e-5);
  r.add("configurations", static_cast<double>(configs), 1.0, false);
  r.add("coordinates_checked", static_cast<double>(total), 1.0, false);
  r.seconds = clock.seconds();
  return r;
}

Report oracle_suite(const OracleSuiteOptions& opt) {
  Stopwatch clock;
  Report r;
  r.suite = "oracle";
  Rng rng(opt.seed);

  double worst_increase = -std::numeric_limits<double>::infinity();
  double worst_theta = 0.0, worst_z = 0.0;
  std::size_t unconverged = 0;
  for (std::size_t n = 0; n < opt.meanfield_instances; ++n) {
    const std::size_t K = 1 + rng.index(5), V = 1 + rng.index(10), N = rng.index(9);
    oracle::Row alpha(K);
    for (auto& a : alpha) a = rng.uniform(0.1, 3.0);
    const auto beta = random_beta(rng, K, V);
    const auto doc = random_doc(rng, N, V);
    const auto res = oracle::run_meanfield(alpha, beta, doc, 10000, 1e-12);
    double prev = res.initial_free_energy;
    for (double f : res.trace) {
      worst_increase = std::max(worst_increase, f - prev);
      prev = f;
    }
    const auto fp = oracle::fixed_point_residuals(res.state, alpha, beta, doc);
    worst_theta = std::max(worst_theta, fp.theta);
    worst_z = std::max(worst_z, fp.z);
    unconverged += !res.converged;
  }
  if (opt.meanfield_instances > 0) {
    r.add("max_free_energy_increase_per_sweep", worst_increase, 1e-10);
    r.add("max_theta_fixed_point_residual", worst_theta, 1e-8);
    r.add("max_z_fixed_point_residual", worst_z, 1e-8);
    r.add("unconverged_instances", static_cast<double>(unconverged), 0.0);
  }

  double min_bound = std::numeric_limits<double>::infinity();
  double worst_gap = 0.0, worst_tv = 0.0, worst_evidence = 0.0;
  for (std::size_t n = 0; n < opt.bound_instances; ++n) {
    const std::size_t V = 2 + rng.index(9), N = rng.index(9);
    oracle::Row alpha{rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0)};
    const auto beta = random_beta(rng, 2, V);
    const auto doc = random_doc(rng, N, V);
    const auto res = oracle::run_meanfield(alpha, beta, doc, 10000, 1e-12);
    const auto exact = oracle::brute_force_posterior(alpha, beta, doc, opt.grid_resolution);
    const double bound =
        oracle::free_energy(res.state, alpha, beta, doc) + std::log(exact.evidence_closed);
    const double kl = oracle::direct_kl(res.state, alpha, beta, doc, exact);
    min_bound = std::min(min_bound, bound);
    worst_gap = std::max(worst_gap, std::abs(bound - kl));
    const double mean_q = res.state.gamma[0] / (res.state.gamma[0] + res.state.gamma[1]);
    worst_tv = std::max(worst_tv, std::abs(mean_q - exact.mean_theta0));
    worst_evidence =
        std::max(worst_evidence, std::abs(exact.evidence - exact.evidence_closed) / exact.evidence_closed);
  }
  if (opt.bound_instances > 0) {
    r.add("min_free_energy_plus_log_evidence", min_bound, -1e-4, false);
    r.add("max_bound_minus_direct_kl", worst_gap, 1e-3);
    r.add("max_posterior_mean_total_variation", worst_tv, 0.1);
    r.add("max_grid_evidence_relative_error", worst_evidence, 1e-3);
  }
  r.seconds = clock.seconds();
  return r;
}

Report auc_suite(std::size_t instances, std::uint64_t seed) {
  Stopwatch clock;
  Rng rng(seed);
  std::size_t mismatches = 0, with_ties = 0;
  for (std::size_t n = 0; n < instances; ++n) {
    const std::size_t size = 2 + rng.index(99);
    const bool coarse = rng.bernoulli(0.5);
    std::vector<double> scores(size);
    std::vector<int> labels(size);
    for (std::size_t i = 0; i < size; ++i) {
      scores[i] = coarse ? static_cast<double>(rng.index(5)) / 4.0 : rng.uniform();
      labels[i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;

    std::uint64_t concordant = 0, tied = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < size; ++i) (labels[i] == 1 ? pos : neg) += 1;
    for (std::size_t i = 0; i < size; ++i) {
      if (labels[i] != 1) continue;
      for (std::size_t j = 0; j < size; ++j) {
        if (labels[j] != 0) continue;
        concordant += scores[i] > scores[j];
        tied += scores[i] == scores[j];
      }
    }
    with_ties += tied > 0;
    const double brute = (static_cast<double>(concordant) + 0.5 * static_cast<double>(tied)) /
                         (static_cast<double>(pos) * static_cast<double>(neg));
    mismatches += train::auc(scores, labels) != brute;
  }
  Report r;
  r.suite = "auc";
  r.add("mismatched_instances", static_cast<double>(mismatches), 0.0);
  r.add("instances_with_ties", static_cast<double>(with_ties), 1.0, false);
  r.seconds = clock.seconds();
  return r;
}

}  // namespace conn::verify
