#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "afl/config.hpp"
#include "afl/partition.hpp"
#include "afl/task.hpp"

namespace afl {

struct TheoryConstants {
  double L = 1;        // smoothness
  double mu = 1;       // strong convexity
  long d = 1;
  int levels = 4;
  double r_min = 1;
  double C1 = 0;       // second-moment constants of the stochastic gradient
  double C2 = 1;
  double M = 1;        // bound on distinct ages per aggregation
  double zeta1 = 0;
  double zeta2 = 0;
  // derived by finalize()
  double A = 0;
  double C3 = 0;
  double beta = 0;
  double kappa = 0;
  double J = 0;
};

/// 4 (1 + d / (4 nu^2))
double quantization_factor(long d, int levels);

/// max{d L^2 C2 C3 beta^2 / (beta mu r_min - d), 4 L beta - 1, 1}
double kappa_for(const TheoryConstants& c, double beta);

/// (mu beta r_min / d - 1) - L^2 C2 C3 beta^2 / kappa_term. `kappa_term` is
/// kappa + 1 for the value used by the bound (see theorem1_bound).
double j_denominator(const TheoryConstants& c, double kappa_term);

/// Fills A, C3, beta, kappa and J. Throws std::domain_error when
/// beta <= d / (mu r_min) or when J has a nonpositive denominator.
void finalize(TheoryConstants& c, double beta);

/// Bound on E[F(theta(t+1))] - F*:
///   L M / (2 (t + kappa + 1)) [J + (kappa + 1) gap0] + (L M / 2) beta A.
/// J is evaluated with kappa + 1 in its denominator, the value that makes the
/// induction step hold at t = 1; with kappa itself the denominator vanishes
/// whenever the first argument of the kappa maximum is active.
double theorem1_bound(long t, const TheoryConstants& c, double initial_gap);

struct DeriveOptions {
  int levels = 4;
  Index batch_size = 0;          // 0 = full shard
  long symbols = 200;            // n per aggregation
  int scheduled = 0;             // R; 0 = every device
  double snr_db = 13.0;
  double period_ratio = 1.0;     // T_max / T~
  long channel_trials = 20000;
  double beta_factor = 2.0;      // beta = factor * d / (mu r_min)
  bool r_min_from_minimum = false;  // literal minimum over draws instead of the mean
  int theta_samples = 64;
  long gradient_draws = 400;
  double theta_radius = 2.0;
  std::uint64_t seed = 7;
};

/// Mean, or minimum, over channel draws of the per-device max_sparsity output.
double estimate_r_min(long d, const DeriveOptions& opts, int devices);

/// (C1, C2) from a Monte Carlo upper envelope of E||grad F_k(theta; B)||^2
/// against ||grad F_k(theta)||^2; full batch gives (0, 1) exactly.
std::pair<double, double> fit_gradient_moments(const QuadraticTask<double>& task, const DeriveOptions& opts);

TheoryConstants derive_constants(const QuadraticTask<double>& task, const DeriveOptions& opts);

nlohmann::json to_json(const TheoryConstants& c);

/// One verification outcome: the check passes when lhs <= rhs.
struct CheckResult {
  std::string name;
  double lhs = 0;
  double rhs = 0;
  bool holds = false;
  nlohmann::json detail = nlohmann::json::object();

  double margin() const { return rhs - lhs; }
};

nlohmann::json to_json(const CheckResult& r);

/// ||theta - theta* - alpha g_bar||^2 <= (1 - mu alpha r / d) ||theta - theta*||^2 + alpha r A / d
/// with g_bar = (r / d) sum_k w_k grad F_k(theta). theta* is the optimum of F.
CheckResult verify_lemma1(const QuadraticTask<double>& task, const VectorXd& theta, double alpha,
                          const WeightedSubset& subset, long retained, double A);

struct Lemma2Options {
  Index batch_size = 0;
  long retained = 1;
  int levels = 4;
  long samples = 100000;
  std::uint64_t seed = 11;
};

/// Monte Carlo E||g - g_bar||^2 against C3 [L^2 C2 ||theta - theta*||^2 + C1/2 + A L^2 C2 / mu],
/// with a three standard error margin.
CheckResult verify_lemma2(const QuadraticTask<double>& task, const VectorXd& theta, const WeightedSubset& subset,
                          const TheoryConstants& c, const Lemma2Options& opts);

/// 2 L (F_k(theta) - F_k*) >= ||grad F_k(theta)||^2 for every device and sample.
/// lhs is the largest violation ratio ||grad||^2 / (2 L gap), rhs 1.
CheckResult verify_smoothness_ineq(const QuadraticTask<double>& task, const std::vector<VectorXd>& thetas);

/// Per-coordinate means of the quantizer over `draws` draws within 4 standard
/// errors of the input, for each vector. `bias` is the negative-control hook.
CheckResult verify_quantizer_unbiased(const std::vector<VectorXd>& vectors, int levels, long draws,
                                      std::uint64_t seed, double bias = 0.0);

/// E||u_hat - u||^2 <= d ||u||^2 / (4 nu^2) + 3 standard errors on every vector.
CheckResult verify_quantizer_variance(const std::vector<VectorXd>& vectors, int levels, long draws,
                                      std::uint64_t seed, double bias = 0.0);

/// Exact quantizer variance sum_i (||u|| / nu)^2 p_i (1 - p_i) (double-precision norm).
double quantizer_variance(const VectorXd& u, int levels);

struct TheoremCheckOptions {
  SimConfig sim;              // engine settings; learning rate is replaced by the theory schedule
  DeriveOptions derive;
  int seeds = 20;
  long horizon = 500;
};

struct TheoremCheck {
  TheoryConstants constants;
  double initial_gap = 0;               // ||theta(1) - theta*||^2
  std::vector<double> mean_gap;         // index t-1: seed-mean F(theta(t)) - F*, t = 1..horizon+1
  std::vector<double> standard_error;
  std::vector<double> bound;            // index t-1: theorem1_bound(t)
  bool holds = false;                   // mean_gap[t-1] <= bound[t-1] for t = 1..horizon
  double worst_ratio = 0;               // max gap / bound
};

/// Full participation (R = N, T_k <= T~), E = 1, alpha(t) = beta / (t + kappa).
TheoremCheck theorem1_check(const QuadraticTask<double>& task, const TheoremCheckOptions& opts);

nlohmann::json to_json(const TheoremCheck& c);

}  // namespace afl
