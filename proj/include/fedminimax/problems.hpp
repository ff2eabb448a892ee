#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedminimax/rng.hpp"
#include "fedminimax/types.hpp"

namespace fedminimax {

enum class ProblemClass { kNcSc, kNcPl, kNcC, kNc1pc, kMinimization };
enum class HeterogeneityMode { kOffset, kRotation };
enum class NoiseMode { kIndependent, kSharedSample };

const char* to_string(ProblemClass c);
ProblemClass problem_class_from_string(const std::string& s);
const char* to_string(HeterogeneityMode m);
HeterogeneityMode heterogeneity_mode_from_string(const std::string& s);

struct HeterogeneityProfile {
  double varsigma_x = 0.0;
  double varsigma_y = 0.0;
  HeterogeneityMode mode = HeterogeneityMode::kOffset;
};

struct YConstraint {
  enum class Kind { kNone, kBall, kSimplex };
  Kind kind = Kind::kNone;
  double radius = 1.0;  // ball only
};

/// f_i(x, y) = 1/2 x'Q x + x'B u - 1/2 u'M u + c'x + d'u with u = y
/// (or u = y + a sin(y) coordinate-wise for one-point-concave instances).
struct QuadraticClient {
  Mat Q;  // d1 x d1, symmetric
  Mat B;  // d1 x d2
  Mat M;  // d2 x d2, symmetric PSD
  Vec c;  // d1
  Vec d;  // d2
};

/// Knobs for make_quadratic. Defaults give a well-conditioned instance.
struct GeneratorParams {
  ProblemClass class_tag = ProblemClass::kNcSc;
  int n = 1;
  int d1 = 1;
  int d2 = 1;
  double mu = 0.25;       // lambda_min(M) for NC-SC, smallest nonzero for NC-PL
  double m_max = 1.0;     // largest eigenvalue of M
  double h_min = 0.25;    // Hessian spectrum of Phi (NC-SC / NC-PL / 1PC)
  double h_max = 0.5;
  double coupling = 2.0;  // lambda_max(B M^+ B') / h_max; > 1 forces Q indefinite
  int kernel_dim = 0;     // NC-PL: dim ker(M); 0 -> max(1, d2 / 3)
  double q_neg = 0.1;     // NC-C: magnitude of the negative eigenvalue of Q
  double q_pos = 0.5;     // NC-C / minimization: top of Q's spectrum
  double b_scale = 1.0;   // NC-C: spectral norm of B
  double radius = 2.0;    // NC-C: ball radius for y
  double reparam_amplitude = 0.25;  // NC-1PC: a in u = y + a sin(y), < 1/3
  double x_star_norm = 1.0;         // norm of the Phi minimizer / kink point
  HeterogeneityProfile het;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

struct GradPair {
  Vec gx;
  Vec gy;
};

class ProblemInstance {
 public:
  ProblemInstance() = default;
  ProblemInstance(std::vector<QuadraticClient> clients, ProblemClass class_tag,
                  double sigma, YConstraint y_constraint,
                  double reparam_amplitude, std::uint64_t seed);

  int n() const { return static_cast<int>(clients_.size()); }
  int d1() const { return d1_; }
  int d2() const { return d2_; }
  double sigma() const { return sigma_; }
  ProblemClass class_tag() const { return class_tag_; }
  const YConstraint& y_constraint() const { return y_constraint_; }
  double reparam_amplitude() const { return reparam_amplitude_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<QuadraticClient>& clients() const { return clients_; }
  const QuadraticClient& mean_client() const { return mean_; }
  bool constrained() const {
    return y_constraint_.kind != YConstraint::Kind::kNone;
  }

  // u(y) and its coordinate-wise derivative; identity unless 1PC.
  Vec reparam(const Vec& y) const;
  Vec reparam_derivative(const Vec& y) const;
  /// Coordinate-wise inverse of reparam (Newton on a monotone map).
  Vec reparam_inverse(const Vec& u) const;

  double value(int client, const Vec& x, const Vec& y) const;
  double mean_value(const Vec& x, const Vec& y) const;
  GradPair grad(int client, const Vec& x, const Vec& y) const;
  Vec grad_x(int client, const Vec& x, const Vec& y) const;
  Vec grad_y(int client, const Vec& x, const Vec& y) const;
  GradPair mean_grad(const Vec& x, const Vec& y) const;

  std::optional<GeneratorParams> generator;  // provenance, when generated

 private:
  double eval(const QuadraticClient& q, const Vec& x, const Vec& y) const;
  Vec eval_gx(const QuadraticClient& q, const Vec& x, const Vec& y) const;
  Vec eval_gy(const QuadraticClient& q, const Vec& x, const Vec& y) const;

  std::vector<QuadraticClient> clients_;
  QuadraticClient mean_;
  int d1_ = 0;
  int d2_ = 0;
  double sigma_ = 0.0;
  ProblemClass class_tag_ = ProblemClass::kNcSc;
  YConstraint y_constraint_;
  double reparam_amplitude_ = 0.0;
  std::uint64_t seed_ = 0;
};

/// Builds a synthetic instance of the requested assumption class.
/// Throws std::invalid_argument on contradictory requests.
ProblemInstance make_quadratic(const GeneratorParams& params);

/// Per-client gradient-noise streams. In shared-sample mode the x and y
/// noises are cut from the same underlying Gaussian draws.
struct NoiseStreams {
  NoiseStreams() = default;
  NoiseStreams(std::uint64_t seed, std::uint32_t client, NoiseMode mode);

  NoiseMode mode = NoiseMode::kIndependent;
  RngStream x;
  RngStream y;
};

Vec stochastic_grad_x(const ProblemInstance& p, int client, const Vec& x,
                      const Vec& y, NoiseStreams& streams);
Vec stochastic_grad_y(const ProblemInstance& p, int client, const Vec& x,
                      const Vec& y, NoiseStreams& streams);
/// Both blocks at the same point; exact gradients when sigma == 0.
GradPair stochastic_grad(const ProblemInstance& p, int client, const Vec& x,
                         const Vec& y, NoiseStreams& streams);

struct EnvelopeResult {
  double phi = 0.0;
  Vec grad_phi;
  Vec y_star;
};

/// Closed-form Phi(x) = max_y f(x, y), its gradient and a maximizer, for
/// unconstrained instances whose inner problem has an attained maximum
/// (NC-SC, NC-PL, NC-1PC, minimization). Throws std::domain_error otherwise.
EnvelopeResult envelope_oracle(const ProblemInstance& p, const Vec& x);

/// Euclidean projection onto the y feasible set. Throws std::domain_error if
/// the instance is unconstrained.
Vec project_y(const ProblemInstance& p, const Vec& y);
Vec project_ball(const Vec& y, double radius);
Vec project_simplex(const Vec& y);

struct AssumptionReport {
  ProblemClass class_tag = ProblemClass::kNcSc;
  double L_f = 0.0;
  bool smoothness_exact = true;
  double mu = 0.0;
  double kappa = 0.0;
  double varsigma_x_hat = 0.0;
  double varsigma_y_hat = 0.0;
  std::optional<double> varsigma_x_exact;
  std::optional<double> varsigma_y_exact;
  bool q_indefinite = false;      // f(., y) nonconvex
  bool concave_in_y = true;       // sampled pairwise concavity
  std::optional<double> pl_min_slack;
  std::optional<double> qg_min_slack;
  std::optional<double> one_point_min_slack;
  bool pl_ok = true;
  bool qg_ok = true;
  bool one_point_ok = true;
  int samples = 0;
  std::vector<std::string> notes;
};

/// Exact smoothness constant: max over clients of the spectral norm of the
/// (constant) Jacobian of the stacked gradient map (x, y) -> (grad_x, grad_y).
/// For reparameterized instances this is the constant of the underlying
/// quadratic in u.
double lipschitz_constant(const ProblemInstance& p);

/// Smoothness, heterogeneity and PL / quadratic-growth / one-point-concavity
/// checks at `sample_count` random points. Failures are reported, not thrown.
AssumptionReport validate_assumptions(const ProblemInstance& p,
                                      int sample_count,
                                      std::uint64_t sample_seed = 0);

nlohmann::json to_json(const AssumptionReport& r);

nlohmann::json problem_to_json(const ProblemInstance& p);
ProblemInstance problem_from_json(const nlohmann::json& j);
nlohmann::json generator_to_json(const GeneratorParams& g);
GeneratorParams generator_from_json(const nlohmann::json& j);

}  // namespace fedminimax
