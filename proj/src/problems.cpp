#include "fedminimax/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fedminimax/envelope.hpp"

namespace fedminimax {

const char* to_string(ProblemClass c) {
  switch (c) {
    case ProblemClass::kNcSc: return "NC_SC";
    case ProblemClass::kNcPl: return "NC_PL";
    case ProblemClass::kNcC: return "NC_C";
    case ProblemClass::kNc1pc: return "NC_1PC";
    case ProblemClass::kMinimization: return "MIN";
  }
  return "?";
}

ProblemClass problem_class_from_string(const std::string& s) {
  if (s == "NC_SC") return ProblemClass::kNcSc;
  if (s == "NC_PL") return ProblemClass::kNcPl;
  if (s == "NC_C") return ProblemClass::kNcC;
  if (s == "NC_1PC") return ProblemClass::kNc1pc;
  if (s == "MIN") return ProblemClass::kMinimization;
  throw std::invalid_argument("unknown problem class: " + s);
}

const char* to_string(HeterogeneityMode m) {
  return m == HeterogeneityMode::kOffset ? "offset" : "rotation";
}

HeterogeneityMode heterogeneity_mode_from_string(const std::string& s) {
  if (s == "offset") return HeterogeneityMode::kOffset;
  if (s == "rotation") return HeterogeneityMode::kRotation;
  throw std::invalid_argument("unknown heterogeneity mode: " + s);
}

// ---------------------------------------------------------------------------
// ProblemInstance

ProblemInstance::ProblemInstance(std::vector<QuadraticClient> clients,
                                 ProblemClass class_tag, double sigma,
                                 YConstraint y_constraint,
                                 double reparam_amplitude, std::uint64_t seed)
    : clients_(std::move(clients)),
      sigma_(sigma),
      class_tag_(class_tag),
      y_constraint_(y_constraint),
      reparam_amplitude_(reparam_amplitude),
      seed_(seed) {
  if (clients_.empty()) throw std::invalid_argument("problem needs n >= 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  if (!(std::abs(reparam_amplitude) < 1.0)) {
    throw std::invalid_argument("reparameterization must stay monotone (|a| < 1)");
  }
  d1_ = static_cast<int>(clients_[0].Q.rows());
  d2_ = static_cast<int>(clients_[0].M.rows());
  if (d1_ < 1 || d2_ < 1) throw std::invalid_argument("dimensions must be >= 1");
  for (const auto& q : clients_) {
    if (q.Q.rows() != d1_ || q.Q.cols() != d1_ || q.B.rows() != d1_ ||
        q.B.cols() != d2_ || q.M.rows() != d2_ || q.M.cols() != d2_ ||
        q.c.size() != d1_ || q.d.size() != d2_) {
      throw std::invalid_argument("client matrices have inconsistent shapes");
    }
  }
  if (y_constraint_.kind == YConstraint::Kind::kBall &&
      !(y_constraint_.radius > 0.0)) {
    throw std::invalid_argument("ball radius must be > 0");
  }
  // First client plus the mean offset, exact when all clients coincide.
  const QuadraticClient& base = clients_[0];
  QuadraticClient off{Mat::Zero(d1_, d1_), Mat::Zero(d1_, d2_), Mat::Zero(d2_, d2_),
                      Vec::Zero(d1_), Vec::Zero(d2_)};
  for (std::size_t i = 1; i < clients_.size(); ++i) {
    off.Q += clients_[i].Q - base.Q;
    off.B += clients_[i].B - base.B;
    off.M += clients_[i].M - base.M;
    off.c += clients_[i].c - base.c;
    off.d += clients_[i].d - base.d;
  }
  const double inv_n = 1.0 / static_cast<double>(clients_.size());
  mean_ = QuadraticClient{base.Q + inv_n * off.Q, base.B + inv_n * off.B,
                          base.M + inv_n * off.M, base.c + inv_n * off.c,
                          base.d + inv_n * off.d};
}

Vec ProblemInstance::reparam(const Vec& y) const {
  if (reparam_amplitude_ == 0.0) return y;
  return y + reparam_amplitude_ * y.array().sin().matrix();
}

Vec ProblemInstance::reparam_derivative(const Vec& y) const {
  if (reparam_amplitude_ == 0.0) return Vec::Ones(y.size());
  return (1.0 + reparam_amplitude_ * y.array().cos()).matrix();
}

Vec ProblemInstance::reparam_inverse(const Vec& u) const {
  if (reparam_amplitude_ == 0.0) return u;
  const double a = reparam_amplitude_;
  Vec y = u;
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    // u(y) - target is monotone with slope in [1-a, 1+a]: bracket + Newton.
    double lo = u[k] - std::abs(a) - 1e-12;
    double hi = u[k] + std::abs(a) + 1e-12;
    double t = u[k];
    for (int it = 0; it < 100; ++it) {
      const double r = t + a * std::sin(t) - u[k];
      if (r > 0) hi = t; else lo = t;
      double next = t - r / (1.0 + a * std::cos(t));
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - t) <= 1e-16 * std::max(1.0, std::abs(t))) {
        t = next;
        break;
      }
      t = next;
    }
    y[k] = t;
  }
  return y;
}

double ProblemInstance::eval(const QuadraticClient& q, const Vec& x,
                             const Vec& y) const {
  const Vec u = reparam(y);
  return 0.5 * x.dot(q.Q * x) + x.dot(q.B * u) - 0.5 * u.dot(q.M * u) +
         q.c.dot(x) + q.d.dot(u);
}

Vec ProblemInstance::eval_gx(const QuadraticClient& q, const Vec& x,
                             const Vec& y) const {
  return q.Q * x + q.B * reparam(y) + q.c;
}

Vec ProblemInstance::eval_gy(const QuadraticClient& q, const Vec& x,
                             const Vec& y) const {
  const Vec u = reparam(y);
  Vec g = q.B.transpose() * x - q.M * u + q.d;
  if (reparam_amplitude_ != 0.0) g = g.cwiseProduct(reparam_derivative(y));
  return g;
}

double ProblemInstance::value(int i, const Vec& x, const Vec& y) const {
  return eval(clients_.at(i), x, y);
}
double ProblemInstance::mean_value(const Vec& x, const Vec& y) const {
  return eval(mean_, x, y);
}
GradPair ProblemInstance::grad(int i, const Vec& x, const Vec& y) const {
  return {grad_x(i, x, y), grad_y(i, x, y)};
}
Vec ProblemInstance::grad_x(int i, const Vec& x, const Vec& y) const {
  return eval_gx(clients_.at(i), x, y);
}
Vec ProblemInstance::grad_y(int i, const Vec& x, const Vec& y) const {
  return eval_gy(clients_.at(i), x, y);
}
GradPair ProblemInstance::mean_grad(const Vec& x, const Vec& y) const {
  return {eval_gx(mean_, x, y), eval_gy(mean_, x, y)};
}

// ---------------------------------------------------------------------------
// Generator

namespace {

Mat gaussian_matrix(RngStream& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.next_gaussian();
  return m;
}

Vec gaussian_vector(RngStream& rng, int dim) {
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.next_gaussian();
  return v;
}

Mat random_orthogonal(RngStream& rng, int dim) {
  const Mat g = gaussian_matrix(rng, dim, dim);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(dim, dim);
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

// Eigenvalues: first = lo exactly, rest uniform in [lo, hi].
Vec spread(RngStream& rng, int count, double lo, double hi) {
  Vec v(count);
  for (int j = 0; j < count; ++j) {
    const double u = rng.next_uniform();
    v[j] = j == 0 ? lo : (j == count - 1 ? hi : lo + (hi - lo) * u);
  }
  return v;
}

Mat symmetric_from(const Mat& basis, const Vec& eig) {
  Mat m = basis * eig.asDiagonal() * basis.transpose();
  return 0.5 * (m + m.transpose());
}

Vec unit_direction(RngStream& rng, int dim) {
  Vec v = gaussian_vector(rng, dim);
  const double nrm = v.norm();
  if (nrm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / nrm;
}

// Centered offsets with (1/n) sum ||delta_i||^2 == level^2.
std::vector<Vec> centered_offsets(RngStream& rng, int n, int dim, double level,
                                  const Mat* proj) {
  std::vector<Vec> out(n);
  for (int i = 0; i < n; ++i) {
    out[i] = gaussian_vector(rng, dim);
    if (proj) out[i] = (*proj) * out[i];
  }
  Vec mean = Vec::Zero(dim);
  for (const auto& v : out) mean += v;
  mean /= static_cast<double>(n);
  double ms = 0.0;
  for (auto& v : out) {
    v -= mean;
    ms += v.squaredNorm();
  }
  ms /= static_cast<double>(n);
  for (auto& v : out) v *= (level == 0.0 || ms == 0.0) ? 0.0 : level / std::sqrt(ms);
  return out;
}

std::vector<Mat> centered_matrix_offsets(RngStream& rng, int n, int rows,
                                         int cols, double level,
                                         const Mat* right_proj) {
  std::vector<Mat> out(n);
  for (int i = 0; i < n; ++i) {
    out[i] = gaussian_matrix(rng, rows, cols);
    if (right_proj) out[i] = out[i] * (*right_proj);
  }
  Mat mean = Mat::Zero(rows, cols);
  for (const auto& m : out) mean += m;
  mean /= static_cast<double>(n);
  double ms = 0.0;
  for (auto& m : out) {
    m -= mean;
    ms += m.squaredNorm();
  }
  ms /= static_cast<double>(n);
  for (auto& m : out) m *= (level == 0.0 || ms == 0.0) ? 0.0 : level / std::sqrt(ms);
  return out;
}

void check_params(const GeneratorParams& g) {
  if (g.n < 1) throw std::invalid_argument("n must be >= 1");
  if (g.d1 < 1 || g.d2 < 1) throw std::invalid_argument("dimensions must be >= 1");
  if (!(g.sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  if (!(g.het.varsigma_x >= 0.0) || !(g.het.varsigma_y >= 0.0)) {
    throw std::invalid_argument("heterogeneity levels must be >= 0");
  }
  if (g.n == 1 && (g.het.varsigma_x > 0.0 || g.het.varsigma_y > 0.0)) {
    throw std::invalid_argument(
        "a single client cannot carry nonzero heterogeneity");
  }
  if (!(g.x_star_norm >= 0.0)) throw std::invalid_argument("x_star_norm must be >= 0");
  switch (g.class_tag) {
    case ProblemClass::kNcSc:
    case ProblemClass::kNcPl:
    case ProblemClass::kNc1pc:
      if (!(g.mu > 0.0)) {
        throw std::invalid_argument("NC-SC / NC-PL / NC-1PC require mu > 0");
      }
      if (!(g.m_max >= g.mu)) throw std::invalid_argument("m_max must be >= mu");
      if (!(g.h_min > 0.0 && g.h_max >= g.h_min)) {
        throw std::invalid_argument("need 0 < h_min <= h_max");
      }
      if (!(g.coupling > 1.0)) {
        throw std::invalid_argument(
            "coupling must exceed 1 so that f(., y) is nonconvex");
      }
      break;
    case ProblemClass::kNcC:
      if (!(g.q_neg > 0.0)) throw std::invalid_argument("NC-C requires q_neg > 0");
      if (!(g.q_pos >= -g.q_neg)) throw std::invalid_argument("q_pos < -q_neg");
      if (!(g.b_scale > 0.0)) throw std::invalid_argument("b_scale must be > 0");
      if (!(g.radius > 0.0)) throw std::invalid_argument("radius must be > 0");
      break;
    case ProblemClass::kMinimization:
      if (!(g.mu >= 0.0) || !(g.q_pos >= g.mu)) {
        throw std::invalid_argument("minimization requires 0 <= mu <= q_pos");
      }
      if (g.het.varsigma_y > 0.0 || g.het.mode == HeterogeneityMode::kRotation) {
        throw std::invalid_argument(
            "minimization problems only carry offset heterogeneity in x");
      }
      break;
  }
  if (g.class_tag == ProblemClass::kNcPl) {
    const int k = g.kernel_dim > 0 ? g.kernel_dim : std::max(1, g.d2 / 3);
    if (k >= g.d2) {
      throw std::invalid_argument(
          "NC-PL needs d2 > kernel dimension (at least one zero and one "
          "nonzero eigenvalue)");
    }
  }
  if (g.class_tag == ProblemClass::kNc1pc &&
      !(std::abs(g.reparam_amplitude) <= 1.0 / 3.0)) {
    throw std::invalid_argument(
        "NC-1PC reparameterization amplitude must be <= 1/3");
  }
}

}  // namespace

ProblemInstance make_quadratic(const GeneratorParams& g) {
  check_params(g);
  RngStream rng(g.seed, {0, StreamPurpose::kProblem});
  const int n = g.n, d1 = g.d1, d2 = g.d2;

  QuadraticClient base{Mat::Zero(d1, d1), Mat::Zero(d1, d2), Mat::Zero(d2, d2),
                       Vec::Zero(d1), Vec::Zero(d2)};
  Mat range_proj = Mat::Identity(d2, d2);
  YConstraint constraint;
  double amplitude = 0.0;

  switch (g.class_tag) {
    case ProblemClass::kNcSc:
    case ProblemClass::kNcPl:
    case ProblemClass::kNc1pc: {
      Vec m_eig(d2);
      Mat V;
      if (g.class_tag == ProblemClass::kNcPl) {
        const int k = g.kernel_dim > 0 ? g.kernel_dim : std::max(1, d2 / 3);
        m_eig.head(k).setZero();
        m_eig.tail(d2 - k) = spread(rng, d2 - k, g.mu, g.m_max);
        V = random_orthogonal(rng, d2);
        Vec in_range = Vec::Zero(d2);
        in_range.tail(d2 - k).setOnes();
        range_proj = symmetric_from(V, in_range);
      } else {
        m_eig = spread(rng, d2, g.mu, g.m_max);
        // One-point concavity is certified coordinate-wise: keep M diagonal.
        V = g.class_tag == ProblemClass::kNc1pc ? Mat::Identity(d2, d2)
                                                : random_orthogonal(rng, d2);
      }
      base.M = symmetric_from(V, m_eig);
      Vec m_inv(d2);
      for (int j = 0; j < d2; ++j) m_inv[j] = m_eig[j] > 0 ? 1.0 / m_eig[j] : 0.0;
      const Mat m_pinv = symmetric_from(V, m_inv);

      base.B = gaussian_matrix(rng, d1, d2) * range_proj;
      Mat C = base.B * m_pinv * base.B.transpose();
      const double cmax =
          Eigen::SelfAdjointEigenSolver<Mat>(C, Eigen::EigenvaluesOnly)
              .eigenvalues()
              .maxCoeff();
      if (!(cmax > 0.0)) throw std::runtime_error("degenerate coupling draw");
      const double s = std::sqrt(g.coupling * g.h_max / cmax);
      base.B *= s;
      C *= s * s;

      const Mat H = symmetric_from(random_orthogonal(rng, d1),
                                   spread(rng, d1, g.h_min, g.h_max));
      base.Q = H - C;
      base.Q = 0.5 * (base.Q + base.Q.transpose()).eval();

      const Vec x_star = g.x_star_norm * unit_direction(rng, d1);
      base.d = range_proj * unit_direction(rng, d2);
      base.c = -H * x_star - base.B * (m_pinv * base.d);
      if (g.class_tag == ProblemClass::kNc1pc) amplitude = g.reparam_amplitude;
      break;
    }
    case ProblemClass::kNcC: {
      Mat G = gaussian_matrix(rng, d1, d2);
      Eigen::JacobiSVD<Mat> svd(G);
      base.B = G * (g.b_scale / svd.singularValues()[0]);
      Vec q_eig(d1);
      for (int j = 0; j < d1; ++j) {
        const double u = rng.next_uniform();
        q_eig[j] = j == 0 ? -g.q_neg : -g.q_neg + (g.q_pos + g.q_neg) * u;
      }
      base.Q = symmetric_from(random_orthogonal(rng, d1), q_eig);
      const Vec x_kink = g.x_star_norm * unit_direction(rng, d1);
      base.d = -base.B.transpose() * x_kink;
      base.c = -base.Q * x_kink;
      constraint.kind = YConstraint::Kind::kBall;
      constraint.radius = g.radius;
      break;
    }
    case ProblemClass::kMinimization: {
      base.Q = symmetric_from(random_orthogonal(rng, d1),
                              spread(rng, d1, g.mu, g.q_pos));
      const Vec x_star = g.x_star_norm * unit_direction(rng, d1);
      base.c = -base.Q * x_star;
      break;
    }
  }

  std::vector<QuadraticClient> clients(n, base);
  if (g.het.mode == HeterogeneityMode::kOffset) {
    const auto dx = centered_offsets(rng, n, d1, g.het.varsigma_x, nullptr);
    const Mat* py = g.class_tag == ProblemClass::kNcPl ? &range_proj : nullptr;
    const auto dy = centered_offsets(rng, n, d2, g.het.varsigma_y, py);
    for (int i = 0; i < n; ++i) {
      clients[i].c += dx[i];
      if (g.class_tag != ProblemClass::kMinimization) clients[i].d += dy[i];
    }
  } else {
    const double level = std::max(g.het.varsigma_x, g.het.varsigma_y);
    const Mat* py = g.class_tag == ProblemClass::kNcPl ? &range_proj : nullptr;
    const auto E = centered_matrix_offsets(rng, n, d1, d2, level, py);
    for (int i = 0; i < n; ++i) clients[i].B += E[i];
  }

  ProblemInstance p(std::move(clients), g.class_tag, g.sigma, constraint,
                    amplitude, g.seed);
  p.generator = g;
  return p;
}

// ---------------------------------------------------------------------------
// Stochastic oracle

NoiseStreams::NoiseStreams(std::uint64_t seed, std::uint32_t client,
                           NoiseMode m)
    : mode(m) {
  if (m == NoiseMode::kIndependent) {
    x = RngStream(seed, {client, StreamPurpose::kGradX});
    y = RngStream(seed, {client, StreamPurpose::kGradY});
  } else {
    x = RngStream(seed, {client, StreamPurpose::kSharedSample});
    y = x;
  }
}

namespace {

Vec noise(RngStream& s, NoiseMode mode, int dim, int shared_dim,
          double sigma) {
  if (mode == NoiseMode::kIndependent) return draw_gaussian(s, dim, sigma);
  // One shared sample of length max(d1, d2); each block keeps a prefix.
  Vec raw = draw_gaussian(s, shared_dim, sigma);
  if (sigma == 0.0) return Vec::Zero(dim);
  return raw.head(dim) *
         std::sqrt(static_cast<double>(shared_dim) / static_cast<double>(dim));
}

}  // namespace

Vec stochastic_grad_x(const ProblemInstance& p, int client, const Vec& x,
                      const Vec& y, NoiseStreams& streams) {
  Vec g = p.grad_x(client, x, y);
  g += noise(streams.x, streams.mode, p.d1(), std::max(p.d1(), p.d2()),
             p.sigma());
  return g;
}

Vec stochastic_grad_y(const ProblemInstance& p, int client, const Vec& x,
                      const Vec& y, NoiseStreams& streams) {
  Vec g = p.grad_y(client, x, y);
  g += noise(streams.y, streams.mode, p.d2(), std::max(p.d1(), p.d2()),
             p.sigma());
  return g;
}

GradPair stochastic_grad(const ProblemInstance& p, int client, const Vec& x,
                         const Vec& y, NoiseStreams& streams) {
  GradPair out;
  out.gx = stochastic_grad_x(p, client, x, y, streams);
  out.gy = stochastic_grad_y(p, client, x, y, streams);
  return out;
}

EnvelopeResult envelope_oracle(const ProblemInstance& p, const Vec& x) {
  if (p.constrained()) {
    throw std::domain_error("envelope_oracle: y must be unconstrained");
  }
  if (x.size() != p.d1()) throw std::invalid_argument("envelope_oracle: dim mismatch");
  EnvelopeModel env(p);
  EnvelopeResult r;
  r.y_star = env.y_star(x);
  r.phi = env.phi(x);
  r.grad_phi = env.grad_phi(x);
  return r;
}

// ---------------------------------------------------------------------------
// Projections

Vec project_ball(const Vec& y, double radius) {
  const double nrm = y.norm();
  if (nrm <= radius) return y;
  return y * (radius / nrm);
}

Vec project_simplex(const Vec& y) {
  const Eigen::Index d = y.size();
  std::vector<double> s(y.data(), y.data() + d);
  std::sort(s.begin(), s.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    cumsum += s[k];
    const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (s[k] - t > 0.0) theta = t;
  }
  return (y.array() - theta).cwiseMax(0.0).matrix();
}

Vec project_y(const ProblemInstance& p, const Vec& y) {
  switch (p.y_constraint().kind) {
    case YConstraint::Kind::kBall: return project_ball(y, p.y_constraint().radius);
    case YConstraint::Kind::kSimplex: return project_simplex(y);
    case YConstraint::Kind::kNone: break;
  }
  throw std::domain_error("project_y: instance has no y constraint");
}

// ---------------------------------------------------------------------------
// Assumption validation

double lipschitz_constant(const ProblemInstance& p) {
  double best = 0.0;
  const int d1 = p.d1(), d2 = p.d2();
  for (const auto& q : p.clients()) {
    Mat J(d1 + d2, d1 + d2);
    J.topLeftCorner(d1, d1) = q.Q;
    J.topRightCorner(d1, d2) = q.B;
    J.bottomLeftCorner(d2, d1) = q.B.transpose();
    J.bottomRightCorner(d2, d2) = -q.M;
    const Vec ev =
        Eigen::SelfAdjointEigenSolver<Mat>(J, Eigen::EigenvaluesOnly).eigenvalues();
    best = std::max(best, ev.cwiseAbs().maxCoeff());
  }
  return best;
}

namespace {

bool identical_matrices(const ProblemInstance& p) {
  const auto& c0 = p.clients()[0];
  for (const auto& q : p.clients()) {
    if (q.Q != c0.Q || q.B != c0.B || q.M != c0.M) return false;
  }
  return true;
}

constexpr double kSlackTol = 1e-8;

}  // namespace

AssumptionReport validate_assumptions(const ProblemInstance& p,
                                      int sample_count,
                                      std::uint64_t sample_seed) {
  if (sample_count < 1) throw std::invalid_argument("sample_count must be >= 1");
  AssumptionReport r;
  r.class_tag = p.class_tag();
  r.samples = sample_count;
  r.L_f = lipschitz_constant(p);
  const auto& m = p.mean_client();
  const int n = p.n();

  const Vec q_eig =
      Eigen::SelfAdjointEigenSolver<Mat>(m.Q, Eigen::EigenvaluesOnly).eigenvalues();
  const Vec m_eig =
      Eigen::SelfAdjointEigenSolver<Mat>(m.M, Eigen::EigenvaluesOnly).eigenvalues();
  r.q_indefinite = q_eig.minCoeff() < 0.0;
  const double tol = 1e-10 * std::max(1.0, m_eig.cwiseAbs().maxCoeff());

  switch (p.class_tag()) {
    case ProblemClass::kNcSc:
      r.mu = m_eig.minCoeff();
      break;
    case ProblemClass::kNcPl: {
      r.mu = 0.0;
      for (Eigen::Index j = 0; j < m_eig.size(); ++j) {
        if (m_eig[j] > tol) {
          r.mu = m_eig[j];
          break;
        }
      }
      break;
    }
    case ProblemClass::kNc1pc:
      r.mu = m_eig.minCoeff();
      r.smoothness_exact = false;
      r.notes.push_back(
          "NC_1PC: L_f and mu refer to the quadratic in u = y + a sin(y)");
      break;
    case ProblemClass::kNcC:
      r.mu = 0.0;
      break;
    case ProblemClass::kMinimization:
      r.mu = q_eig.minCoeff();
      break;
  }
  r.kappa = r.mu > 0.0 ? r.L_f / r.mu : std::numeric_limits<double>::infinity();

  if (identical_matrices(p) && p.reparam_amplitude() == 0.0) {
    double sx = 0.0, sy = 0.0;
    for (const auto& q : p.clients()) {
      sx += (q.c - m.c).squaredNorm();
      sy += (q.d - m.d).squaredNorm();
    }
    r.varsigma_x_exact = std::sqrt(sx / n);
    r.varsigma_y_exact = std::sqrt(sy / n);
  }

  std::optional<EnvelopeModel> env;
  try {
    env.emplace(p);
  } catch (const std::domain_error& e) {
    r.notes.push_back(std::string("no closed-form envelope: ") + e.what());
  }
  const bool pl_applicable =
      env && r.mu > 0.0 &&
      (p.class_tag() == ProblemClass::kNcSc || p.class_tag() == ProblemClass::kNcPl);

  RngStream rng(sample_seed, {0, StreamPurpose::kSampling});
  const double scale = 1.0 + (p.generator ? p.generator->x_star_norm : 1.0);
  double hx = 0.0, hy = 0.0;
  double pl_min = std::numeric_limits<double>::infinity();
  double qg_min = pl_min, opc_min = pl_min;

  for (int s = 0; s < sample_count; ++s) {
    Vec x(p.d1()), y(p.d2()), y2(p.d2());
    for (auto& v : x) v = scale * rng.next_gaussian();
    for (auto& v : y) v = scale * rng.next_gaussian();
    for (auto& v : y2) v = scale * rng.next_gaussian();
    if (p.constrained()) {
      y = project_y(p, y);
      y2 = project_y(p, y2);
    }

    const GradPair gm = p.mean_grad(x, y);
    double ax = 0.0, ay = 0.0;
    for (int i = 0; i < n; ++i) {
      const GradPair gi = p.grad(i, x, y);
      ax += (gi.gx - gm.gx).squaredNorm();
      ay += (gi.gy - gm.gy).squaredNorm();
    }
    hx = std::max(hx, ax / n);
    hy = std::max(hy, ay / n);

    const double fxy = p.mean_value(x, y);
    // Pairwise concavity in y: f(y2) <= f(y) + <grad_y f(y), y2 - y>.
    const double f2 = p.mean_value(x, y2);
    if (f2 > fxy + gm.gy.dot(y2 - y) + kSlackTol * (1.0 + std::abs(f2))) {
      r.concave_in_y = false;
    }

    if (!env) continue;
    const double phi = env->phi(x);
    const double gap = phi - fxy;
    if (pl_applicable) {
      pl_min = std::min(pl_min, gm.gy.squaredNorm() - 2.0 * r.mu * gap);
      const Vec ys = env->nearest_y_star(x, y);
      qg_min = std::min(qg_min, gap - 0.5 * r.mu * (y - ys).squaredNorm());
    }
    const Vec ys = env->nearest_y_star(x, y);
    const double fstar = p.mean_value(x, ys);
    opc_min = std::min(opc_min, fxy - fstar - gm.gy.dot(y - ys));
  }

  r.varsigma_x_hat = std::sqrt(hx);
  r.varsigma_y_hat = std::sqrt(hy);
  if (pl_applicable) {
    r.pl_min_slack = pl_min;
    r.qg_min_slack = qg_min;
    r.pl_ok = pl_min >= -kSlackTol;
    r.qg_ok = qg_min >= -kSlackTol;
  }
  if (env) {
    r.one_point_min_slack = opc_min;
    r.one_point_ok = opc_min >= -kSlackTol;
  }
  return r;
}

nlohmann::json to_json(const AssumptionReport& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) -> json {
    return v ? json(*v) : json(nullptr);
  };
  json j;
  j["class_tag"] = to_string(r.class_tag);
  j["L_f"] = r.L_f;
  j["smoothness_exact"] = r.smoothness_exact;
  j["mu"] = r.mu;
  j["kappa"] = std::isfinite(r.kappa) ? json(r.kappa) : json(nullptr);
  j["varsigma_x_hat"] = r.varsigma_x_hat;
  j["varsigma_y_hat"] = r.varsigma_y_hat;
  j["varsigma_x_exact"] = opt(r.varsigma_x_exact);
  j["varsigma_y_exact"] = opt(r.varsigma_y_exact);
  j["q_indefinite"] = r.q_indefinite;
  j["concave_in_y"] = r.concave_in_y;
  j["pl_min_slack"] = opt(r.pl_min_slack);
  j["qg_min_slack"] = opt(r.qg_min_slack);
  j["one_point_min_slack"] = opt(r.one_point_min_slack);
  j["pl_ok"] = r.pl_ok;
  j["qg_ok"] = r.qg_ok;
  j["one_point_ok"] = r.one_point_ok;
  j["samples"] = r.samples;
  j["notes"] = r.notes;
  return j;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json matrix_to_json(const Mat& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::invalid_argument("matrix data length does not match rows*cols");
  }
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[i * cols + k];
  return m;
}

nlohmann::json vector_to_json(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vec vector_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
}

const char* to_string(YConstraint::Kind k) {
  switch (k) {
    case YConstraint::Kind::kNone: return "none";
    case YConstraint::Kind::kBall: return "ball";
    case YConstraint::Kind::kSimplex: return "simplex";
  }
  return "?";
}

}  // namespace

nlohmann::json generator_to_json(const GeneratorParams& g) {
  return {{"class_tag", to_string(g.class_tag)},
          {"n", g.n},
          {"d1", g.d1},
          {"d2", g.d2},
          {"mu", g.mu},
          {"m_max", g.m_max},
          {"h_min", g.h_min},
          {"h_max", g.h_max},
          {"coupling", g.coupling},
          {"kernel_dim", g.kernel_dim},
          {"q_neg", g.q_neg},
          {"q_pos", g.q_pos},
          {"b_scale", g.b_scale},
          {"radius", g.radius},
          {"reparam_amplitude", g.reparam_amplitude},
          {"x_star_norm", g.x_star_norm},
          {"het",
           {{"varsigma_x", g.het.varsigma_x},
            {"varsigma_y", g.het.varsigma_y},
            {"mode", to_string(g.het.mode)}}},
          {"sigma", g.sigma},
          {"seed", g.seed}};
}

GeneratorParams generator_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "class_tag", "n",        "d1",     "d2",     "mu",
      "m_max",     "h_min",    "h_max",  "coupling", "kernel_dim",
      "q_neg",     "q_pos",    "b_scale", "radius", "reparam_amplitude",
      "x_star_norm", "het",    "sigma",  "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown generator field: " + key);
    }
  }
  GeneratorParams g;
  if (j.contains("class_tag"))
    g.class_tag = problem_class_from_string(j.at("class_tag").get<std::string>());
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("n", g.n);
  get("d1", g.d1);
  get("d2", g.d2);
  get("mu", g.mu);
  get("m_max", g.m_max);
  get("h_min", g.h_min);
  get("h_max", g.h_max);
  get("coupling", g.coupling);
  get("kernel_dim", g.kernel_dim);
  get("q_neg", g.q_neg);
  get("q_pos", g.q_pos);
  get("b_scale", g.b_scale);
  get("radius", g.radius);
  get("reparam_amplitude", g.reparam_amplitude);
  get("x_star_norm", g.x_star_norm);
  get("sigma", g.sigma);
  get("seed", g.seed);
  if (j.contains("het")) {
    const auto& h = j.at("het");
    if (h.contains("varsigma_x")) g.het.varsigma_x = h.at("varsigma_x").get<double>();
    if (h.contains("varsigma_y")) g.het.varsigma_y = h.at("varsigma_y").get<double>();
    if (h.contains("mode"))
      g.het.mode = heterogeneity_mode_from_string(h.at("mode").get<std::string>());
  }
  return g;
}

nlohmann::json problem_to_json(const ProblemInstance& p) {
  nlohmann::json clients = nlohmann::json::array();
  for (const auto& q : p.clients()) {
    clients.push_back({{"Q", matrix_to_json(q.Q)},
                       {"B", matrix_to_json(q.B)},
                       {"M", matrix_to_json(q.M)},
                       {"c", vector_to_json(q.c)},
                       {"d", vector_to_json(q.d)}});
  }
  nlohmann::json j = {
      {"format", "fedminimax-problem"},
      {"version", 1},
      {"class_tag", to_string(p.class_tag())},
      {"n", p.n()},
      {"d1", p.d1()},
      {"d2", p.d2()},
      {"sigma", p.sigma()},
      {"seed", p.seed()},
      {"reparam_amplitude", p.reparam_amplitude()},
      {"y_constraint",
       {{"kind", to_string(p.y_constraint().kind)},
        {"radius", p.y_constraint().radius}}},
      {"clients", clients}};
  if (p.generator) j["generator"] = generator_to_json(*p.generator);
  return j;
}

ProblemInstance problem_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "fedminimax-problem") {
    throw std::invalid_argument("not a fedminimax problem document");
  }
  if (j.at("version").get<int>() != 1) {
    throw std::invalid_argument("unsupported problem document version");
  }
  std::vector<QuadraticClient> clients;
  for (const auto& c : j.at("clients")) {
    clients.push_back({matrix_from_json(c.at("Q")), matrix_from_json(c.at("B")),
                       matrix_from_json(c.at("M")), vector_from_json(c.at("c")),
                       vector_from_json(c.at("d"))});
  }
  YConstraint yc;
  const auto& jc = j.at("y_constraint");
  const auto kind = jc.at("kind").get<std::string>();
  if (kind == "none") yc.kind = YConstraint::Kind::kNone;
  else if (kind == "ball") yc.kind = YConstraint::Kind::kBall;
  else if (kind == "simplex") yc.kind = YConstraint::Kind::kSimplex;
  else throw std::invalid_argument("unknown y constraint: " + kind);
  yc.radius = jc.value("radius", 1.0);

  ProblemInstance p(std::move(clients),
                    problem_class_from_string(j.at("class_tag").get<std::string>()),
                    j.at("sigma").get<double>(), yc,
                    j.value("reparam_amplitude", 0.0),
                    j.value("seed", std::uint64_t{0}));
  if (p.n() != j.at("n").get<int>() || p.d1() != j.at("d1").get<int>() ||
      p.d2() != j.at("d2").get<int>()) {
    throw std::invalid_argument("problem header disagrees with client data");
  }
  if (j.contains("generator")) p.generator = generator_from_json(j.at("generator"));
  return p;
}

}  // namespace fedminimax
