#ifndef CLTR_DEEP_PROPDCG_HPP
#define CLTR_DEEP_PROPDCG_HPP

#include "cltr/core.hpp"
#include "cltr/metrics.hpp"
#include "cltr/rng.hpp"

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cltr {

// Two-layer scoring network: input -> sigmoid hidden layer -> one linear output.
template <typename Scalar>
struct MlpT {
  Matrix<Scalar> w1;  // hidden x input
  Vector<Scalar> b1;  // hidden
  Vector<Scalar> w2;  // hidden
  Scalar b2 = Scalar(0);

  MlpT() = default;
  MlpT(std::size_t input_dim, std::size_t hidden)
      : w1(Matrix<Scalar>::Zero(static_cast<Eigen::Index>(hidden), static_cast<Eigen::Index>(input_dim))),
        b1(Vector<Scalar>::Zero(static_cast<Eigen::Index>(hidden))),
        w2(Vector<Scalar>::Zero(static_cast<Eigen::Index>(hidden))) {}

  // Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); biases zero.
  static MlpT glorot(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
    MlpT m(input_dim, hidden);
    Rng rng(seed);
    const double a1 = std::sqrt(6.0 / static_cast<double>(input_dim + hidden));
    for (Eigen::Index i = 0; i < m.w1.size(); ++i) m.w1.data()[i] = Scalar(rng.uniform(-a1, a1));
    const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
    for (Eigen::Index i = 0; i < m.w2.size(); ++i) m.w2[i] = Scalar(rng.uniform(-a2, a2));
    return m;
  }

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t num_params() const { return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + 1); }

  Vector<Scalar> pack() const {
    Vector<Scalar> theta(static_cast<Eigen::Index>(num_params()));
    Eigen::Index o = 0;
    theta.segment(o, w1.size()) = Eigen::Map<const Vector<Scalar>>(w1.data(), w1.size());
    o += w1.size();
    theta.segment(o, b1.size()) = b1;
    o += b1.size();
    theta.segment(o, w2.size()) = w2;
    o += w2.size();
    theta[o] = b2;
    return theta;
  }

  void unpack(const Vector<Scalar>& theta) {
    if (theta.size() != static_cast<Eigen::Index>(num_params())) {
      throw std::invalid_argument("MlpT::unpack: parameter count mismatch");
    }
    Eigen::Index o = 0;
    Eigen::Map<Vector<Scalar>>(w1.data(), w1.size()) = theta.segment(o, w1.size());
    o += w1.size();
    b1 = theta.segment(o, b1.size());
    o += b1.size();
    w2 = theta.segment(o, w2.size());
    o += w2.size();
    b2 = theta[o];
  }

  bool all_finite() const { return w1.allFinite() && b1.allFinite() && w2.allFinite() && std::isfinite(b2); }

  template <typename Other>
  MlpT<Other> cast() const {
    MlpT<Other> m;
    m.w1 = w1.template cast<Other>();
    m.b1 = b1.template cast<Other>();
    m.w2 = w2.template cast<Other>();
    m.b2 = Other(b2);
    return m;
  }
};
using MlpModel = MlpT<double>;

template <typename Scalar>
Matrix<Scalar> sigmoid(const Matrix<Scalar>& z) {
  return (Scalar(1) + (-z.array()).exp()).inverse().matrix();
}

template <typename Scalar>
Matrix<Scalar> hidden_activations(const MlpT<Scalar>& model, const Matrix<Scalar>& features) {
  Matrix<Scalar> z = features * model.w1.transpose();
  z.rowwise() += model.b1.transpose();
  return sigmoid<Scalar>(z);
}

// Scores of every row of `features`.
template <typename Scalar>
Vector<Scalar> mlp_scores(const MlpT<Scalar>& model, const Matrix<Scalar>& features) {
  if (static_cast<std::size_t>(features.cols()) != model.input_dim()) {
    throw std::invalid_argument("mlp_forward: input dim " + std::to_string(features.cols()) + " != model dim " +
                                std::to_string(model.input_dim()));
  }
  Vector<Scalar> s = hidden_activations(model, features) * model.w2;
  s.array() += model.b2;
  return s;
}

template <typename Scalar>
Scalar mlp_forward(const MlpT<Scalar>& model, const Vector<Scalar>& features) {
  return mlp_scores<Scalar>(model, features.transpose())[0];
}

// Loss graph of one click: each candidate is scored once, the clicked score u is
// paired with every other score v_j through H(u,v) = max(1 - (u - v), 0), and a
// single weighting node applies lambda(1 + sum_j h_j) / q.
template <typename Scalar>
struct QueryLossGraph {
  Matrix<Scalar> hidden;        // candidates x hidden
  Vector<Scalar> scores;        // candidates
  std::vector<Scalar> hinge;    // one per candidate; 0 at the clicked index
  std::vector<bool> active;     // hinge argument strictly positive
  Scalar hinge_sum = Scalar(0);
  Scalar loss = Scalar(0);
};

template <typename Scalar>
QueryLossGraph<Scalar> query_loss_graph(const MlpT<Scalar>& model, const Matrix<Scalar>& features,
                                        std::size_t clicked, double propensity, const RankWeighting& lambda) {
  if (!(propensity > 0.0)) throw std::invalid_argument("query_loss: propensity must be > 0");
  if (clicked >= static_cast<std::size_t>(features.rows())) {
    throw std::out_of_range("query_loss: clicked index out of range");
  }
  QueryLossGraph<Scalar> g;
  g.hidden = hidden_activations(model, features);
  g.scores = g.hidden * model.w2;
  g.scores.array() += model.b2;
  const auto m = static_cast<std::size_t>(features.rows());
  g.hinge.assign(m, Scalar(0));
  g.active.assign(m, false);
  const Scalar u = g.scores[static_cast<Eigen::Index>(clicked)];
  for (std::size_t y = 0; y < m; ++y) {
    if (y == clicked) continue;
    const Scalar arg = Scalar(1) - (u - g.scores[static_cast<Eigen::Index>(y)]);
    if (arg > Scalar(0)) {
      g.hinge[y] = arg;
      g.active[y] = true;
      g.hinge_sum += arg;
    }
  }
  g.loss = lambda(Scalar(1) + g.hinge_sum) / Scalar(propensity);
  return g;
}

// (1/q) lambda(1 + sum_{y != clicked} max(1 - (NN(x_clicked) - NN(x_y)), 0)).
template <typename Scalar>
Scalar query_loss(const MlpT<Scalar>& model, const Matrix<Scalar>& features, std::size_t clicked, double propensity,
                  const RankWeighting& lambda) {
  return query_loss_graph(model, features, clicked, propensity, lambda).loss;
}

inline double query_loss(const MlpModel& model, const QueryInstance& query, std::size_t clicked, double propensity,
                         const RankWeighting& lambda) {
  return query_loss<double>(model, query.features, clicked, propensity, lambda);
}

// Reverse pass through the loss graph. A hinge exactly at its kink contributes 0.
template <typename Scalar>
MlpT<Scalar> query_loss_gradient(const MlpT<Scalar>& model, const Matrix<Scalar>& features, std::size_t clicked,
                                 double propensity, const RankWeighting& lambda, Scalar* loss_out = nullptr) {
  const QueryLossGraph<Scalar> g = query_loss_graph(model, features, clicked, propensity, lambda);
  if (loss_out) *loss_out = g.loss;

  const Scalar dloss_dsum = lambda.derivative(Scalar(1) + g.hinge_sum) / Scalar(propensity);
  const auto m = static_cast<Eigen::Index>(features.rows());
  Vector<Scalar> dscore = Vector<Scalar>::Zero(m);
  for (Eigen::Index y = 0; y < m; ++y) {
    if (!g.active[static_cast<std::size_t>(y)]) continue;
    dscore[y] += dloss_dsum;
    dscore[static_cast<Eigen::Index>(clicked)] -= dloss_dsum;
  }

  MlpT<Scalar> grad(model.input_dim(), model.hidden());
  grad.w2 = g.hidden.transpose() * dscore;
  grad.b2 = dscore.sum();
  // d/dz sigmoid = a (1 - a)
  const Matrix<Scalar> dz =
      ((dscore * model.w2.transpose()).array() * g.hidden.array() * (Scalar(1) - g.hidden.array())).matrix();
  grad.w1 = dz.transpose() * features;
  grad.b1 = dz.colwise().sum().transpose();
  return grad;
}

inline MlpModel query_loss_gradient(const MlpModel& model, const QueryInstance& query, std::size_t clicked,
                                    double propensity, const RankWeighting& lambda) {
  return query_loss_gradient<double>(model, query.features, clicked, propensity, lambda);
}

// Central differences of query_loss over every parameter.
template <typename Scalar>
Vector<Scalar> finite_difference_gradient(const MlpT<Scalar>& model, const Matrix<Scalar>& features,
                                          std::size_t clicked, double propensity, const RankWeighting& lambda,
                                          Scalar step) {
  const Vector<Scalar> theta = model.pack();
  Vector<Scalar> out(theta.size());
  MlpT<Scalar> probe = model;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector<Scalar> t = theta;
    t[i] = theta[i] + step;
    probe.unpack(t);
    const Scalar up = query_loss(probe, features, clicked, propensity, lambda);
    t[i] = theta[i] - step;
    probe.unpack(t);
    const Scalar down = query_loss(probe, features, clicked, propensity, lambda);
    out[i] = (up - down) / (Scalar(2) * step);
  }
  return out;
}

// Smallest |1 - (u - v_j)| over the hinge nodes of one click.
double min_kink_distance(const MlpModel& model, const QueryInstance& query, std::size_t clicked);

struct SgdConfig {
  int epochs = 750;
  std::size_t hidden = 200;
  std::size_t minibatch_docs = 1000;
  double learning_rate = 1e-6;
  // The rate is multiplied by `decay_factor` at each boundary epoch (1-based).
  std::vector<int> decay_epochs{300, 500};
  double decay_factor = 0.1;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  RankWeighting train_weighting = RankWeighting::dcg();

  void validate() const;
  double rate_at(int epoch) const;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

// Adam step with decoupled weight decay:
// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta).
void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, double lr,
               const SgdConfig& config);

struct DeepEpoch {
  int epoch = 0;
  double train_ips_dcg = 0.0;  // IPS estimate of the training weighting loss
  double grad_norm = 0.0;      // mean minibatch gradient norm
};

struct DeepResult {
  MlpModel model;
  std::vector<DeepEpoch> trace;
};

// Query-level SGD: minibatches are whole click instances, accumulated until the
// candidate count reaches minibatch_docs. Throws NumericError on divergence.
DeepResult train_deep(const ClickLog& log, const Dataset& data, const SgdConfig& config);
DeepResult train_deep(const ClickLog& log, const Dataset& data, const SgdConfig& config, MlpModel initial);

RankingSystem mlp_system(const MlpModel& model);

void write_deep_trace_csv(const std::vector<DeepEpoch>& trace, std::ostream& out);

// Text header "mlp <input_dim> <hidden> sigmoid", then w1 (row-major), b1, w2, b2.
void save_mlp_model(const MlpModel& model, const std::string& path);
MlpModel load_mlp_model(const std::string& path);

}  // namespace cltr

#endif  // CLTR_DEEP_PROPDCG_HPP
