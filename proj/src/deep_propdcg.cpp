#include "cltr/deep_propdcg.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace cltr {

double min_kink_distance(const MlpModel& model, const QueryInstance& query, std::size_t clicked) {
  const VectorXd s = mlp_scores<double>(model, query.features);
  double closest = std::numeric_limits<double>::infinity();
  for (Eigen::Index y = 0; y < s.size(); ++y) {
    if (static_cast<std::size_t>(y) == clicked) continue;
    closest = std::min(closest, std::abs(1.0 - (s[static_cast<Eigen::Index>(clicked)] - s[y])));
  }
  return closest;
}

void SgdConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (hidden < 1 || minibatch_docs < 1) throw std::invalid_argument("hidden and minibatch size must be >= 1");
  if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) {
    throw std::invalid_argument("learning rate and weight decay must be >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw std::invalid_argument("bad Adam constants");
  }
  if (!(decay_factor > 0.0)) throw std::invalid_argument("decay factor must be > 0");
  if (train_weighting.kind == RankWeighting::Kind::PrecAtK) {
    throw std::invalid_argument("Prec@k has no usable derivative for training");
  }
  train_weighting.validate();
}

double SgdConfig::rate_at(int epoch) const {
  double lr = learning_rate;
  for (int boundary : decay_epochs) {
    if (epoch > boundary) lr *= decay_factor;
  }
  return lr;
}

void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, double lr,
               const SgdConfig& config) {
  if (state.m.size() != theta.size()) {
    state.m = Eigen::VectorXd::Zero(theta.size());
    state.v = Eigen::VectorXd::Zero(theta.size());
    state.step = 0;
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const Eigen::ArrayXd m_hat = state.m.array() / c1;
  const Eigen::ArrayXd v_hat = state.v.array() / c2;
  theta.array() -= lr * (m_hat / (v_hat.sqrt() + config.adam_eps) + config.weight_decay * theta.array());
}

RankingSystem mlp_system(const MlpModel& model) {
  return [model](const QueryInstance& q) { return rank_by_scores(mlp_scores<double>(model, q.features), q.query_id); };
}

DeepResult train_deep(const ClickLog& log, const Dataset& data, const SgdConfig& config) {
  return train_deep(log, data, config, MlpModel::glorot(data.feature_dim, config.hidden, derive_seed(config.seed, {1})));
}

DeepResult train_deep(const ClickLog& log, const Dataset& data, const SgdConfig& config, MlpModel initial) {
  config.validate();
  validate_log(log, data);
  if (initial.input_dim() != data.feature_dim) throw std::invalid_argument("train_deep: model/data dim mismatch");

  DeepResult result;
  result.model = std::move(initial);
  if (log.empty() || config.epochs == 0) return result;

  Eigen::VectorXd theta = result.model.pack();
  AdamState adam;
  std::vector<std::size_t> order(log.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, {2, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    const double lr = config.rate_at(epoch);

    double grad_norm_sum = 0.0;
    std::size_t batches = 0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(theta.size());
      std::size_t docs = 0;
      std::size_t count = 0;
      while (pos < order.size() && docs < config.minibatch_docs) {
        const ClickRecord& r = log.records[order[pos++]];
        const QueryInstance& q = data.queries[r.query];
        grad += query_loss_gradient<double>(result.model, q.features, r.clicked, r.propensity,
                                            config.train_weighting)
                    .pack();
        docs += q.num_candidates();
        ++count;
      }
      grad /= static_cast<double>(count);
      if (!grad.allFinite()) {
        throw NumericError("train_deep: non-finite gradient in epoch " + std::to_string(epoch));
      }
      grad_norm_sum += grad.norm();
      ++batches;
      adam_step(theta, grad, adam, lr, config);
      result.model.unpack(theta);
    }

    DeepEpoch e;
    e.epoch = epoch;
    e.grad_norm = grad_norm_sum / static_cast<double>(batches);
    const std::string diverged = "train_deep: training diverged in epoch " + std::to_string(epoch);
    if (!result.model.all_finite()) throw NumericError(diverged);
    try {
      e.train_ips_dcg = ips_risk(log, data, mlp_system(result.model), config.train_weighting);
    } catch (const NumericError& err) {
      throw NumericError(diverged + ": " + err.what());
    }
    if (!std::isfinite(e.train_ips_dcg)) throw NumericError(diverged);
    result.trace.push_back(e);
  }
  return result;
}

void write_deep_trace_csv(const std::vector<DeepEpoch>& trace, std::ostream& out) {
  std::ostringstream rows;
  rows.precision(17);
  rows << "epoch,train_ips_dcg,grad_norm\n";
  for (const auto& e : trace) rows << e.epoch << ',' << e.train_ips_dcg << ',' << e.grad_norm << '\n';
  out << rows.str();
}

void save_mlp_model(const MlpModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "mlp " << model.input_dim() << ' ' << model.hidden() << " sigmoid\n" << std::setprecision(17);
  const Eigen::VectorXd theta = model.pack();
  for (Eigen::Index i = 0; i < theta.size(); ++i) out << theta[i] << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

MlpModel load_mlp_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string tag, activation;
  std::size_t input_dim = 0, hidden = 0;
  if (!(in >> tag >> input_dim >> hidden >> activation) || tag != "mlp" || activation != "sigmoid") {
    throw DataError(path + ": bad model header");
  }
  MlpModel model(input_dim, hidden);
  Eigen::VectorXd theta(static_cast<Eigen::Index>(model.num_params()));
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!(in >> theta[i])) throw DataError(path + ": truncated parameter list");
  }
  model.unpack(theta);
  if (!model.all_finite()) throw DataError(path + ": non-finite parameter");
  return model;
}

}  // namespace cltr
