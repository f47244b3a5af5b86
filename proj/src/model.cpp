#include "sade/model.hpp"

#include <algorithm>
#include <cmath>

namespace sade {

namespace {

constexpr double kSigmoidClamp = 1e-12;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamped_sigmoid(double z) {
  return std::clamp(sigmoid(z), kSigmoidClamp, 1.0 - kSigmoidClamp);
}

void check_point(const LinearModel& m, const std::vector<double>& x) {
  if (x.size() != m.dim()) {
    throw ModelError("point has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(m.dim()));
  }
}

void check_loss_kind(const LinearModel& m, LossKind kind) {
  if (loss_kind_for(m.task) != kind) {
    throw ModelError("loss kind does not match the model's task");
  }
}

// Instances to iterate: the subset if given, else everything.
std::vector<std::size_t> resolve_subset(const Dataset& d, const std::vector<std::size_t>& subset) {
  if (!subset.empty()) {
    for (auto i : subset) {
      if (i >= d.n()) throw ModelError("subset index out of range");
    }
    return subset;
  }
  std::vector<std::size_t> all(d.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

void check_dataset(const LinearModel& m, const Dataset& d) {
  if (d.dim() != m.dim() || d.n_targets() != m.n_outputs()) {
    throw ModelError("dataset shape does not match the model");
  }
}

}  // namespace

LossKind loss_kind_for(TaskKind task) {
  return task == TaskKind::MultiTargetRegression ? LossKind::SumSquaredError
                                                 : LossKind::CrossEntropy;
}

void LinearModel::set_weights(std::vector<std::vector<Rational>> w) {
  if (w.size() != n_outputs()) throw ModelError("weight matrix has the wrong number of rows");
  for (const auto& row : w) {
    if (row.size() != dim() + 1) throw ModelError("weight row has the wrong length");
  }
  weights = std::move(w);
  weights_f.assign(n_outputs(), {});
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights_f[k].reserve(dim() + 1);
    for (const auto& wv : weights[k]) weights_f[k].push_back(to_double(wv));
  }
}

LinearModel make_model(const Dataset& d) {
  LinearModel m;
  m.task = d.schema.task;
  m.feature_names = d.feature_names();
  m.target_names = d.target_names;
  m.class_names = d.class_names;
  if (m.dim() == 0 || m.n_outputs() == 0) throw ModelError("model needs features and targets");
  m.set_weights(std::vector<std::vector<Rational>>(m.n_outputs(),
                                                   std::vector<Rational>(m.dim() + 1, 0)));
  return m;
}

std::vector<double> predict(const LinearModel& m, const std::vector<double>& x) {
  check_point(m, x);
  std::vector<double> out(m.n_outputs());
  for (std::size_t k = 0; k < m.n_outputs(); ++k) {
    double s = m.weights_f[k][m.dim()];
    for (std::size_t i = 0; i < m.dim(); ++i) s += m.weights_f[k][i] * x[i];
    out[k] = s;
  }
  return out;
}

std::vector<Rational> predict_rational(const LinearModel& m, const std::vector<double>& x) {
  check_point(m, x);
  std::vector<Rational> out(m.n_outputs());
  for (std::size_t k = 0; k < m.n_outputs(); ++k) {
    Rational s = m.weights[k][m.dim()];
    for (std::size_t i = 0; i < m.dim(); ++i) s += m.weights[k][i] * rational_from_double(x[i]);
    out[k] = s;
  }
  return out;
}

std::size_t predict_class(const LinearModel& m, const std::vector<double>& x) {
  if (m.task == TaskKind::MultiTargetRegression) {
    throw ModelError("predict_class is undefined for regression models");
  }
  auto scores = predict(m, x);
  if (m.task == TaskKind::BinaryClassification) {
    return scores[0] > 0 ? 1 : 0;  // score 0 falls to the negative class
  }
  return static_cast<std::size_t>(
      std::max_element(scores.begin(), scores.end()) - scores.begin());
}

double loss(const LinearModel& m, const Dataset& d, LossKind kind,
            const std::vector<std::size_t>& subset) {
  check_loss_kind(m, kind);
  check_dataset(m, d);
  auto ids = resolve_subset(d, subset);
  if (ids.empty()) throw ModelError("loss over an empty dataset");
  const double n = static_cast<double>(ids.size());

  double total = 0.0;
  for (std::size_t k = 0; k < m.n_outputs(); ++k) {
    double acc = 0.0;
    for (auto i : ids) {
      const Instance& inst = d.instances[i];
      double f = m.weights_f[k][m.dim()];
      for (std::size_t j = 0; j < m.dim(); ++j) f += m.weights_f[k][j] * inst.x[j];
      if (kind == LossKind::CrossEntropy) {
        double y01 = inst.y[k] > 0 ? 1.0 : 0.0;  // labels are +/-1
        double s = clamped_sigmoid(f);
        acc -= y01 * std::log(s) + (1.0 - y01) * std::log(1.0 - s);
      } else {
        double e = f - inst.y[k];
        acc += e * e;
      }
    }
    total += acc / n;
  }
  return total;
}

std::vector<std::vector<double>> gradient(const LinearModel& m, const Dataset& d, LossKind kind,
                                          const std::vector<std::size_t>& subset) {
  check_loss_kind(m, kind);
  check_dataset(m, d);
  auto ids = resolve_subset(d, subset);
  if (ids.empty()) throw ModelError("gradient over an empty dataset");
  const double n = static_cast<double>(ids.size());

  std::vector<std::vector<double>> g(m.n_outputs(), std::vector<double>(m.dim() + 1, 0.0));
  for (std::size_t k = 0; k < m.n_outputs(); ++k) {
    for (auto i : ids) {
      const Instance& inst = d.instances[i];
      double f = m.weights_f[k][m.dim()];
      for (std::size_t j = 0; j < m.dim(); ++j) f += m.weights_f[k][j] * inst.x[j];
      // d/df of the per-instance loss
      double df;
      if (kind == LossKind::CrossEntropy) {
        double y01 = inst.y[k] > 0 ? 1.0 : 0.0;
        df = sigmoid(f) - y01;
      } else {
        df = 2.0 * (f - inst.y[k]);
      }
      for (std::size_t j = 0; j < m.dim(); ++j) g[k][j] += df * inst.x[j];
      g[k][m.dim()] += df;
    }
    for (auto& v : g[k]) v /= n;
  }
  return g;
}

std::string emit_affine(const LinearModel& m, std::size_t k,
                        const std::vector<std::string>& coords, bool symbolic) {
  if (k >= m.n_outputs()) throw ModelError("output index out of range");
  if (coords.size() != m.dim()) throw ModelError("coordinate arity mismatch");
  auto weight = [&](std::size_t i) {
    return symbolic ? "w_" + std::to_string(k) + "_" + std::to_string(i)
                    : smt_literal(m.weights[k][i]);
  };
  std::string out = "(+";
  for (std::size_t i = 0; i < m.dim(); ++i) {
    out += " (* " + weight(i) + " " + coords[i] + ")";
  }
  return out + " " + weight(m.dim()) + ")";
}

std::string emit_affine(const LinearModel& m, std::size_t k, const std::string& var,
                        bool symbolic) {
  std::vector<std::string> coords;
  for (std::size_t i = 0; i < m.dim(); ++i) coords.push_back(var + "_" + std::to_string(i));
  return emit_affine(m, k, coords, symbolic);
}

std::vector<std::string> weight_symbols(const LinearModel& m) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < m.n_outputs(); ++k) {
    for (std::size_t i = 0; i <= m.dim(); ++i) {
      out.push_back("w_" + std::to_string(k) + "_" + std::to_string(i));
    }
  }
  return out;
}

AffineEmitter affine_emitter(const LinearModel& m, bool symbolic) {
  AffineEmitter em;
  em.feature_names = m.feature_names;
  em.target_names = m.target_names;
  em.row = [&m, symbolic](std::size_t k, const std::vector<std::string>& coords) {
    return emit_affine(m, k, coords, symbolic);
  };
  return em;
}

nlohmann::json model_to_json(const LinearModel& m) {
  nlohmann::json j;
  j["task"] = to_string(m.task);
  j["feature_names"] = m.feature_names;
  j["target_names"] = m.target_names;
  if (!m.class_names.empty()) j["class_names"] = m.class_names;
  nlohmann::json exact = nlohmann::json::array();
  nlohmann::json approx = nlohmann::json::array();
  for (const auto& row : m.weights) {
    nlohmann::json er = nlohmann::json::array();
    nlohmann::json ar = nlohmann::json::array();
    for (const auto& w : row) {
      er.push_back(fraction_string(w));
      ar.push_back(to_double(w));
    }
    exact.push_back(std::move(er));
    approx.push_back(std::move(ar));
  }
  j["weights"] = std::move(exact);
  j["weights_approx"] = std::move(approx);
  return j;
}

LinearModel model_from_json(const nlohmann::json& j) {
  LinearModel m;
  m.task = task_from_string(j.at("task").get<std::string>());
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.target_names = j.at("target_names").get<std::vector<std::string>>();
  if (j.contains("class_names")) {
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
  }
  std::vector<std::vector<Rational>> w;
  for (const auto& row : j.at("weights")) {
    std::vector<Rational> r;
    for (const auto& v : row) r.push_back(parse_rational(v.get<std::string>()));
    w.push_back(std::move(r));
  }
  if (w.size() != m.n_outputs()) throw ModelError("weight matrix has the wrong number of rows");
  m.set_weights(std::move(w));
  return m;
}

}  // namespace sade
