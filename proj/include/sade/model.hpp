#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sade/constraint.hpp"
#include "sade/dataset.hpp"
#include "sade/rational.hpp"
#include "sade/schema.hpp"

namespace sade {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LossKind { CrossEntropy, SumSquaredError };

LossKind loss_kind_for(TaskKind task);

// Linear model: one affine row per output, last column is the bias. The
// rational weights are authoritative (solver solutions arrive as exact
// rationals and admissibility is proven for exactly those values); a float
// mirror derived from them drives loss/gradient arithmetic.
struct LinearModel {
  TaskKind task = TaskKind::BinaryClassification;
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::vector<std::string> class_names;  // classification label names, may be empty
  std::vector<std::vector<Rational>> weights;    // K x (d+1)
  std::vector<std::vector<double>> weights_f;    // nearest-double mirror

  std::size_t n_outputs() const { return target_names.size(); }
  std::size_t dim() const { return feature_names.size(); }

  // Replaces the weights and refreshes the float mirror.
  void set_weights(std::vector<std::vector<Rational>> w);
};

// Zero-initialized model with the dataset's feature/target layout.
LinearModel make_model(const Dataset& d);

// Row-wise w_k . x + b_k on the float mirror.
std::vector<double> predict(const LinearModel& m, const std::vector<double>& x);

// Exact prediction: doubles convert to rationals losslessly, the weights
// are already rational.
std::vector<Rational> predict_rational(const LinearModel& m, const std::vector<double>& x);

// Multiclass: argmax of the K scores (ties to the lowest index). Binary:
// 1 (positive class) iff score > 0, else 0. Throws on regression models.
std::size_t predict_class(const LinearModel& m, const std::vector<double>& x);

// Loss over the dataset, restricted to `subset` if nonempty.
//   CrossEntropy, binary:    -mean[y01 ln s + (1-y01) ln(1-s)], s = sigmoid(f)
//   CrossEntropy, multiclass: sum over rows of the per-class binary CE
//   SumSquaredError:          sum over targets of mean squared error
// The sigmoid is clamped to [1e-12, 1 - 1e-12] before the logs.
double loss(const LinearModel& m, const Dataset& d, LossKind kind,
            const std::vector<std::size_t>& subset = {});

// Analytic gradient of `loss` with respect to every weight, same shape as
// the weight matrix.
std::vector<std::vector<double>> gradient(const LinearModel& m, const Dataset& d, LossKind kind,
                                          const std::vector<std::size_t>& subset = {});

// Affine row k over the given coordinate symbols as SMT-LIB text. Symbolic
// mode names the weights w_<k>_<i>; concrete mode emits the exact rational
// weight literals.
std::string emit_affine(const LinearModel& m, std::size_t k,
                        const std::vector<std::string>& coords, bool symbolic);

// Same, with coordinates named <var>_0 ... <var>_<d-1>.
std::string emit_affine(const LinearModel& m, std::size_t k, const std::string& var,
                        bool symbolic);

// All weight symbol names, row-major: w_0_0 ... w_{K-1}_{d}.
std::vector<std::string> weight_symbols(const LinearModel& m);

// Adapter for constraint instantiation.
AffineEmitter affine_emitter(const LinearModel& m, bool symbolic);

// JSON round trip. Weights serialize as exact "p/q" strings (canonical)
// plus a decimal approximation for human readers.
nlohmann::json model_to_json(const LinearModel& m);
LinearModel model_from_json(const nlohmann::json& j);

}  // namespace sade
