#include "sade/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>

namespace sade {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// ceil(rate * n) with protection against representation fuzz (0.05 * 500
// must come out as 25, not 26).
std::size_t violator_count(double rate, std::size_t n) {
  double t = rate * static_cast<double>(n);
  auto nearest = static_cast<long long>(std::llround(t));
  if (std::abs(t - static_cast<double>(nearest)) < 1e-9) {
    return static_cast<std::size_t>(nearest);
  }
  return static_cast<std::size_t>(std::ceil(t));
}

// Marks `count` of the n row indices as violators, seed-controlled.
std::vector<bool> pick_violators(std::size_t n, std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<bool> mark(n, false);
  for (std::size_t i = 0; i < count && i < n; ++i) mark[ids[i]] = true;
  return mark;
}

// Approval score of the planted ground-truth model. Over the denial region
// (income < 0.3) it stays below -0.05, so the planted model itself
// satisfies the paired constraint with margin.
double loan_score(double credit, double assets, double income) {
  return 0.8 * credit + 0.6 * assets + 4.0 * income - 2.65;
}

SyntheticData generate_binary_denial(const GeneratorSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> denial_income(0.02, 0.28);

  std::size_t n_v = violator_count(spec.violation_rate, spec.n);
  auto is_violator = pick_violators(spec.n, n_v, rng);

  std::string csv = "credit,assets,income,approved\n";
  SyntheticData out;
  for (std::size_t r = 0; r < spec.n; ++r) {
    double credit, assets, income;
    std::string label;
    if (is_violator[r]) {
      // Approved despite sitting strictly inside the denial region.
      credit = unit(rng);
      assets = unit(rng);
      income = denial_income(rng);
      label = "yes";
      out.violator_ids.push_back(r);
    } else {
      // Rejection-sample a point the planted model classifies with margin
      // >= 0.05; such points never land approved inside the denial region.
      double score;
      do {
        credit = unit(rng);
        assets = unit(rng);
        income = unit(rng);
        score = loan_score(credit, assets, income);
      } while (std::abs(score) < 0.05);
      label = score > 0 ? "yes" : "no";
    }
    csv += format_double(credit) + "," + format_double(assets) + "," + format_double(income) +
           "," + label + "\n";
  }

  Schema schema;
  schema.columns = {{"credit", ColumnKind::Numeric},
                    {"assets", ColumnKind::Numeric},
                    {"income", ColumnKind::Numeric},
                    {"approved", ColumnKind::Target}};
  schema.task = TaskKind::BinaryClassification;

  out.dataset = load_csv_text(csv, schema, "<binary-denial>");
  out.csv = std::move(csv);
  out.constraints =
      "; applicants below the income threshold must not be approved\n"
      "(constraint denial-region\n"
      "  (forall (x)\n"
      "    (=> (< (feat x income) 0.3)\n"
      "        (< (pred x approved) 0))))\n";
  out.bound_overrides = {{"credit", {0.0, 1.0}}, {"assets", {0.0, 1.0}}, {"income", {0.0, 1.0}}};
  return out;
}

SyntheticData generate_regression_budget(const GeneratorSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> shave(0.0, 0.005);
  std::uniform_real_distribution<double> overshoot(0.005, 0.05);

  std::size_t n_v = violator_count(spec.violation_rate, spec.n);
  auto is_violator = pick_violators(spec.n, n_v, rng);

  std::string csv = "income,household_size,urban,going_out,food,other\n";
  SyntheticData out;
  for (std::size_t r = 0; r < spec.n; ++r) {
    double income = unit(rng);
    double hsize = unit(rng);
    double urban = unit(rng);
    // Planted model; over [0,1]^3 it keeps going_out <= 0.05*income with
    // margin 0.0025 and the target sum <= income with margin 0.0125.
    double go = 0.03 * income + 0.005 * hsize - 0.0075;
    double food = 0.35 * income + 0.02 * hsize + 0.01 * urban - 0.03;
    double other = 0.25 * income + 0.02 * urban - 0.03;
    // Noise only ever shaves spending down, so clean labels inherit the
    // planted model's slack on both constraints.
    food -= shave(rng);
    other -= shave(rng);
    if (is_violator[r]) {
      // Spend past the whole budget on going out; this overshoots the sum
      // cap by construction and the 5% cap by at least 0.35*income + 0.01.
      go = income - food - other + overshoot(rng);
      out.violator_ids.push_back(r);
    } else {
      go -= shave(rng);
    }
    csv += format_double(income) + "," + format_double(hsize) + "," + format_double(urban) + "," +
           format_double(go) + "," + format_double(food) + "," + format_double(other) + "\n";
  }

  Schema schema;
  schema.columns = {{"income", ColumnKind::Numeric},  {"household_size", ColumnKind::Numeric},
                    {"urban", ColumnKind::Numeric},   {"going_out", ColumnKind::Target},
                    {"food", ColumnKind::Target},     {"other", ColumnKind::Target}};
  schema.task = TaskKind::MultiTargetRegression;

  out.dataset = load_csv_text(csv, schema, "<regression-budget>");
  out.csv = std::move(csv);
  out.constraints =
      "; total predicted spending stays within income\n"
      "(constraint within-income\n"
      "  (forall (x)\n"
      "    (<= (sum_preds x) (feat x income))))\n"
      "\n"
      "; going out is capped at 5% of income\n"
      "(constraint going-out-cap\n"
      "  (forall (x)\n"
      "    (<= (pred x going_out) (* 0.05 (feat x income)))))\n";
  out.bound_overrides = {
      {"income", {0.0, 1.0}}, {"household_size", {0.0, 1.0}}, {"urban", {0.0, 1.0}}};
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.violation_rate < 0.0 || spec.violation_rate >= 1.0) {
    throw DataError("violation_rate must be in [0, 1)");
  }
  if (spec.n == 0) throw DataError("generator needs n >= 1");
  if (spec.name == "binary-denial" || spec.name == "binary") {
    return generate_binary_denial(spec, seed);
  }
  if (spec.name == "regression-budget" || spec.name == "regression") {
    return generate_regression_budget(spec, seed);
  }
  throw DataError("unknown generator name: '" + spec.name + "'");
}

}  // namespace sade
