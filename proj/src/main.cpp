// Command-line entry point: wires configs, datasets, constraints, training,
// verification and evaluation into reproducible runs. Every run reads one
// JSON config (paths resolved relative to the config file) and writes JSON
// reports into the output directory; a handful of flags override config
// values for scripting.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sade/constraint.hpp"
#include "sade/dataset.hpp"
#include "sade/evalharness.hpp"
#include "sade/model.hpp"
#include "sade/synthetic.hpp"
#include "sade/trainer.hpp"
#include "sade/verifier.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sade;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::string out;     // empty: config value, then "run-out"
  std::string solver;  // whitespace-split argv override
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::size_t jobs = 0;  // 0: config value, then 1
};

// The parsed config plus everything the flags override.
struct Run {
  json raw;
  fs::path config_dir;
  fs::path out;
  std::uint64_t seed = 0;
  bool seed_from_flag = false;  // a --seed flag beats every config seed
  std::size_t jobs = 1;
  std::vector<std::string> solver_command;  // empty: backend default
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CliError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path().empty() ? "." : p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw CliError("cannot write " + p.string());
  out << text;
}

void write_json_file(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

Run make_run(const Flags& flags) {
  Run run;
  fs::path cfg_path = flags.config;
  json parsed;
  try {
    parsed = json::parse(read_file(cfg_path));
  } catch (const json::exception& e) {
    throw CliError("config " + cfg_path.string() + " is not valid JSON: " + e.what());
  }
  run.raw = std::move(parsed);
  run.config_dir = cfg_path.parent_path();
  std::string out = !flags.out.empty() ? flags.out : run.raw.value("out", std::string("run-out"));
  run.out = out;
  run.seed = flags.has_seed ? flags.seed : run.raw.value("seed", std::uint64_t{0});
  run.seed_from_flag = flags.has_seed;
  run.jobs = flags.jobs ? flags.jobs : run.raw.value("jobs", std::size_t{1});
  if (!flags.solver.empty())
    run.solver_command = split_ws(flags.solver);
  else if (run.raw.contains("solver") && run.raw["solver"].contains("command"))
    run.solver_command = run.raw["solver"]["command"].get<std::vector<std::string>>();
  return run;
}

// Paths in the config are relative to the config file, keeping run
// directories relocatable.
fs::path resolve(const Run& run, const std::string& p) {
  fs::path path = p;
  return path.is_absolute() ? path : run.config_dir / path;
}

fs::path required_path(const Run& run, const std::string& key) {
  if (!run.raw.contains(key)) throw CliError("config is missing \"" + key + "\"");
  fs::path p = resolve(run, run.raw.at(key).get<std::string>());
  if (!fs::exists(p)) throw CliError("config \"" + key + "\": no such file: " + p.string());
  return p;
}

Schema schema_from(const Run& run) {
  if (run.raw.contains("schema")) return Schema::from_json(run.raw.at("schema"));
  if (run.raw.contains("schema_file"))
    return Schema::from_json(json::parse(read_file(required_path(run, "schema_file"))));
  throw CliError("config needs \"schema\" (inline) or \"schema_file\"");
}

Dataset dataset_from(const Run& run, const std::string& key) {
  Schema schema = schema_from(run);
  Dataset d = load_csv(required_path(run, key).string(), schema);
  if (run.raw.value("scale", true)) d = scale_features(d);
  std::map<std::string, std::pair<double, double>> overrides;
  if (run.raw.contains("bounds"))
    for (const auto& [name, lohi] : run.raw.at("bounds").items())
      overrides[name] = {lohi.at(0).get<double>(), lohi.at(1).get<double>()};
  d.bounds = compute_bounds(d, overrides);
  return d;
}

ConstraintSet constraints_from(const Run& run, const Schema& schema) {
  if (!run.raw.contains("constraints")) return {};
  fs::path p = required_path(run, "constraints");
  return parse_constraint_file(read_file(p), schema);
}

TrainConfig train_config_from(const Run& run) {
  TrainConfig cfg;
  cfg.seed = run.seed;
  const json j = run.raw.value("train", json::object());
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.classification_thresholds =
      j.value("classification_thresholds", cfg.classification_thresholds);
  cfg.regression_threshold_coeffs =
      j.value("regression_threshold_coeffs", cfg.regression_threshold_coeffs);
  cfg.param_bound = j.value("param_bound", cfg.param_bound);
  cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
  cfg.stop_start = j.value("stop_start", cfg.stop_start);
  cfg.stop_every = j.value("stop_every", cfg.stop_every);
  cfg.stop_window = j.value("stop_window", cfg.stop_window);
  cfg.stop_min_improvement = j.value("stop_min_improvement", cfg.stop_min_improvement);
  if (!run.seed_from_flag) cfg.seed = j.value("seed", cfg.seed);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.exact_instance_guard = j.value("exact_instance_guard", cfg.exact_instance_guard);
  return cfg;
}

json train_config_json(const TrainConfig& cfg) {
  return json{
      {"alpha", cfg.alpha},
      {"batch_size", cfg.batch_size},
      {"epochs", cfg.epochs},
      {"classification_thresholds", cfg.classification_thresholds},
      {"regression_threshold_coeffs", cfg.regression_threshold_coeffs},
      {"param_bound", cfg.param_bound},
      {"max_iterations", cfg.max_iterations},
      {"stop_start", cfg.stop_start},
      {"stop_every", cfg.stop_every},
      {"stop_window", cfg.stop_window},
      {"stop_min_improvement", cfg.stop_min_improvement},
      {"seed", cfg.seed},
      {"learning_rate", cfg.learning_rate},
      {"exact_instance_guard", cfg.exact_instance_guard},
  };
}

SolverConfig solver_config_from(const Run& run) {
  SolverConfig cfg;
  cfg.solver_command = run.solver_command;
  const json j = run.raw.value("solver", json::object());
  cfg.logic = j.value("logic", cfg.logic);
  cfg.per_check_timeout_ms = j.value("timeout_ms", cfg.per_check_timeout_ms);
  cfg.decimal_precision = j.value("decimal_precision", cfg.decimal_precision);
  cfg.random_seed = j.value("random_seed", cfg.random_seed);
  return cfg;
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

// Counterexample coordinates in both unit systems: the scaled space the
// model and certificate live in (exact), and the original feature units.
json point_json(const CounterexamplePoint& pt, const Dataset& d) {
  json out = json::object();
  for (const auto& [var, coords] : pt) {
    json scaled = json::array();
    std::vector<double> approx;
    for (const Rational& c : coords) {
      scaled.push_back(fraction_string(c));
      approx.push_back(to_double(c));
    }
    json raw = json::array();
    for (double v : d.inverse_scale(approx)) raw.push_back(v);
    json named = json::object();
    const std::vector<std::string> names = d.feature_names();
    for (std::size_t i = 0; i < approx.size() && i < names.size(); ++i)
      named[names[i]] = approx[i];
    out[var] = {{"scaled", scaled}, {"scaled_approx", approx}, {"raw", raw}, {"features", named}};
  }
  return out;
}

const char* admissibility_name(Admissibility a) {
  switch (a) {
    case Admissibility::Proven: return "proven";
    case Admissibility::CounterexampleFound: return "counterexample";
    default: return "unknown";
  }
}

json certificate_json(const AdmissibilityVerdict& v, const Dataset& d) {
  json checks = json::array();
  for (const ConstraintCheck& c : v.checks)
    checks.push_back(
        {{"name", c.name}, {"verdict", verdict_name(c.verdict)}, {"elapsed_ms", c.elapsed_ms}});
  json out{{"status", admissibility_name(v.status)},
           {"checks", checks},
           {"elapsed_ms", v.elapsed_ms}};
  if (v.status == Admissibility::CounterexampleFound) {
    out["violated_constraint"] = v.violated_constraint;
    out["counterexample"] = point_json(v.counterexample, d);
  }
  return out;
}

LinearModel model_from(const Run& run) {
  fs::path p = required_path(run, "model");
  return model_from_json(json::parse(read_file(p)));
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_train(const Run& run) {
  Dataset d = dataset_from(run, "dataset");
  ConstraintSet ks = constraints_from(run, d.schema);
  TrainConfig tcfg = train_config_from(run);
  SolverConfig scfg = solver_config_from(run);

  TrainedBundle bundle = sade_train(d, ks, tcfg, scfg);
  AdmissibilityVerdict cert = prove_admissible(bundle.model, ks, d.bounds, scfg);

  write_json_file(run.out / "model.json", model_to_json(bundle.model));
  write_json_file(run.out / "certificate.json", certificate_json(cert, d));

  json trace = json::array();
  for (double v : bundle.loss_trace) trace.push_back(num_or_null(v));
  json constraint_names = json::array();
  for (const NamedConstraint& k : ks) constraint_names.push_back(k.name);
  write_json_file(run.out / "run_report.json",
                  json{{"n_train", d.n()},
                       {"constraints", constraint_names},
                       {"iterations", bundle.iterations},
                       {"sat_solves", bundle.sat_solves},
                       {"unsat_solves", bundle.unsat_solves},
                       {"unknown_solves", bundle.unknown_solves},
                       {"restarts", bundle.restarts},
                       {"crash_retries", bundle.crash_retries},
                       {"discarded_approximate", bundle.discarded_approximate},
                       {"stopped_early", bundle.stopped_early},
                       {"solver_ms", bundle.solver_ms},
                       {"archive_size", bundle.archive.size()},
                       {"best_index", bundle.best_index},
                       {"best_loss", num_or_null(bundle.archive[bundle.best_index].loss)},
                       {"loss_trace", trace},
                       {"certificate", admissibility_name(cert.status)},
                       {"train_config", train_config_json(bundle.config)}});
  std::cout << "certificate: " << admissibility_name(cert.status) << "\n";
  return cert.proven() ? 0 : 1;
}

int cmd_exact_train(const Run& run) {
  Dataset d = dataset_from(run, "dataset");
  ConstraintSet ks = constraints_from(run, d.schema);
  TrainConfig tcfg = train_config_from(run);
  SolverConfig scfg = solver_config_from(run);

  ExactTrainResult res = exact_maxsmt_train(d, ks, tcfg, scfg);
  write_json_file(run.out / "model.json", model_to_json(res.model));
  write_json_file(run.out / "exact_report.json", json{{"satisfied_count", res.satisfied.size()},
                                                      {"satisfied", res.satisfied},
                                                      {"total_soft", res.total_soft},
                                                      {"rounds", res.rounds},
                                                      {"elapsed_ms", res.elapsed_ms}});
  std::cout << "satisfied " << res.satisfied.size() << " of " << res.total_soft
            << " decision constraints\n";
  return 0;
}

int cmd_verify(const Run& run) {
  Dataset d = dataset_from(run, "dataset");
  ConstraintSet ks = constraints_from(run, d.schema);
  LinearModel m = model_from(run);
  AdmissibilityVerdict cert = prove_admissible(m, ks, d.bounds, solver_config_from(run));
  write_json_file(run.out / "certificate.json", certificate_json(cert, d));
  std::cout << "certificate: " << admissibility_name(cert.status) << "\n";
  return cert.proven() ? 0 : 1;
}

int cmd_adi(const Run& run) {
  Dataset d = dataset_from(run, "dataset");
  ConstraintSet ks = constraints_from(run, d.schema);
  LinearModel m = model_from(run);
  SolverConfig scfg = solver_config_from(run);

  std::vector<double> deltas = {0.01, 0.1};
  if (run.raw.contains("delta")) {
    deltas.clear();
    if (run.raw["delta"].is_array())
      deltas = run.raw["delta"].get<std::vector<double>>();
    else
      deltas.push_back(run.raw["delta"].get<double>());
  }

  json entries = json::array();
  for (double delta : deltas) {
    AdversityReport rep = adversity_index(m, ks, d, delta, scfg, run.jobs);
    json per = json::array();
    for (const BallResult& b : rep.per_instance) {
      json e{{"kind", b.kind == BallSearch::Found
                          ? "found"
                          : (b.kind == BallSearch::None ? "none" : "unknown")}};
      if (b.kind == BallSearch::Found) {
        e["constraint"] = b.constraint_name;
        e["point"] = point_json(b.point, d);
      }
      per.push_back(e);
    }
    entries.push_back(json{{"delta", delta},
                           {"adi", rep.adi},
                           {"total", rep.total},
                           {"found", rep.found},
                           {"none", rep.none},
                           {"unknown", rep.unknown},
                           {"elapsed_ms", rep.elapsed_ms},
                           {"per_instance", per}});
    std::cout << "delta " << delta << ": adversity index " << rep.adi << " (" << rep.found << "/"
              << rep.total << " with counterexamples)\n";
  }
  write_json_file(run.out / "adi_report.json", json{{"deltas", entries}});
  return 0;  // the report carries the index; producing it is success
}

int cmd_eval(const Run& run) {
  const std::string key = run.raw.contains("test_dataset") ? "test_dataset" : "dataset";
  Dataset d = dataset_from(run, key);
  ConstraintSet ks = constraints_from(run, d.schema);
  LinearModel m = model_from(run);
  EvalReport rep = evaluate(m, d, ks);
  write_json_file(run.out / "eval_report.json", eval_report_to_json(rep));
  std::cout << (rep.kind == MetricKind::Accuracy ? "accuracy" : "mse") << " "
            << (rep.empty_subset ? std::string("n/a (empty admissible subset)")
                                 : std::to_string(rep.value))
            << " over " << rep.n_test_admissible << "/" << rep.n_test_total
            << " admissible test instances\n";
  return 0;
}

int cmd_cv(const Run& run) {
  Dataset d = dataset_from(run, "dataset");
  ConstraintSet ks = constraints_from(run, d.schema);
  TrainConfig base = train_config_from(run);
  const json j = run.raw.value("cv", json::object());

  CvOptions opt;
  opt.folds = j.value("folds", std::size_t{5});
  opt.seed = run.seed_from_flag ? run.seed : j.value("seed", run.seed);
  opt.jobs = run.jobs;
  opt.solver = solver_config_from(run);

  const std::string learner = j.value("learner", std::string("sade"));
  std::vector<GridPoint> grid;
  if (learner == "sade") {
    opt.learner = CvLearner::Sade;
    grid = default_sade_grid(base, d.schema.task);
  } else if (learner == "baseline") {
    opt.learner = CvLearner::PenaltyDescent;
    grid = baseline_grid(base, j.value("lambdas", std::vector<double>{0.0, 0.1, 1.0, 10.0}));
  } else {
    throw CliError("cv.learner must be \"sade\" or \"baseline\"");
  }

  CvResult res = cross_validate(d, ks, grid, opt);
  write_json_file(run.out / "cv_report.json", cv_result_to_json(res));
  write_file(run.out / "cv_summary.csv", cv_csv_summary(res));
  std::cout << "selected " << res.grid[res.selected].label << " by " << res.selection_rule
            << "\n";
  return 0;
}

int cmd_synth(const Run& run) {
  if (!run.raw.contains("synth")) throw CliError("config is missing \"synth\"");
  const json j = run.raw.at("synth");
  GeneratorSpec spec;
  spec.name = j.value("name", std::string("binary-denial"));
  spec.n = j.value("n", std::size_t{200});
  spec.violation_rate = j.value("violation_rate", 0.0);

  SyntheticData sd = generate_synthetic(spec, run.seed);
  write_file(run.out / "data.csv", sd.csv);
  write_file(run.out / "constraints.sexp", sd.constraints);
  write_json_file(run.out / "schema.json", sd.dataset.schema.to_json());

  json bounds = json::object();
  for (const auto& [name, lohi] : sd.bound_overrides)
    bounds[name] = json::array({lohi.first, lohi.second});
  // A ready-to-train config next to the data; generator features already
  // cover the unit box, so no re-scaling.
  write_json_file(run.out / "runconfig.json", json{{"dataset", "data.csv"},
                                                   {"schema_file", "schema.json"},
                                                   {"constraints", "constraints.sexp"},
                                                   {"scale", false},
                                                   {"bounds", bounds},
                                                   {"seed", run.seed},
                                                   {"train", json::object()}});
  write_json_file(run.out / "synth_report.json",
                  json{{"generator", spec.name},
                       {"n", spec.n},
                       {"violation_rate", spec.violation_rate},
                       {"seed", run.seed},
                       {"violator_ids", sd.violator_ids}});
  std::cout << "wrote " << spec.n << " rows (" << sd.violator_ids.size()
            << " constraint-violating) to " << (run.out / "data.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training linear models that provably satisfy domain constraints"};
  app.require_subcommand(1);

  Flags flags;
  auto add_common = [&flags](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON run configuration")->required();
    sub->add_option("--out", flags.out, "output directory (overrides config)");
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&flags](std::uint64_t v) {
          flags.seed = v;
          flags.has_seed = true;
        },
        "seed override");
    sub->add_option("--jobs", flags.jobs, "worker threads for parallel sections");
    sub->add_option("--solver", flags.solver, "solver command override (whitespace-split)");
  };

  CLI::App* train = app.add_subcommand(
      "train", "batched constraint-satisfying training plus an admissibility certificate");
  CLI::App* exact = app.add_subcommand(
      "exact-train", "single whole-dataset MaxSMT solve (small datasets only)");
  CLI::App* verify = app.add_subcommand("verify", "prove or refute a stored model's admissibility");
  CLI::App* adi =
      app.add_subcommand("adi", "adversity index: counterexample search around each instance");
  CLI::App* eval = app.add_subcommand("eval", "metrics on the admissible test subset");
  CLI::App* cv = app.add_subcommand("cv", "k-fold hyperparameter grid search");
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset + constraints");
  for (CLI::App* sub : {train, exact, verify, adi, eval, cv, synth}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  Run run;
  try {
    run = make_run(flags);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(train)) return cmd_train(run);
    if (app.got_subcommand(exact)) return cmd_exact_train(run);
    if (app.got_subcommand(verify)) return cmd_verify(run);
    if (app.got_subcommand(adi)) return cmd_adi(run);
    if (app.got_subcommand(eval)) return cmd_eval(run);
    if (app.got_subcommand(cv)) return cmd_cv(run);
    if (app.got_subcommand(synth)) return cmd_synth(run);
  } catch (const std::exception& e) {
    json err{{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    try {
      write_json_file(run.out / "error.json", err);
    } catch (...) {
      // The error JSON on stderr is the contract; a read-only out dir
      // must not mask the original failure.
    }
    return 1;
  }
  return 2;  // unreachable: require_subcommand(1)
}
