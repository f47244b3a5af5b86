#include "sade/schema.hpp"

#include <set>

namespace sade {

std::string to_string(TaskKind task) {
  switch (task) {
    case TaskKind::BinaryClassification: return "binary-classification";
    case TaskKind::MulticlassClassification: return "multiclass-classification";
    case TaskKind::MultiTargetRegression: return "multi-target-regression";
  }
  return "?";
}

TaskKind task_from_string(const std::string& s) {
  if (s == "binary-classification") return TaskKind::BinaryClassification;
  if (s == "multiclass-classification") return TaskKind::MulticlassClassification;
  if (s == "multi-target-regression") return TaskKind::MultiTargetRegression;
  throw SchemaError("unknown task kind: '" + s + "'");
}

void Schema::validate() const {
  std::set<std::string> seen;
  for (const auto& c : columns) {
    if (c.name.empty()) throw SchemaError("empty column name");
    if (!seen.insert(c.name).second) throw SchemaError("duplicate column name: '" + c.name + "'");
  }
  auto targets = target_indices();
  if (targets.empty()) throw SchemaError("schema needs at least one target column");
  if (task != TaskKind::MultiTargetRegression && targets.size() != 1) {
    throw SchemaError("classification tasks take exactly one target column");
  }
}

std::vector<std::size_t> Schema::target_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].kind == ColumnKind::Target) out.push_back(i);
  }
  return out;
}

Schema Schema::from_json(const nlohmann::json& j) {
  Schema s;
  s.task = task_from_string(j.at("task").get<std::string>());
  for (const auto& cj : j.at("columns")) {
    Column c;
    c.name = cj.at("name").get<std::string>();
    std::string kind = cj.at("kind").get<std::string>();
    if (kind == "numeric") c.kind = ColumnKind::Numeric;
    else if (kind == "categorical") c.kind = ColumnKind::Categorical;
    else if (kind == "target") c.kind = ColumnKind::Target;
    else throw SchemaError("unknown column kind: '" + kind + "'");
    s.columns.push_back(std::move(c));
  }
  s.validate();
  return s;
}

nlohmann::json Schema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    const char* kind = c.kind == ColumnKind::Numeric      ? "numeric"
                       : c.kind == ColumnKind::Categorical ? "categorical"
                                                           : "target";
    cols.push_back({{"name", c.name}, {"kind", kind}});
  }
  return {{"task", to_string(task)}, {"columns", cols}};
}

}  // namespace sade
