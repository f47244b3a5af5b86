#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace sade {

enum class ColumnKind { Numeric, Categorical, Target };

enum class TaskKind { BinaryClassification, MulticlassClassification, MultiTargetRegression };

std::string to_string(TaskKind task);
TaskKind task_from_string(const std::string& s);

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
};

// Declares the columns of a CSV file and the learning task. Targets:
// binary classification and multiclass take exactly one target column
// (multiclass targets are categorical); regression takes one or more
// numeric target columns.
struct Schema {
  std::vector<Column> columns;
  TaskKind task = TaskKind::BinaryClassification;

  // Throws SchemaError on: no target column, duplicate names, or a
  // target arrangement incompatible with the task.
  void validate() const;

  std::vector<std::size_t> target_indices() const;

  static Schema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

}  // namespace sade
