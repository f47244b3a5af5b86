#include "sade/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace sade {

namespace {

// RFC-4180 reader: quoted fields, "" escapes, embedded newlines, CRLF/LF.
std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& origin) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) {
          throw DataError(origin + ":" + std::to_string(line) + ": stray quote inside field");
        }
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        break;
      default:
        field.push_back(c);
        field_started = true;
        break;
    }
  }
  if (in_quotes) throw DataError(origin + ": unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

double parse_numeric(const std::string& s, const std::string& where) {
  if (s.empty()) throw DataError(where + ": missing value");
  double v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw DataError(where + ": non-numeric value '" + s + "'");
  }
  if (!std::isfinite(v)) throw DataError(where + ": non-finite value '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

std::optional<std::size_t> Dataset::feature_index(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Dataset::target_index(const std::string& name) const {
  for (std::size_t i = 0; i < target_names.size(); ++i) {
    if (target_names[i] == name) return i;
  }
  return std::nullopt;
}

std::map<std::string, std::vector<std::size_t>> Dataset::one_hot_groups() const {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].one_hot) groups[features[i].source_column].push_back(i);
  }
  return groups;
}

std::vector<double> Dataset::inverse_scale(const std::vector<double>& x) const {
  if (!scaled || scaling.empty()) return x;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& s = scaling[i];
    if (features[i].one_hot || s.degenerate) {
      out[i] = features[i].one_hot ? x[i] : s.min;
    } else {
      out[i] = s.min + x[i] * (s.max - s.min);
    }
  }
  return out;
}

Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_csv_text(buf.str(), schema, path);
}

Dataset load_csv_text(const std::string& text, const Schema& schema, const std::string& origin) {
  schema.validate();
  auto rows = parse_csv(text, origin);
  if (rows.empty()) throw DataError(origin + ": empty file (header row required)");

  const auto& header = rows.front();
  if (header.size() != schema.columns.size()) {
    throw DataError(origin + ": header has " + std::to_string(header.size()) +
                    " columns, schema declares " + std::to_string(schema.columns.size()));
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] != schema.columns[i].name) {
      throw DataError(origin + ": column " + std::to_string(i + 1) + " is '" + header[i] +
                      "', schema expects '" + schema.columns[i].name + "'");
    }
  }

  const std::size_t ncols = schema.columns.size();
  // First pass: collect categories per categorical column (sorted via set)
  // and check shape / missing values.
  std::vector<std::set<std::string>> categories(ncols);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != ncols) {
      throw DataError(origin + ": row " + std::to_string(r + 1) + " has " +
                      std::to_string(row.size()) + " fields, expected " + std::to_string(ncols));
    }
    for (std::size_t c = 0; c < ncols; ++c) {
      if (row[c].empty()) {
        throw DataError(origin + ": row " + std::to_string(r + 1) + ", column '" +
                        schema.columns[c].name + "': missing value");
      }
      if (schema.columns[c].kind == ColumnKind::Categorical) categories[c].insert(row[c]);
    }
  }

  Dataset d;
  d.schema = schema;

  // Feature layout: numeric columns in order, categoricals expanded one-hot.
  for (std::size_t c = 0; c < ncols; ++c) {
    const auto& col = schema.columns[c];
    if (col.kind == ColumnKind::Numeric) {
      d.features.push_back({col.name, col.name, false, ""});
    } else if (col.kind == ColumnKind::Categorical) {
      for (const auto& cat : categories[c]) {
        d.features.push_back({col.name + "=" + cat, col.name, true, cat});
      }
    }
  }

  // Target layout.
  auto targets = schema.target_indices();
  std::set<std::string> label_values;
  if (schema.task != TaskKind::MultiTargetRegression) {
    std::size_t tc = targets.front();
    for (std::size_t r = 1; r < rows.size(); ++r) label_values.insert(rows[r][tc]);
  }
  if (schema.task == TaskKind::BinaryClassification) {
    if (label_values.size() != 2) {
      throw DataError(origin + ": binary target needs exactly 2 distinct labels, found " +
                      std::to_string(label_values.size()));
    }
    std::vector<std::string> labels(label_values.begin(), label_values.end());
    // Conventional encodings keep their sign; otherwise sorted order maps
    // first -> -1, second -> +1.
    if (labels[0] == "-1" && labels[1] == "1") {
      d.class_names = {"-1", "1"};
    } else if (labels[0] == "0" && labels[1] == "1") {
      d.class_names = {"0", "1"};
    } else {
      d.class_names = labels;
    }
    d.target_names = {schema.columns[targets.front()].name};
  } else if (schema.task == TaskKind::MulticlassClassification) {
    if (label_values.size() < 2) {
      throw DataError(origin + ": multiclass target needs at least 2 classes");
    }
    d.class_names.assign(label_values.begin(), label_values.end());
    d.target_names = d.class_names;
  } else {
    for (auto t : targets) d.target_names.push_back(schema.columns[t].name);
  }

  // Second pass: encode rows.
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    Instance inst;
    inst.x.reserve(d.features.size());
    for (std::size_t c = 0; c < ncols; ++c) {
      const auto& col = schema.columns[c];
      std::string where = origin + ": row " + std::to_string(r + 1) + ", column '" + col.name + "'";
      if (col.kind == ColumnKind::Numeric) {
        inst.x.push_back(parse_numeric(row[c], where));
      } else if (col.kind == ColumnKind::Categorical) {
        for (const auto& cat : categories[c]) inst.x.push_back(row[c] == cat ? 1.0 : 0.0);
      }
    }
    if (schema.task == TaskKind::BinaryClassification) {
      inst.y.push_back(row[targets.front()] == d.class_names[1] ? 1.0 : -1.0);
    } else if (schema.task == TaskKind::MulticlassClassification) {
      for (const auto& cls : d.class_names) {
        inst.y.push_back(row[targets.front()] == cls ? 1.0 : -1.0);
      }
    } else {
      for (auto t : targets) {
        std::string where =
            origin + ": row " + std::to_string(r + 1) + ", column '" + schema.columns[t].name + "'";
        inst.y.push_back(parse_numeric(row[t], where));
      }
    }
    d.instances.push_back(std::move(inst));
  }

  d.y_max.assign(d.target_names.size(), 0.0);
  for (const auto& inst : d.instances) {
    for (std::size_t k = 0; k < inst.y.size(); ++k) {
      d.y_max[k] = std::max(d.y_max[k], std::abs(inst.y[k]));
    }
  }
  return d;
}

Dataset scale_features(const Dataset& d) {
  if (d.n() == 0) throw DataError("cannot scale an empty dataset");
  if (d.scaled) return d;

  Dataset out = d;
  out.scaling.assign(d.dim(), ScalingInfo{});
  for (std::size_t j = 0; j < d.dim(); ++j) {
    if (d.features[j].one_hot) {
      out.scaling[j] = {0.0, 1.0, false};
      continue;
    }
    double lo = d.instances[0].x[j];
    double hi = lo;
    for (const auto& inst : d.instances) {
      lo = std::min(lo, inst.x[j]);
      hi = std::max(hi, inst.x[j]);
    }
    ScalingInfo s{lo, hi, hi == lo};
    out.scaling[j] = s;
    for (auto& inst : out.instances) {
      inst.x[j] = s.degenerate ? 0.0 : (inst.x[j] - lo) / (hi - lo);
    }
  }
  out.scaled = true;
  out.bounds.clear();  // bounds refer to the previous coordinates
  return out;
}

std::vector<std::pair<double, double>> compute_bounds(
    const Dataset& d, const std::map<std::string, std::pair<double, double>>& overrides) {
  if (d.n() == 0) throw DataError("cannot compute bounds of an empty dataset");
  std::vector<std::pair<double, double>> bounds(d.dim());
  for (std::size_t j = 0; j < d.dim(); ++j) {
    double lo = d.instances[0].x[j];
    double hi = lo;
    for (const auto& inst : d.instances) {
      lo = std::min(lo, inst.x[j]);
      hi = std::max(hi, inst.x[j]);
    }
    bounds[j] = {lo, hi};
  }
  for (const auto& [name, lu] : overrides) {
    auto idx = d.feature_index(name);
    if (!idx) throw DataError("bound override for unknown feature '" + name + "'");
    if (lu.first > lu.second) {
      throw DataError("bound override for '" + name + "' has lower > upper");
    }
    bounds[*idx] = lu;
  }
  return bounds;
}

std::vector<Batch> partition_batches(const Dataset& d, std::size_t b, std::uint64_t seed) {
  if (b == 0) throw DataError("batch size must be >= 1");
  std::vector<std::size_t> ids(d.n());
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < ids.size(); start += b) {
    Batch batch;
    batch.index = batches.size();
    std::size_t end = std::min(start + b, ids.size());
    batch.instance_ids.assign(ids.begin() + start, ids.begin() + end);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace sade
