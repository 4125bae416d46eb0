#include "c2m3/io.hpp"

#include "c2m3/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace c2m3 {

namespace {

[[noreturn]] void parse_error(const std::string& what) {
  fail(ErrorCode::kParse, what);
}

const json& require(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) {
    parse_error(std::string("missing field \"") + key + "\"");
  }
  return doc.at(key);
}

double as_double(const json& v, const std::string& where) {
  if (!v.is_number()) parse_error(where + ": expected a number");
  return v.get<double>();
}

}  // namespace

json model_to_json(const MlpParams& m, const json& provenance) {
  m.validate();
  json layers = json::array();
  for (const Layer& layer : m.layers) {
    json w = json::array();
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) row.push_back(layer.weight(r, c));
      w.push_back(std::move(row));
    }
    json b = json::array();
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) b.push_back(layer.bias(r));
    layers.push_back({{"w", std::move(w)}, {"b", std::move(b)}});
  }
  json doc = {{"format", kModelFormat},
              {"dims", m.dims()},
              {"activation", "relu"},
              {"layers", std::move(layers)}};
  if (!provenance.is_null()) doc["provenance"] = provenance;
  return doc;
}

MlpParams model_from_json(const json& doc) {
  const json& format = require(doc, "format");
  if (!format.is_string()) parse_error("\"format\" must be a string");
  if (format.get<std::string>() != kModelFormat) {
    parse_error("unknown model format \"" + format.get<std::string>() + "\"");
  }
  const json& activation = require(doc, "activation");
  if (!activation.is_string() || activation.get<std::string>() != "relu") {
    parse_error("unsupported activation");
  }
  const json& dims_doc = require(doc, "dims");
  if (!dims_doc.is_array() || dims_doc.size() < 2) {
    parse_error("\"dims\" must be an array of at least two integers");
  }
  std::vector<int> dims;
  for (const json& d : dims_doc) {
    if (!d.is_number_integer() || d.get<long long>() < 1) {
      parse_error("\"dims\" entries must be positive integers");
    }
    dims.push_back(d.get<int>());
  }
  const json& layers = require(doc, "layers");
  if (!layers.is_array()) parse_error("\"layers\" must be an array");
  if (layers.size() + 1 != dims.size()) {
    fail(ErrorCode::kShapeMismatch, "\"dims\" lists " + std::to_string(dims.size()) +
                                        " sizes but there are " +
                                        std::to_string(layers.size()) + " layers");
  }
  MlpParams m;
  for (std::size_t h = 0; h < layers.size(); ++h) {
    const std::string where = "layer " + std::to_string(h);
    const json& w = require(layers[h], "w");
    const json& b = require(layers[h], "b");
    if (!w.is_array() || !b.is_array()) parse_error(where + ": w and b must be arrays");
    const int rows = dims[h + 1];
    const int cols = dims[h];
    if (static_cast<int>(w.size()) != rows || static_cast<int>(b.size()) != rows) {
      fail(ErrorCode::kShapeMismatch, where + ": expected " + std::to_string(rows) +
                                          " rows to match dims");
    }
    Layer layer{Matrix(rows, cols), Vector(rows)};
    for (int r = 0; r < rows; ++r) {
      const json& row = w[static_cast<std::size_t>(r)];
      if (!row.is_array()) parse_error(where + ": weight rows must be arrays");
      if (static_cast<int>(row.size()) != cols) {
        fail(ErrorCode::kShapeMismatch, where + ": weight row " + std::to_string(r) +
                                            " has " + std::to_string(row.size()) +
                                            " entries, dims say " + std::to_string(cols));
      }
      for (int c = 0; c < cols; ++c) {
        layer.weight(r, c) = as_double(row[static_cast<std::size_t>(c)], where);
      }
      layer.bias(r) = as_double(b[static_cast<std::size_t>(r)], where);
    }
    m.layers.push_back(std::move(layer));
  }
  m.validate();
  return m;
}

std::string serialize(const MlpParams& m, const json& provenance) {
  return model_to_json(m, provenance).dump();
}

MlpParams deserialize(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    parse_error(std::string("malformed model document: ") + e.what());
  }
  return model_from_json(doc);
}

void save_model(const MlpParams& m, const std::filesystem::path& path, const json& provenance) {
  write_file(path, serialize(m, provenance) + "\n");
}

MlpParams load_model(const std::filesystem::path& path) {
  try {
    return deserialize(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

json permutation_to_json(const Permutation& p) {
  return {{"n", p.size()}, {"map", p.map()}};
}

Permutation permutation_from_json(const json& doc) {
  const json& n = require(doc, "n");
  const json& map = require(doc, "map");
  if (!n.is_number_integer() || !map.is_array()) parse_error("malformed permutation");
  std::vector<int> values;
  for (const json& v : map) {
    if (!v.is_number_integer()) parse_error("permutation map entries must be integers");
    values.push_back(v.get<int>());
  }
  if (static_cast<long long>(values.size()) != n.get<long long>()) {
    parse_error("permutation \"n\" does not match map length");
  }
  return Permutation(std::move(values));
}

namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos
                                                   ? std::string_view::npos
                                                   : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
      cell.remove_suffix(1);
    }
    cells.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_number(std::string_view cell, double& out) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

Dataset parse_csv_dataset(std::string_view text, const std::string& label_column,
                          const std::string& name) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  while (!lines.empty() && split_csv_line(lines.back()) == std::vector<std::string_view>{""}) {
    lines.pop_back();
  }
  if (lines.empty()) parse_error(name + ": empty CSV");

  const std::vector<std::string_view> header = split_csv_line(lines.front());
  int label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) label_idx = static_cast<int>(i);
  }
  if (label_idx < 0) {
    parse_error(name + ": line 1: no label column named \"" + label_column + "\"");
  }
  const int n_features = static_cast<int>(header.size()) - 1;
  if (n_features < 1) parse_error(name + ": no feature columns");

  std::vector<double> values;
  Dataset data;
  data.name = name;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string where = name + ": line " + std::to_string(li + 1);
    const std::vector<std::string_view> cells = split_csv_line(lines[li]);
    if (cells.size() != header.size()) {
      parse_error(where + ": expected " + std::to_string(header.size()) +
                  " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_number(cells[c], v)) {
        parse_error(where + ": non-numeric cell \"" + std::string(cells[c]) +
                    "\" in column \"" + std::string(header[c]) + "\"");
      }
      if (static_cast<int>(c) == label_idx) {
        if (v < 0 || v != std::floor(v) || v > 1e9) {
          parse_error(where + ": label must be a non-negative integer");
        }
        data.labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
  }
  if (data.labels.empty()) parse_error(name + ": CSV has no data rows");
  const auto rows = static_cast<Eigen::Index>(data.labels.size());
  data.features.resize(rows, n_features);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < n_features; ++c) {
      data.features(r, c) = values[static_cast<std::size_t>(r * n_features + c)];
    }
  }
  return data;
}

Dataset load_csv_dataset(const std::filesystem::path& path,
                         const std::string& label_column) {
  return parse_csv_dataset(read_file(path), label_column, path.string());
}

std::string format_csv_dataset(const Dataset& data, const std::string& label_column) {
  std::string out;
  for (int c = 0; c < data.dim(); ++c) out += "x" + std::to_string(c) + ",";
  out += label_column + "\n";
  for (int r = 0; r < data.size(); ++r) {
    for (int c = 0; c < data.dim(); ++c) out += format_double(data.features(r, c)) + ",";
    out += std::to_string(data.labels[static_cast<std::size_t>(r)]) + "\n";
  }
  return out;
}

void save_csv_dataset(const Dataset& data, const std::filesystem::path& path,
                      const std::string& label_column) {
  write_file(path, format_csv_dataset(data, label_column));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) fail(ErrorCode::kNumerical, "cannot format number");
  return std::string(buf, ptr);
}

}  // namespace c2m3
