#pragma once

// File formats: the "c2m3-mlp/v1" model bundle, the permutation encoding and
// the CSV dataset format. All JSON numbers round-trip bit-exactly.

#include "c2m3/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace c2m3 {

using json = nlohmann::json;

inline constexpr std::string_view kModelFormat = "c2m3-mlp/v1";
inline constexpr std::string_view kPermsFormat = "c2m3-perms/v1";

// A non-null `provenance` is stored alongside the parameters.
json model_to_json(const MlpParams& m, const json& provenance = nullptr);
// Throws kParse for malformed documents or an unknown format tag and
// kShapeMismatch when "dims" disagrees with the matrices.
MlpParams model_from_json(const json& doc);

std::string serialize(const MlpParams& m, const json& provenance = nullptr);
MlpParams deserialize(std::string_view text);

void save_model(const MlpParams& m, const std::filesystem::path& path,
                const json& provenance = nullptr);
MlpParams load_model(const std::filesystem::path& path);

// {"n": N, "map": [...]}
json permutation_to_json(const Permutation& p);
Permutation permutation_from_json(const json& doc);

// Header row, numeric feature columns, one integer label column.
Dataset load_csv_dataset(const std::filesystem::path& path,
                         const std::string& label_column);
Dataset parse_csv_dataset(std::string_view text, const std::string& label_column,
                          const std::string& name = "csv");
std::string format_csv_dataset(const Dataset& data,
                               const std::string& label_column = "label");
void save_csv_dataset(const Dataset& data, const std::filesystem::path& path,
                      const std::string& label_column = "label");

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace c2m3
