#pragma once
#include <nlohmann/json_fwd.hpp>
#include <string>

#include "emx/tensorops.hpp"

namespace emx {

// Dense binary matrix format: magic "EMX1", u64 rows, u64 cols (little-endian),
// then row-major IEEE float64 payload.
void write_emx(const std::string& path, const Matrix& A);
Matrix read_emx(const std::string& path);

// Plain-text CSV interop: one row per line, 17-significant-digit floats.
void write_csv_matrix(const std::string& path, const Matrix& A);
Matrix read_csv_matrix(const std::string& path);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

// Fixed "%.17g" rendering; enough digits for an exact double round trip.
std::string format_g17(double v);

}  // namespace emx
