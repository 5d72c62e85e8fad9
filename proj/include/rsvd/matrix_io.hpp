#ifndef RSVD_MATRIX_IO_HPP
#define RSVD_MATRIX_IO_HPP

// Matrix exchange formats and the model JSON document.
//
//   CSV:    one line per matrix row, '.' decimal separator, no header.
//   Binary: "RSVD" magic, u32 n_rows, u32 n_cols (little endian), then
//           n_rows * n_cols little-endian f64 values in row-major order.

#include "rsvd/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace rsvd::io {

DataMatrix parse_csv(std::istream& in);
DataMatrix read_csv(const std::filesystem::path& path);
std::string format_csv(const DataMatrix& m);
void write_csv(const std::filesystem::path& path, const DataMatrix& m);

DataMatrix decode_binary(std::string_view bytes);
std::string encode_binary(const DataMatrix& m);
DataMatrix read_binary(const std::filesystem::path& path);
void write_binary(const std::filesystem::path& path, const DataMatrix& m);

/// Binary if the file starts with the "RSVD" magic, CSV otherwise.
DataMatrix read_matrix(const std::filesystem::path& path);

nlohmann::ordered_json model_to_json(const RSvdModel<double>& model);
RSvdModel<double> model_from_json(const nlohmann::json& doc);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Pretty-printed JSON with a trailing newline.
std::string dump_json(const nlohmann::ordered_json& doc);

}  // namespace rsvd::io

#endif  // RSVD_MATRIX_IO_HPP
