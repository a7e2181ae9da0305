#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tailflow/ad/tensor.hpp"

namespace tailflow::io {

/// Writes one row per sample with 17 significant digits. `header` adds
/// column names c0..c{D-1}.
void write_matrix_csv(const std::filesystem::path& path, const ad::Tensor& data, bool header = false);

/// Reads a numeric matrix. A first row that fails to parse as numbers is
/// treated as a header. Ragged rows and non-finite values are parse errors.
ad::Tensor read_matrix_csv(const std::filesystem::path& path);

/// Generic table writer with RFC 4180 quoting.
void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);
std::vector<std::vector<std::string>> read_table_csv(const std::filesystem::path& path);

std::string csv_escape(const std::string& field);
std::string format_double(double v);

/// Writes to path.tmp and renames into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace tailflow::io
