#pragma once
// Self-describing checkpoint documents. Doubles are written with 17
// significant digits, so save -> load reproduces every parameter bit for bit.

#include <filesystem>

#include <json.hpp>

#include "tailflow/model/flow_model.hpp"

namespace tailflow::model {

inline constexpr int kCheckpointVersion = 1;

nlohmann::json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const FlowModel& model);
/// Throws schema_mismatch on a wrong schema name, version, or missing field.
FlowModel checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const FlowModel& model, const std::filesystem::path& path);
FlowModel load_checkpoint(const std::filesystem::path& path);

/// Reads and parses a JSON document; io_error / parse_error on failure.
nlohmann::json read_json(const std::filesystem::path& path);
/// Writes atomically via a temporary sibling file.
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace tailflow::model
