#pragma once

#include <cstdint>
#include <string>

#include "gkt/model.hpp"
#include "gkt/pde_data.hpp"
#include "gkt/trainer.hpp"

#include <json.hpp>

namespace gkt {

// ---- GKTD dataset file ------------------------------------------------------
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

// ---- GKTM model checkpoint --------------------------------------------------
void write_checkpoint(const std::string& path, const OperatorModel& model);
OperatorModel load_checkpoint(const std::string& path);

// ---- hashing / manifests ----------------------------------------------------
std::uint64_t fnv1a_file(const std::string& path);
std::string content_hash_hex(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// ---- JSON codecs -------------------------------------------------------------
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const RunReport& r, bool include_timing);
std::string run_report_csv(const RunReport& r);

}  // namespace gkt
