#pragma once

// Checkpoint archive (little-endian):
//
//   "DFXCKPT\0" u32 version u32 header_len  header JSON
//   u32 tensor_count, per tensor: u32 name_len name u32 rows u32 cols f64[rows*cols]
//   u32 crc32 of every preceding byte
//
// The header holds the model config under "model", the training config under
// "train" and free-form metadata under "meta".

#include <filesystem>

#include <json.hpp>

#include "depthforensics/detector.hpp"
#include "depthforensics/trainer.hpp"

namespace dfx {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Detector model;
  TrainConfig train;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& file, const Detector& model, const TrainConfig& train,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace dfx
