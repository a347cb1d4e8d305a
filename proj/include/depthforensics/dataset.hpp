#pragma once

// Synthetic dataset assembly and its on-disk layout:
//
//   <root>/manifest.json          format/generator versions, seed, splits, per-record CRC-32
//   <root>/{train,val,test}/<id>.rec
//
// Record layout (little-endian):
//   "DFXR" u32 version u32 id u64 seed u8 label u8 quality u16 lambda u32 height u32 width
//   f32[h*w*3] image (HWC)  u8[h*w] mask  u8[h*w] oracle depth  u8[h*w] ground truth

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "depthforensics/synth.hpp"

namespace dfx::data {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

Split parse_split(const std::string& name);
const char* split_name(Split s);

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kGeneratorVersion = "dome-v1";

struct DatasetSpec {
  std::uint64_t seed = 0;
  int count = 2000;
  double fake_ratio = 0.5;
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  synth::GeneratorConfig generator;

  void validate() const;
};

struct ManifestEntry {
  std::uint32_t id = 0;
  Split split = Split::Train;
  synth::Label label = synth::Label::Real;
  std::uint32_t crc32 = 0;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  int format_version = kFormatVersion;
  std::string generator_version = kGeneratorVersion;
  DatasetSpec spec;
  std::vector<ManifestEntry> entries;

  int count(Split s) const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<synth::SampleRecord> records;  // records[i].id == i

  std::vector<std::size_t> indices(Split s) const;
};

std::uint64_t sample_seed(std::uint64_t global_seed, std::uint32_t id);

Dataset generate_dataset(const DatasetSpec& spec);

std::vector<std::uint8_t> encode_record(const synth::SampleRecord& r);
synth::SampleRecord decode_record(const std::vector<std::uint8_t>& bytes);

void write_dataset(const Dataset& ds, const std::filesystem::path& root);
Dataset read_dataset(const std::filesystem::path& root);

std::filesystem::path record_path(const std::filesystem::path& root, const ManifestEntry& e);

// ---- per-patch ground-truth files ---------------------------------------
//
//   <out>/<split>.gtb : "DFXG" u32 version u32 count, then per record
//                       u32 id u16 lambda u16 rows u16 cols f32[rows*cols] (normalized)
//   <out>/ground_truth.json : provenance sidecar

struct GroundTruthRecord {
  std::uint32_t id = 0;
  int lambda = 0;
  int rows = 0;
  int cols = 0;
  std::vector<float> values;
  bool operator==(const GroundTruthRecord&) const = default;
};

std::vector<GroundTruthRecord> make_ground_truth(const Dataset& ds, Split split, int lambda, int patches_per_side);
void write_ground_truth_file(const std::filesystem::path& file, const std::vector<GroundTruthRecord>& records);
std::vector<GroundTruthRecord> read_ground_truth_file(const std::filesystem::path& file);
// Writes one file per split plus the JSON sidecar.
void write_ground_truth(const Dataset& ds, const std::filesystem::path& out_dir, int lambda, int patches_per_side);

}  // namespace dfx::data
