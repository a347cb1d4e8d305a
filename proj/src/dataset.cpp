#include "depthforensics/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "depthforensics/error.hpp"
#include "depthforensics/rng.hpp"
#include "binary_io.hpp"

namespace dfx::data {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dfx::io;

namespace {

constexpr char kRecordMagic[4] = {'D', 'F', 'X', 'R'};
constexpr char kGtMagic[4] = {'D', 'F', 'X', 'G'};
constexpr std::uint32_t kRecordVersion = 1;
constexpr std::uint32_t kGtVersion = 1;

json generator_json(const synth::GeneratorConfig& g) {
  return {{"image_size", g.image_size},
          {"lambda", g.lambda},
          {"quality", synth::quality_name(g.quality)},
          {"min_fake_fraction", g.min_fake_fraction},
          {"max_fake_fraction", g.max_fake_fraction},
          {"texture_noise", g.texture_noise},
          {"artifact_strength", g.artifact_strength}};
}

synth::GeneratorConfig generator_from_json(const json& j) {
  synth::GeneratorConfig g;
  g.image_size = j.at("image_size").get<int>();
  g.lambda = j.at("lambda").get<int>();
  g.quality = synth::parse_quality(j.at("quality").get<std::string>());
  g.min_fake_fraction = j.at("min_fake_fraction").get<double>();
  g.max_fake_fraction = j.at("max_fake_fraction").get<double>();
  g.texture_noise = j.at("texture_noise").get<double>();
  g.artifact_strength = j.at("artifact_strength").get<double>();
  return g;
}

}  // namespace

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw Error(ErrorCode::InvalidArgument, "unknown split '" + name + "' (expected train, val or test)");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

void DatasetSpec::validate() const {
  require(count >= 1, "dataset: count must be positive");
  require(fake_ratio >= 0.0 && fake_ratio <= 1.0, "dataset: fake ratio must lie in [0, 1]");
  require(train_fraction >= 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0,
          "dataset: split fractions must be non-negative and sum to at most 1");
  generator.validate();
}

int DatasetManifest::count(Split s) const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(), [s](const auto& e) { return e.split == s; }));
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (manifest.entries[i].split == s) out.push_back(i);
  return out;
}

std::uint64_t sample_seed(std::uint64_t global_seed, std::uint32_t id) { return mix_seed(global_seed, id); }

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::uint32_t>(spec.count);
  std::vector<std::uint32_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0u);

  // Exactly round(n * ratio) fakes, placed by a seeded shuffle.
  auto shuffle = [](std::vector<std::uint32_t>& v, Rng rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(0, static_cast<int>(i) - 1)]);
  };
  Rng root(spec.seed);
  std::vector<std::uint32_t> perm = ids;
  shuffle(perm, root.fork(0x1ABE1));
  const auto n_fake = static_cast<std::size_t>(std::llround(spec.fake_ratio * n));
  std::vector<synth::Label> labels(n, synth::Label::Real);
  for (std::size_t i = 0; i < n_fake; ++i) labels[perm[i]] = synth::Label::Fake;

  // Stratified split: each class is divided by the same fractions.
  std::vector<Split> splits(n, Split::Test);
  for (auto cls : {synth::Label::Real, synth::Label::Fake}) {
    std::vector<std::uint32_t> members;
    for (auto id : ids)
      if (labels[id] == cls) members.push_back(id);
    shuffle(members, root.fork(0x5B117 + static_cast<int>(cls)));
    const auto m = members.size();
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * m));
    const auto n_val = std::min(m - n_train, static_cast<std::size_t>(std::llround(spec.val_fraction * m)));
    for (std::size_t i = 0; i < m; ++i)
      splits[members[i]] = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
  }

  Dataset ds;
  ds.manifest.spec = spec;
  ds.records.reserve(n);
  for (auto id : ids) {
    const auto seed = sample_seed(spec.seed, id);
    auto r = labels[id] == synth::Label::Fake ? synth::generate_fake_sample(seed, spec.generator)
                                              : synth::generate_real_sample(seed, spec.generator);
    r.id = id;
    ManifestEntry e;
    e.id = id;
    e.split = splits[id];
    e.label = r.label;
    e.crc32 = crc_of(encode_record(r));
    ds.manifest.entries.push_back(e);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

std::vector<std::uint8_t> encode_record(const synth::SampleRecord& r) {
  const std::size_t px = static_cast<std::size_t>(r.image.height) * r.image.width;
  require(r.image.data.size() == px * synth::Image::kChannels && r.mask.size() == px && r.depth.size() == px &&
              r.ground_truth.size() == px,
          "encode_record: inconsistent record dimensions");
  Writer w;
  w.bytes(kRecordMagic, 4);
  w.put<std::uint32_t>(kRecordVersion);
  w.put<std::uint32_t>(r.id);
  w.put<std::uint64_t>(r.seed);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(r.label));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(r.quality));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(r.lambda));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(r.image.height));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(r.image.width));
  w.bytes(r.image.data.data(), r.image.data.size() * sizeof(float));
  w.bytes(r.mask.values.data(), px);
  w.bytes(r.depth.values.data(), px);
  w.bytes(r.ground_truth.values.data(), px);
  return std::move(w.buffer());
}

synth::SampleRecord decode_record(const std::vector<std::uint8_t>& bytes) {
  Reader rd(bytes);
  char magic[4];
  rd.bytes(magic, 4);
  if (std::memcmp(magic, kRecordMagic, 4) != 0) throw Error(ErrorCode::Format, "record: bad magic");
  const auto version = rd.get<std::uint32_t>();
  if (version != kRecordVersion)
    throw Error(ErrorCode::Format, "record: version mismatch (" + std::to_string(version) + ")");
  synth::SampleRecord r;
  r.id = rd.get<std::uint32_t>();
  r.seed = rd.get<std::uint64_t>();
  const auto label = rd.get<std::uint8_t>();
  const auto quality = rd.get<std::uint8_t>();
  if (label > 1 || quality > 1) throw Error(ErrorCode::Format, "record: invalid label or quality");
  r.label = static_cast<synth::Label>(label);
  r.quality = static_cast<synth::Quality>(quality);
  r.lambda = rd.get<std::uint16_t>();
  const auto h = rd.get<std::uint32_t>(), w = rd.get<std::uint32_t>();
  if (h == 0 || w == 0 || h > 4096 || w > 4096) throw Error(ErrorCode::Format, "record: implausible dimensions");
  const std::size_t px = static_cast<std::size_t>(h) * w;
  r.image.height = static_cast<int>(h);
  r.image.width = static_cast<int>(w);
  r.image.data.resize(px * synth::Image::kChannels);
  rd.bytes(r.image.data.data(), r.image.data.size() * sizeof(float));
  for (auto* g : {static_cast<gt::Grid<std::uint8_t>*>(&r.mask), static_cast<gt::Grid<std::uint8_t>*>(&r.depth),
                  static_cast<gt::Grid<std::uint8_t>*>(&r.ground_truth)}) {
    g->height = static_cast<int>(h);
    g->width = static_cast<int>(w);
    g->values.resize(px);
    rd.bytes(g->values.data(), px);
  }
  if (!rd.done()) throw Error(ErrorCode::Format, "record: trailing bytes");
  return r;
}

fs::path record_path(const fs::path& root, const ManifestEntry& e) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06u.rec", e.id);
  return root / split_name(e.split) / name;
}

void write_dataset(const Dataset& ds, const fs::path& root) {
  require(ds.records.size() == ds.manifest.entries.size(), "write_dataset: manifest and records disagree");
  std::error_code ec;
  for (auto s : {Split::Train, Split::Val, Split::Test}) {
    fs::create_directories(root / split_name(s), ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create '" + (root / split_name(s)).string() + "': " + ec.message());
  }
  json records = json::array();
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& e = ds.manifest.entries[i];
    require(ds.records[i].id == e.id, "write_dataset: record order does not match the manifest");
    const auto bytes = encode_record(ds.records[i]);
    const auto crc = crc_of(bytes);
    require(crc == e.crc32, "write_dataset: record " + std::to_string(e.id) + " does not match its manifest checksum");
    write_file(record_path(root, e), bytes.data(), bytes.size());
    records.push_back({{"id", e.id},
                       {"split", split_name(e.split)},
                       {"label", e.label == synth::Label::Fake ? "fake" : "real"},
                       {"file", record_path(fs::path(), e).string()},
                       {"crc32", crc}});
  }
  const auto& sp = ds.manifest.spec;
  json m = {{"format_version", ds.manifest.format_version},
            {"generator_version", ds.manifest.generator_version},
            {"global_seed", sp.seed},
            {"count", sp.count},
            {"fake_ratio", sp.fake_ratio},
            {"train_fraction", sp.train_fraction},
            {"val_fraction", sp.val_fraction},
            {"generator", generator_json(sp.generator)},
            {"splits",
             {{"train", ds.manifest.count(Split::Train)},
              {"val", ds.manifest.count(Split::Val)},
              {"test", ds.manifest.count(Split::Test)}}},
            {"records", records}};
  const std::string text = m.dump(1);
  write_file(root / "manifest.json", text.data(), text.size());
}

Dataset read_dataset(const fs::path& root) {
  const auto raw = read_file(root / "manifest.json");
  json m;
  try {
    m = json::parse(raw.begin(), raw.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("manifest: ") + e.what());
  }
  Dataset ds;
  try {
    ds.manifest.format_version = m.at("format_version").get<int>();
    if (ds.manifest.format_version != kFormatVersion)
      throw Error(ErrorCode::Format, "manifest: format version mismatch (" +
                                         std::to_string(ds.manifest.format_version) + " != " +
                                         std::to_string(kFormatVersion) + ")");
    ds.manifest.generator_version = m.at("generator_version").get<std::string>();
    auto& sp = ds.manifest.spec;
    sp.seed = m.at("global_seed").get<std::uint64_t>();
    sp.count = m.at("count").get<int>();
    sp.fake_ratio = m.at("fake_ratio").get<double>();
    sp.train_fraction = m.at("train_fraction").get<double>();
    sp.val_fraction = m.at("val_fraction").get<double>();
    sp.generator = generator_from_json(m.at("generator"));
    for (const auto& jr : m.at("records")) {
      ManifestEntry e;
      e.id = jr.at("id").get<std::uint32_t>();
      e.split = parse_split(jr.at("split").get<std::string>());
      e.label = jr.at("label").get<std::string>() == "fake" ? synth::Label::Fake : synth::Label::Real;
      e.crc32 = jr.at("crc32").get<std::uint32_t>();
      ds.manifest.entries.push_back(e);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("manifest: ") + e.what());
  }
  if (static_cast<int>(ds.manifest.entries.size()) != ds.manifest.spec.count)
    throw Error(ErrorCode::Format, "manifest: record count does not match the declared count");

  for (std::size_t i = 0; i < ds.manifest.entries.size(); ++i) {
    const auto& e = ds.manifest.entries[i];
    if (e.id != i) throw Error(ErrorCode::Format, "manifest: record ids must be dense and ordered");
    const auto bytes = read_file(record_path(root, e));
    if (crc_of(bytes) != e.crc32)
      throw Error(ErrorCode::Format, "record " + std::to_string(e.id) + ": checksum mismatch");
    auto r = decode_record(bytes);
    if (r.id != e.id || r.label != e.label)
      throw Error(ErrorCode::Format, "record " + std::to_string(e.id) + ": header disagrees with the manifest");
    ds.records.push_back(std::move(r));
  }
  return ds;
}

// ---- ground-truth files ----------------------------------------------------

std::vector<GroundTruthRecord> make_ground_truth(const Dataset& ds, Split split, int lambda, int patches_per_side) {
  std::vector<GroundTruthRecord> out;
  for (auto i : ds.indices(split)) {
    const auto& r = ds.records[i];
    const gt::PatchGrid grid(r.image.height, r.image.width, patches_per_side);
    const auto v = gt::normalize_patch_depth(gt::patch_average(gt::compose_gt_depth(r.depth, r.mask, lambda), grid));
    GroundTruthRecord g;
    g.id = r.id;
    g.lambda = lambda;
    g.rows = g.cols = patches_per_side;
    g.values.assign(v.values.begin(), v.values.end());
    out.push_back(std::move(g));
  }
  return out;
}

void write_ground_truth_file(const fs::path& file, const std::vector<GroundTruthRecord>& records) {
  Writer w;
  w.bytes(kGtMagic, 4);
  w.put<std::uint32_t>(kGtVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& g : records) {
    require(g.values.size() == static_cast<std::size_t>(g.rows) * g.cols, "ground truth: value count mismatch");
    w.put<std::uint32_t>(g.id);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(g.lambda));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(g.rows));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(g.cols));
    w.bytes(g.values.data(), g.values.size() * sizeof(float));
  }
  write_file(file, w.buffer().data(), w.buffer().size());
}

std::vector<GroundTruthRecord> read_ground_truth_file(const fs::path& file) {
  const auto bytes = read_file(file);
  Reader rd(bytes);
  char magic[4];
  rd.bytes(magic, 4);
  if (std::memcmp(magic, kGtMagic, 4) != 0) throw Error(ErrorCode::Format, "ground truth: bad magic");
  if (rd.get<std::uint32_t>() != kGtVersion) throw Error(ErrorCode::Format, "ground truth: version mismatch");
  const auto n = rd.get<std::uint32_t>();
  std::vector<GroundTruthRecord> out(n);
  for (auto& g : out) {
    g.id = rd.get<std::uint32_t>();
    g.lambda = rd.get<std::uint16_t>();
    g.rows = rd.get<std::uint16_t>();
    g.cols = rd.get<std::uint16_t>();
    g.values.resize(static_cast<std::size_t>(g.rows) * g.cols);
    rd.bytes(g.values.data(), g.values.size() * sizeof(float));
  }
  if (!rd.done()) throw Error(ErrorCode::Format, "ground truth: trailing bytes");
  return out;
}

void write_ground_truth(const Dataset& ds, const fs::path& out_dir, int lambda, int patches_per_side) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + out_dir.string() + "': " + ec.message());
  json files = json::object();
  for (auto s : {Split::Train, Split::Val, Split::Test}) {
    const auto recs = make_ground_truth(ds, s, lambda, patches_per_side);
    const std::string name = std::string(split_name(s)) + ".gtb";
    write_ground_truth_file(out_dir / name, recs);
    files[split_name(s)] = {{"file", name}, {"records", recs.size()}};
  }
  json side = {{"format_version", kGtVersion},
               {"oracle", "synthetic_dome"},
               {"generator_version", ds.manifest.generator_version},
               {"seed", ds.manifest.spec.seed},
               {"lambda", lambda},
               {"patches_per_side", patches_per_side},
               {"image_size", ds.manifest.spec.generator.image_size},
               {"normalized", true},
               {"files", files}};
  const std::string text = side.dump(2);
  write_file(out_dir / "ground_truth.json", text.data(), text.size());
}

}  // namespace dfx::data
