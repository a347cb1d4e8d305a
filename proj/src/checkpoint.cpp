#include "depthforensics/checkpoint.hpp"

#include <system_error>
#include <unordered_map>

#include "binary_io.hpp"
#include "depthforensics/error.hpp"

namespace dfx {

using nlohmann::json;
using namespace dfx::io;

namespace {
constexpr char kMagic[8] = {'D', 'F', 'X', 'C', 'K', 'P', 'T', '\0'};
}

void save_checkpoint(const fs::path& file, const Detector& model, const TrainConfig& train, const json& meta) {
  const json header = {{"model", model.config().to_json()}, {"train", train.to_json()}, {"meta", meta}};
  const std::string text = header.dump();
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  const auto& params = model.params().all();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.rows));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.cols));
    w.bytes(p.value.data(), p.value.size() * sizeof(double));
  }
  w.put<std::uint32_t>(crc_of(w.buffer()));

  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create '" + file.parent_path().string() + "': " + ec.message());
  }
  // Write beside the target and rename so a failed write never leaves a
  // truncated checkpoint behind.
  fs::path tmp = file;
  tmp += ".tmp";
  write_file(tmp, w.buffer().data(), w.buffer().size());
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& file) {
  auto bytes = read_file(file);
  if (bytes.size() < sizeof kMagic + 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw Error(ErrorCode::Format, "'" + file.string() + "' is not a checkpoint");
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  bytes.resize(bytes.size() - 4);
  if (crc_of(bytes) != stored_crc) throw Error(ErrorCode::Format, "checkpoint checksum mismatch in '" + file.string() + "'");

  Reader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof magic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::Format, "unsupported checkpoint version " + std::to_string(version));
  std::string text(r.get<std::uint32_t>(), '\0');
  r.bytes(text.data(), text.size());

  json header;
  DetectorConfig model_cfg;
  TrainConfig train_cfg;
  try {
    header = json::parse(text);
    model_cfg = DetectorConfig::from_json(header.at("model"));
    train_cfg = TrainConfig::from_json(header.at("train"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck{Detector(model_cfg), train_cfg, header.value("meta", json::object())};

  auto& store = ck.model.params();
  const auto count = r.get<std::uint32_t>();
  if (count != static_cast<std::uint32_t>(store.size()))
    throw Error(ErrorCode::Format, "checkpoint has " + std::to_string(count) + " tensors, model expects " +
                                       std::to_string(store.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.get<std::uint32_t>(), '\0');
    r.bytes(name.data(), name.size());
    const int rows = static_cast<int>(r.get<std::uint32_t>());
    const int cols = static_cast<int>(r.get<std::uint32_t>());
    const int id = store.find(name);
    if (id < 0) throw Error(ErrorCode::Format, "checkpoint tensor '" + name + "' is unknown to the model");
    auto& p = store.at(id);
    if (p.rows != rows || p.cols != cols)
      throw Error(ErrorCode::Format, "checkpoint tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                                         std::to_string(cols));
    r.bytes(p.value.data(), p.value.size() * sizeof(double));
  }
  if (!r.done()) throw Error(ErrorCode::Format, "trailing bytes in checkpoint");
  return ck;
}

}  // namespace dfx
