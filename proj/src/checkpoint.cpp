#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "hqnn/models.hpp"

namespace hqnn::models {

namespace {

constexpr char kMagic[] = "BFQCKPT";
constexpr std::uint16_t kVersion = 1;

std::uint32_t crc_of(const void* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, static_cast<const Bytef*>(data), static_cast<uInt>(n));
  return static_cast<std::uint32_t>(crc);
}

std::string encode_payload(const std::vector<double>& values) {
  std::ostringstream os;
  for (double v : values) binio::put_f64(os, v);
  return os.str();
}

struct Entry {
  std::string name;
  std::vector<int> shape;
  const std::vector<double>* values;
  bool frozen;
};

std::vector<Entry> entries(const Model& model) {
  std::vector<Entry> out;
  for (const nn::Param* p : model.parameters()) out.push_back({p->name, p->value.shape, &p->value.data, p->frozen});
  const auto& bn = model.batchnorm();
  const int c = bn.channels;
  out.push_back({"bn.running_mean", {c}, &bn.running_mean, model.config().kind == ModelKind::hybrid_qnn_transfer});
  out.push_back({"bn.running_var", {c}, &bn.running_var, model.config().kind == ModelKind::hybrid_qnn_transfer});
  return out;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::string payload;
  nlohmann::json dir = nlohmann::json::array();
  for (const Entry& e : entries(model)) {
    const std::string bytes = encode_payload(*e.values);
    dir.push_back({{"name", e.name},
                   {"shape", e.shape},
                   {"offset", payload.size()},
                   {"frozen", e.frozen},
                   {"crc32", crc_of(bytes.data(), bytes.size())}});
    payload += bytes;
  }
  nlohmann::json header{{"config", model.config().to_json()},
                        {"seed", model.seed()},
                        {"metadata", model.metadata.is_null() ? nlohmann::json::object() : model.metadata},
                        {"tensors", dir}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write '" + path.string() + "'");
  os.write(kMagic, sizeof kMagic - 1);
  binio::put_le<std::uint16_t>(os, kVersion);
  binio::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  binio::put_le<std::uint32_t>(os, crc_of(text.data(), text.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw CheckpointError("write failed for '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json header;
  std::string payload;
  try {
    binio::expect_magic(is, kMagic);
    const auto version = binio::get_le<std::uint16_t>(is);
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto len = binio::get_le<std::uint32_t>(is);
    std::string text(len, '\0');
    is.read(text.data(), len);
    if (!is) throw CheckpointError("truncated checkpoint header");
    if (binio::get_le<std::uint32_t>(is) != crc_of(text.data(), text.size())) {
      throw CheckpointError("checkpoint header checksum mismatch");
    }
    header = nlohmann::json::parse(text);
    payload.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  } catch (const binio::FormatError& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Model model(ModelConfig::from_json(header.at("config")), header.at("seed").get<std::uint64_t>(), Model::NoInit{});
  model.metadata = header.value("metadata", nlohmann::json::object());

  std::vector<std::pair<std::string, std::vector<double>*>> targets;
  std::vector<std::pair<std::string, bool*>> frozen_flags;
  for (nn::Param* p : model.parameters()) {
    targets.emplace_back(p->name, &p->value.data);
    frozen_flags.emplace_back(p->name, &p->frozen);
  }
  targets.emplace_back("bn.running_mean", &model.bn_.running_mean);
  targets.emplace_back("bn.running_var", &model.bn_.running_var);

  std::size_t seen = 0;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    auto it = std::find_if(targets.begin(), targets.end(), [&](const auto& x) { return x.first == name; });
    if (it == targets.end()) throw CheckpointError("checkpoint tensor '" + name + "' does not belong to this model");
    std::vector<double>& dst = *it->second;
    const auto shape = t.at("shape").get<std::vector<int>>();
    if (nn::shape_product(shape) != dst.size()) {
      throw CheckpointError("checkpoint tensor '" + name + "' has the wrong size");
    }
    const auto offset = t.at("offset").get<std::size_t>();
    const std::size_t nbytes = dst.size() * 8;
    if (offset + nbytes > payload.size()) throw CheckpointError("checkpoint tensor '" + name + "' is truncated");
    if (crc_of(payload.data() + offset, nbytes) != t.at("crc32").get<std::uint32_t>()) {
      throw CheckpointError("checksum mismatch for tensor '" + name + "'");
    }
    std::istringstream bytes(payload.substr(offset, nbytes));
    for (double& v : dst) v = binio::get_f64(bytes);
    for (auto& [fname, flag] : frozen_flags)
      if (fname == name) *flag = t.value("frozen", false);
    ++seen;
  }
  if (seen != targets.size()) throw CheckpointError("checkpoint is missing tensors");
  return model;
}

}  // namespace hqnn::models
