#include "mine/core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>

#include "mine/core/error.hpp"
#include "mine/core/hash.hpp"

namespace mine {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IntegrityError("checkpoint: missing " + (dir / "manifest.json").string());
  try {
    json m = json::parse(in);
    if (m.value("format_version", 0) != kCheckpointFormatVersion)
      throw IntegrityError("checkpoint: unsupported format_version");
    return m;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint: bad manifest: ") + e.what());
  }
}

// Alias groups in first-appearance order: each group lists every name bound
// to one storage.
std::vector<std::vector<const Parameter*>> alias_groups(std::span<const Parameter> params) {
  std::vector<std::vector<const Parameter*>> groups;
  std::unordered_map<const detail::Node*, std::size_t> index;
  for (const auto& p : params) {
    auto [it, fresh] = index.emplace(p.tensor.id(), groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(&p);
  }
  return groups;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, std::span<const Parameter> params,
                     const nlohmann::json& model_config) {
  std::filesystem::create_directories(dir);
  json tensors = json::array();
  json shared = json::array();
  std::string blob;
  for (const auto& group : alias_groups(params)) {
    const Parameter& owner = *group.front();
    const Array& v = owner.tensor.value();
    const std::size_t offset = blob.size();
    for (double x : v.data()) {
      const float f = static_cast<float>(x);
      char bytes[4];
      std::memcpy(bytes, &f, 4);
      blob.append(bytes, 4);
    }
    tensors.push_back({{"name", owner.name},
                       {"shape", v.shape()},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"byte_len", blob.size() - offset}});
    if (group.size() > 1) {
      json names = json::array();
      for (const auto* p : group) names.push_back(p->name);
      shared.push_back(names);
    }
  }
  json manifest = {{"format_version", kCheckpointFormatVersion},
                   {"tensors", tensors},
                   {"shared", shared},
                   {"model_config", model_config},
                   {"weights_sha256", sha256_hex(blob)},
                   {"weights_bytes", blob.size()}};
  std::ofstream(dir / "weights.bin", std::ios::binary).write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
}

nlohmann::json read_checkpoint_config(const std::filesystem::path& dir) {
  const json m = read_manifest(dir);
  if (!m.contains("model_config")) throw IntegrityError("checkpoint: manifest lacks model_config");
  return m.at("model_config");
}

void load_checkpoint_values(const std::filesystem::path& dir, std::span<const Parameter> params) {
  const json m = read_manifest(dir);
  std::ifstream in(dir / "weights.bin", std::ios::binary);
  if (!in) throw IntegrityError("checkpoint: missing weights.bin");
  const std::string blob{std::istreambuf_iterator<char>(in), {}};
  if (m.contains("weights_bytes") && m.at("weights_bytes").get<std::size_t>() != blob.size())
    throw IntegrityError("checkpoint: weights.bin is " + std::to_string(blob.size()) + " bytes, manifest says " +
                         std::to_string(m.at("weights_bytes").get<std::size_t>()));

  std::map<std::string, const Parameter*> by_name;
  for (const auto& p : params) by_name[p.name] = &p;

  // Declared sharing must equal the model's sharing.
  std::map<std::string, std::string> owner_of;  // alias -> owner name
  for (const auto& group : m.at("shared")) {
    const std::string owner = group.at(0).get<std::string>();
    for (const auto& n : group) owner_of[n.get<std::string>()] = owner;
  }
  for (const auto& group : alias_groups(params)) {
    const std::string& owner = group.front()->name;
    for (const auto* p : group) {
      const auto it = owner_of.find(p->name);
      const bool declared_shared = it != owner_of.end();
      if (group.size() > 1 && (!declared_shared || it->second != owner))
        throw IntegrityError("checkpoint: tensor '" + p->name + "' should alias '" + owner + "'");
      if (group.size() == 1 && declared_shared)
        throw IntegrityError("checkpoint: tensor '" + p->name + "' is shared in the checkpoint but not in the model");
    }
  }

  std::unordered_map<const detail::Node*, bool> filled;
  std::size_t end_of_data = 0;
  for (const auto& t : m.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw IntegrityError("checkpoint: unknown tensor '" + name + "'");
    if (t.at("dtype") != "f32") throw IntegrityError("checkpoint: tensor '" + name + "' has unsupported dtype");
    Tensor tensor = it->second->tensor;
    if (!filled.emplace(tensor.id(), true).second)
      throw IntegrityError("checkpoint: tensor '" + name + "' stored twice");
    const Shape shape = t.at("shape").get<Shape>();
    if (shape != tensor.shape())
      throw IntegrityError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                           shape_str(tensor.shape()));
    const std::size_t offset = t.at("offset").get<std::size_t>();
    const std::size_t len = t.at("byte_len").get<std::size_t>();
    if (len != shape_size(shape) * 4 || offset + len > blob.size())
      throw IntegrityError("checkpoint: blob for tensor '" + name + "' is out of bounds or mis-sized");
    Array& v = tensor.mutable_value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      float f;
      std::memcpy(&f, blob.data() + offset + 4 * i, 4);
      v[i] = static_cast<double>(f);
    }
    end_of_data = std::max(end_of_data, offset + len);
  }
  if (end_of_data != blob.size())
    throw IntegrityError("checkpoint: weights.bin has " + std::to_string(blob.size() - end_of_data) +
                         " trailing bytes");
  for (const auto& p : params)
    if (!filled.count(p.tensor.id())) throw IntegrityError("checkpoint: tensor '" + p.name + "' missing");
  if (m.contains("weights_sha256") && m.at("weights_sha256").get<std::string>() != sha256_hex(blob))
    throw IntegrityError("checkpoint: weights.bin digest does not match manifest");
}

}  // namespace mine
