#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "lmfap/embedder.hpp"
#include "lmfap/error.hpp"

namespace lmfap {

// Layout (all integers little-endian):
//   "LMFAPCKP" | u32 version | u64 meta_len | meta JSON |
//   u32 count | count x { u32 name_len | name | u32 ndim | u64 dims[ndim] | f32 data[] }

inline constexpr char kCheckpointMagic[8] = {'L', 'M', 'F', 'A', 'P', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void put_le(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(std::uint64_t(v) >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw CorruptCheckpoint("truncated checkpoint");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return static_cast<U>(v);
}

inline nlohmann::json provenance_json(const Provenance& p) {
  return {{"kind", p.robust() ? "robust" : "standard"}, {"radius", p.radius}, {"epochs", p.epochs}};
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.kind = j.at("kind").get<std::string>() == "robust" ? Provenance::Kind::robust : Provenance::Kind::standard;
  p.radius = j.at("radius").get<double>();
  p.epochs = j.at("epochs").get<int>();
  return p;
}

}  // namespace detail

inline nlohmann::json model_info_json(const ModelInfo& info) {
  return {{"architecture_id", info.architecture_id},
          {"input", {{"channels", info.channels}, {"height", info.side}, {"width", info.side}}},
          {"embedding_dim", info.embedding_dim},
          {"provenance", detail::provenance_json(info.provenance)},
          {"config_digest", info.config_digest},
          {"config", nlohmann::json::parse(info.config_json)}};
}

template <class T>
void save_checkpoint(const Embedder<T>& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write checkpoint " + path.string());
  nlohmann::json meta = model_info_json(model.info());
  meta["format"] = "lmfap-checkpoint";
  const std::string m = meta.dump();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, m.size());
  out.write(m.data(), std::streamsize(m.size()));
  const auto params = model.params();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), std::streamsize(p->name.size()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape.size()));
    for (auto d : p->shape) detail::put_le<std::uint64_t>(out, d);
    for (T v : p->value) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) throw IoFailure("failed writing checkpoint " + path.string());
}

inline ModelInfo read_checkpoint_info(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CorruptCheckpoint("not an lmfap checkpoint");
  if (detail::get_le<std::uint32_t>(in) != kCheckpointVersion) throw CorruptCheckpoint("unsupported version");
  const auto len = detail::get_le<std::uint64_t>(in);
  if (len > (1u << 26)) throw CorruptCheckpoint("metadata too large");
  std::string m(len, '\0');
  if (!in.read(m.data(), std::streamsize(len))) throw CorruptCheckpoint("truncated metadata");
  try {
    const auto j = nlohmann::json::parse(m);
    ModelInfo info;
    info.architecture_id = j.at("architecture_id").get<std::string>();
    info.channels = j.at("input").at("channels").get<std::size_t>();
    info.side = j.at("input").at("height").get<std::size_t>();
    info.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    info.provenance = detail::provenance_from_json(j.at("provenance"));
    info.config_digest = j.value("config_digest", "");
    info.config_json = j.contains("config") ? j.at("config").dump() : "{}";
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("bad metadata: ") + e.what());
  }
}

template <class T = float>
Embedder<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open checkpoint " + path.string());
  auto model = make_embedder<T>(read_checkpoint_info(in));
  auto params = model.params();
  const auto count = detail::get_le<std::uint32_t>(in);
  if (count != params.size()) throw CorruptCheckpoint("parameter count mismatch");
  for (auto* p : params) {
    const auto nlen = detail::get_le<std::uint32_t>(in);
    std::string name(nlen, '\0');
    if (!in.read(name.data(), nlen)) throw CorruptCheckpoint("truncated name");
    if (name != p->name) throw CorruptCheckpoint("expected array '" + p->name + "', found '" + name + "'");
    const auto nd = detail::get_le<std::uint32_t>(in);
    std::vector<std::size_t> shape(nd);
    for (auto& d : shape) d = detail::get_le<std::uint64_t>(in);
    if (shape != p->shape) throw CorruptCheckpoint("shape mismatch for " + name);
    for (auto& v : p->value) v = static_cast<T>(std::bit_cast<float>(detail::get_le<std::uint32_t>(in)));
  }
  return model;
}

}  // namespace lmfap
