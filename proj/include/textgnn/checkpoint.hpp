#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "textgnn/model.hpp"

namespace textgnn {

// Checkpoint = <prefix>.json manifest + <prefix>.bin blob. The blob is the
// little-endian f32 image of every parameter, row-major, in manifest order.
// Round-trips are bit-exact at f32.

namespace detail {

inline void put_f32_le(std::ostream& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                     static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
  out.write(b, 4);
}

inline float get_f32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("checkpoint blob truncated");
  const std::uint32_t u = static_cast<std::uint32_t>(b[0]) |
                          (static_cast<std::uint32_t>(b[1]) << 8) |
                          (static_cast<std::uint32_t>(b[2]) << 16) |
                          (static_cast<std::uint32_t>(b[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

inline void put_u32_le(std::ostream& out, std::uint32_t u) {
  const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                     static_cast<char>((u >> 16) & 0xff), static_cast<char>((u >> 24) & 0xff)};
  out.write(b, 4);
}

inline std::uint32_t get_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("binary table truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_checkpoint(const TextGnnModel& model, const std::string& prefix) {
  nlohmann::json manifest;
  manifest["schema_version"] = 1;
  manifest["dtype"] = "f32";
  manifest["seed"] = model.seed();
  manifest["config"] = model_config_to_json(model.config());
  manifest["vocab"] = model.vocab().tokens;
  manifest["max_seq_len"] = model.vocab().max_seq_len;

  auto tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : model.parameters()) {
    tensors.push_back({{"name", p->name}, {"shape", p->shape}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(p->numel()) * 4;
  }
  manifest["tensors"] = std::move(tensors);

  std::ofstream mf(prefix + ".json", std::ios::binary);
  if (!mf) throw DataError("cannot write checkpoint manifest " + prefix + ".json");
  mf << manifest.dump(2) << "\n";

  std::ofstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw DataError("cannot write checkpoint blob " + prefix + ".bin");
  for (const auto& p : model.parameters())
    for (Real v : p->data) detail::put_f32_le(bf, static_cast<float>(v));
}

inline TextGnnModel load_checkpoint(const std::string& prefix) {
  std::ifstream mf(prefix + ".json", std::ios::binary);
  if (!mf) throw DataError("cannot open checkpoint manifest " + prefix + ".json");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("checkpoint manifest parse error: ") + e.what());
  }
  if (manifest.at("schema_version").get<int>() != 1)
    throw DataError("unsupported checkpoint schema_version");
  if (manifest.at("dtype").get<std::string>() != "f32")
    throw DataError("unsupported checkpoint dtype");

  ModelConfig cfg = model_config_from_json(manifest.at("config"));
  Vocabulary vocab = vocab_from_tokens(manifest.at("vocab").get<std::vector<std::string>>(),
                                       manifest.value("max_seq_len", cfg.encoder.max_seq_len));
  TextGnnModel model(cfg, std::move(vocab), manifest.at("seed").get<std::uint64_t>());

  std::unordered_map<std::string, TensorPtr> by_name;
  for (const auto& p : model.parameters()) by_name[p->name] = p;

  std::ifstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw DataError("cannot open checkpoint blob " + prefix + ".bin");
  for (const auto& jt : manifest.at("tensors")) {
    const std::string name = jt.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint tensor '" + name + "' not in model");
    auto& t = it->second;
    const auto shape = jt.at("shape").get<std::vector<int>>();
    if (shape != t->shape)
      throw DataError("checkpoint tensor '" + name + "' shape " + shape_str(shape) +
                      " does not match model " + shape_str(t->shape));
    bf.seekg(static_cast<std::streamoff>(jt.at("offset").get<std::uint64_t>()));
    for (auto& v : t->data) v = static_cast<Real>(detail::get_f32_le(bf));
  }
  return model;
}

// ---- exported embedding tables ----
// Layout: "TGNNEMB1", u32 count, u32 dim, then per row u32 text length,
// text bytes, dim little-endian f32 values.

inline void write_embedding_table(
    const std::vector<std::pair<std::string, std::vector<Real>>>& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding table " + path);
  out.write("TGNNEMB1", 8);
  detail::put_u32_le(out, static_cast<std::uint32_t>(table.size()));
  const std::uint32_t dim = table.empty() ? 0 : static_cast<std::uint32_t>(table[0].second.size());
  detail::put_u32_le(out, dim);
  for (const auto& [text, vec] : table) {
    if (vec.size() != dim) throw ContractError("embedding table rows must share one dim");
    detail::put_u32_le(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (Real v : vec) detail::put_f32_le(out, static_cast<float>(v));
  }
}

inline std::vector<std::pair<std::string, std::vector<Real>>> read_embedding_table(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding table " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "TGNNEMB1")
    throw DataError("bad embedding table magic in " + path);
  const std::uint32_t count = detail::get_u32_le(in);
  const std::uint32_t dim = detail::get_u32_le(in);
  std::vector<std::pair<std::string, std::vector<Real>>> table;
  table.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = detail::get_u32_le(in);
    std::string text(len, '\0');
    in.read(text.data(), len);
    std::vector<Real> vec(dim);
    for (auto& v : vec) v = static_cast<Real>(detail::get_f32_le(in));
    if (!in) throw DataError("embedding table truncated at row " + std::to_string(i));
    table.emplace_back(std::move(text), std::move(vec));
  }
  return table;
}

}  // namespace textgnn
