#pragma once

// Parameter file layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "RPFSLUCK"
//   offset 8   u32       format version
//   offset 12  u64       header length N
//   offset 20  N bytes   UTF-8 JSON header:
//                          {"format_version": v,
//                           "metadata": {...},
//                           "tensors": [{"name", "shape": [...], "offset"}]}
//   offset 20+N          payload: IEEE-754 binary64 values, little-endian;
//                        "offset" counts values from the payload start.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rpfslu/errors.hpp"
#include "rpfslu/tensor.hpp"

namespace rpfslu {

inline constexpr std::uint32_t checkpoint_format_version = 1;
inline constexpr char checkpoint_magic[8] = {'R', 'P', 'F', 'S', 'L', 'U', 'C', 'K'};

struct TensorFile {
  std::uint32_t format_version = checkpoint_format_version;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint64_t get_uint(const std::string& in, std::size_t pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_tensor_file(const TensorFile& tf) {
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : tf.tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const nlohmann::json header = {
      {"format_version", tf.format_version}, {"metadata", tf.metadata}, {"tensors", index}};
  const std::string hdr = header.dump();

  std::string out(checkpoint_magic, sizeof checkpoint_magic);
  detail::put_u32(out, tf.format_version);
  detail::put_u64(out, hdr.size());
  out += hdr;
  out.reserve(out.size() + offset * 8);
  for (const auto& [name, t] : tf.tensors)
    for (double v : t.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline TensorFile decode_tensor_file(const std::string& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), checkpoint_magic, sizeof checkpoint_magic) != 0)
    throw DataError("not a checkpoint file (bad magic)");
  TensorFile tf;
  tf.format_version = static_cast<std::uint32_t>(detail::get_uint(bytes, 8, 4));
  if (tf.format_version != checkpoint_format_version)
    throw DataError("unsupported checkpoint format version " + std::to_string(tf.format_version));
  const std::size_t hlen = detail::get_uint(bytes, 12, 8);
  if (20 + hlen > bytes.size()) throw DataError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(20, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header: ") + e.what());
  }
  tf.metadata = header.value("metadata", nlohmann::json::object());
  const std::size_t payload = 20 + hlen;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    std::vector<double> values(shape_size(shape));
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = std::bit_cast<double>(detail::get_uint(bytes, payload + 8 * (offset + i), 8));
    tf.tensors.emplace_back(name, Tensor(shape, std::move(values)));
  }
  return tf;
}

inline void write_tensor_file(const std::filesystem::path& path, const TensorFile& tf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  const std::string bytes = encode_tensor_file(tf);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

inline TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor_file(bytes);
}

inline std::vector<std::pair<std::string, Tensor>> export_parameters(const ParameterSet& ps) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto* p : ps.all()) out.emplace_back(p->name, p->value);
  return out;
}

/// Copies stored values into `ps`; names and shapes must match one-to-one.
inline void import_parameters(ParameterSet& ps, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  if (tensors.size() != ps.size())
    throw DataError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model expects " +
                    std::to_string(ps.size()));
  for (const auto& [name, t] : tensors) {
    Parameter* p = ps.find(name);
    if (!p) throw DataError("checkpoint tensor '" + name + "' has no matching parameter");
    if (p->value.shape() != t.shape())
      throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                      shape_str(p->value.shape()));
    p->value = t;
  }
}

}  // namespace rpfslu
