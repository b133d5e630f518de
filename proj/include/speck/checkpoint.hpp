#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "speck/error.hpp"
#include "speck/rng.hpp"
#include "speck/tensor.hpp"

namespace speck {

// An immutable snapshot of named f32 tensors: the unit weight averaging
// operates on. Tensor order is preserved through save/load.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  int64_t step = 0;
  std::optional<double> dev_metric;
  uint64_t config_fingerprint = 0;
  std::map<std::string, std::vector<std::string>> label_sets;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

constexpr int64_t kCkptAlign = 64;

inline int64_t align_up(int64_t x, int64_t a) { return (x + a - 1) / a * a; }

inline std::string fingerprint_hex(uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

inline uint64_t fingerprint_from_hex(const std::string& hex) {
  return std::stoull(hex, nullptr, 16);
}

}  // namespace detail

// Container layout: u64 LE header length, the JSON header (a list of
// {name, shape, dtype, offset} entries, offsets relative to the payload
// base), then little-endian f32 payloads, each 64-byte aligned. Metadata
// lives in a "<file>.meta.json" sidecar.
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  nlohmann::ordered_json header = nlohmann::ordered_json::array();
  int64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    require_finite(t, "checkpoint tensor " + name);
    nlohmann::ordered_json e;
    e["name"] = name;
    e["shape"] = t.shape;
    e["dtype"] = "f32";
    e["offset"] = offset;
    header.push_back(e);
    offset = detail::align_up(offset + t.size() * 4, detail::kCkptAlign);
  }
  const std::string header_str = header.dump();
  const auto header_len = static_cast<uint64_t>(header_str.size());
  const int64_t payload_base =
      detail::align_up(8 + static_cast<int64_t>(header_len), detail::kCkptAlign);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((header_len >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  std::vector<char> pad(static_cast<size_t>(payload_base - 8 - static_cast<int64_t>(header_len)), 0);
  out.write(pad.data(), static_cast<std::streamsize>(pad.size()));

  int64_t written = 0;
  for (const auto& [name, t] : ck.tensors) {
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(t.v.data()),
              static_cast<std::streamsize>(t.size() * 4));
    written += t.size() * 4;
    const int64_t padded = detail::align_up(written, detail::kCkptAlign);
    std::vector<char> tail(static_cast<size_t>(padded - written), 0);
    out.write(tail.data(), static_cast<std::streamsize>(tail.size()));
    written = padded;
  }
  if (!out) throw IoError("short write: " + path);
  out.close();

  nlohmann::ordered_json meta;
  meta["step"] = ck.step;
  if (ck.dev_metric)
    meta["dev_metric"] = *ck.dev_metric;
  else
    meta["dev_metric"] = nullptr;
  meta["config_fingerprint"] = detail::fingerprint_hex(ck.config_fingerprint);
  meta["label_sets"] = ck.label_sets;
  std::ofstream mf(path + ".meta.json", std::ios::trunc);
  if (!mf) throw IoError("cannot write checkpoint sidecar: " + path + ".meta.json");
  mf << meta.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 8) throw TruncatedError("checkpoint too small: " + path);
  uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i)
    header_len |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[static_cast<size_t>(i)])) << (8 * i);
  if (8 + header_len > bytes.size())
    throw TruncatedError("checkpoint header truncated: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8,
                                   bytes.begin() + 8 + static_cast<int64_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint header: " + std::string(e.what()));
  }
  const int64_t payload_base =
      detail::align_up(8 + static_cast<int64_t>(header_len), detail::kCkptAlign);

  Checkpoint ck;
  for (const auto& e : header) {
    const std::string name = e.at("name").get<std::string>();
    const std::vector<int64_t> shape = e.at("shape").get<std::vector<int64_t>>();
    if (e.at("dtype").get<std::string>() != "f32")
      throw DataError("unsupported tensor dtype in checkpoint: " + path);
    const int64_t offset = e.at("offset").get<int64_t>();
    Tensor<float> t(shape);
    const int64_t begin = payload_base + offset;
    if (begin + t.size() * 4 > static_cast<int64_t>(bytes.size()))
      throw TruncatedError("checkpoint payload truncated: " + path);
    std::memcpy(t.v.data(), bytes.data() + begin, static_cast<size_t>(t.size() * 4));
    require_finite(t, "checkpoint tensor " + name);
    ck.tensors.emplace_back(name, std::move(t));
  }

  const std::string meta_path = path + ".meta.json";
  if (std::filesystem::exists(meta_path)) {
    std::ifstream mf(meta_path);
    nlohmann::json meta;
    try {
      mf >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("bad checkpoint sidecar: " + std::string(e.what()));
    }
    ck.step = meta.value("step", int64_t{0});
    if (meta.contains("dev_metric") && !meta["dev_metric"].is_null())
      ck.dev_metric = meta["dev_metric"].get<double>();
    if (meta.contains("config_fingerprint"))
      ck.config_fingerprint =
          detail::fingerprint_from_hex(meta["config_fingerprint"].get<std::string>());
    if (meta.contains("label_sets"))
      ck.label_sets =
          meta["label_sets"].get<std::map<std::string, std::vector<std::string>>>();
  }
  return ck;
}

}  // namespace speck
