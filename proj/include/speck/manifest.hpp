#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "speck/error.hpp"

namespace speck {

struct UtteranceRecord {
  std::string utt_id;
  std::string path;  // relative to the manifest's directory
  std::string label;
  std::string group_id;  // speaker or session
  double duration_s = 0.0;

  bool operator==(const UtteranceRecord& o) const = default;
};

// JSON Lines corpus manifest. Paths are kept relative; base_dir is where the
// manifest itself lives and is used to resolve them.
struct Manifest {
  std::vector<UtteranceRecord> records;
  std::string base_dir;

  std::string resolve(const UtteranceRecord& r) const {
    return (std::filesystem::path(base_dir) / r.path).string();
  }

  std::vector<std::string> distinct_labels() const {
    std::set<std::string> s;
    for (const auto& r : records) s.insert(r.label);
    return {s.begin(), s.end()};
  }

  std::vector<std::string> distinct_groups() const {
    std::set<std::string> s;
    for (const auto& r : records) s.insert(r.group_id);
    return {s.begin(), s.end()};
  }
};

inline void write_manifest(const std::vector<UtteranceRecord>& records,
                           const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["utt_id"] = r.utt_id;
    j["path"] = r.path;
    j["label"] = r.label;
    j["group_id"] = r.group_id;
    j["duration_s"] = r.duration_s;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("short write: " + path);
}

inline Manifest read_manifest(const std::string& path, bool validate_paths = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    UtteranceRecord r;
    try {
      r.utt_id = j.at("utt_id").get<std::string>();
      r.path = j.at("path").get<std::string>();
      r.label = j.at("label").get<std::string>();
      r.group_id = j.at("group_id").get<std::string>();
      r.duration_s = j.at("duration_s").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.duration_s <= 0.0)
      throw DataError("manifest line " + std::to_string(line_no) +
                      ": duration_s must be positive");
    if (!seen_ids.insert(r.utt_id).second)
      throw DataError("duplicate utt_id in manifest: " + r.utt_id);
    if (validate_paths && !std::filesystem::exists(m.resolve(r)))
      throw DataError("manifest references missing file: " + m.resolve(r));
    m.records.push_back(std::move(r));
  }
  return m;
}

}  // namespace speck
