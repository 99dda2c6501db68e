#pragma once

#include "coosci/util/hash.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace coosci {

// What a command ran with and what it wrote. argv alone replays the run.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> config;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> input_hashes;
  std::vector<std::string> outputs;
  double wall_time_s = 0.0;

  void add_input(const std::string& path) { input_hashes[path] = hash_file(path); }
};

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"command", m.command},           {"argv", m.argv},       {"config", m.config}, {"seeds", m.seeds},
          {"input_hashes", m.input_hashes}, {"outputs", m.outputs}, {"wall_time_s", m.wall_time_s}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config = j.value("config", std::map<std::string, std::string>{});
  m.seeds = j.value("seeds", std::map<std::string, std::uint64_t>{});
  m.input_hashes = j.value("input_hashes", std::map<std::string, std::string>{});
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.wall_time_s = j.value("wall_time_s", 0.0);
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return manifest_from_json(nlohmann::json::parse(in));
}

// Inputs whose contents changed since the manifest was written.
inline std::vector<std::string> changed_inputs(const RunManifest& m) {
  std::vector<std::string> out;
  for (const auto& [path, h] : m.input_hashes)
    if (hash_file(path) != h) out.push_back(path);
  return out;
}

}  // namespace coosci
