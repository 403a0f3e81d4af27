#include "cloze/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cloze/types.hpp"

namespace cloze {

namespace {
using nlohmann::json;
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x00000100000001b3ull;
}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = kFnvOffset;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& text) {
  return fnv1a64(text.data(), text.size());
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open for hashing: " + path);
  std::uint64_t h = kFnvOffset;
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof(buffer));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buffer[i]);
      h *= kFnvPrime;
    }
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

void RunManifest::add_input(const std::string& path) {
  input_hashes[path] = hash_hex(hash_file(path));
}

void RunManifest::add_output(const std::string& path) {
  output_hashes[path] = hash_hex(hash_file(path));
}

std::string RunManifest::to_json() const {
  json j;
  j["command"] = command;
  j["config"] = config;
  j["seeds"] = seeds;
  j["inputs"] = input_hashes;
  return j.dump();
}

std::string RunManifest::manifest_hash() const { return hash_hex(fnv1a64(to_json())); }

std::string RunManifest::manifest_path(const std::string& artifact_path) {
  return artifact_path + ".manifest.json";
}

void RunManifest::write(const std::string& artifact_path) const {
  json j = json::parse(to_json());
  j["outputs"] = output_hashes;
  j["manifest_hash"] = manifest_hash();
  const std::string path = manifest_path(artifact_path);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw ParseError("failed writing manifest: " + path);
}

RunManifest RunManifest::read(const std::string& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw ParseError("cannot open manifest: " + manifest_file);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("invalid manifest " + manifest_file + ": " + e.what());
  }
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.input_hashes = j.at("inputs").get<std::map<std::string, std::string>>();
    m.output_hashes = j.at("outputs").get<std::map<std::string, std::string>>();
    // The hash covers the run identity, not the outputs.
    const std::string stored = j.at("manifest_hash").get<std::string>();
    if (stored != m.manifest_hash())
      throw ParseError("manifest " + manifest_file +
                       " failed its integrity check; the file was edited");
  } catch (const json::exception& e) {
    throw ParseError("invalid manifest " + manifest_file + ": " + e.what());
  }
  return m;
}

ResumeCheck check_resume(const std::string& artifact_path,
                         const std::map<std::string, std::string>& current_inputs) {
  const std::string path = RunManifest::manifest_path(artifact_path);
  if (!std::filesystem::exists(path)) return {ResumeState::kNoManifest, ""};
  const RunManifest stored = RunManifest::read(path);
  for (const auto& [file, digest] : current_inputs) {
    auto it = stored.input_hashes.find(file);
    if (it == stored.input_hashes.end())
      return {ResumeState::kMismatch,
              "input " + file + " is not recorded in " + path};
    if (it->second != digest)
      return {ResumeState::kMismatch,
              "input " + file + " changed since the recorded run (" + it->second +
                  " -> " + digest + ")"};
  }
  for (const auto& [file, digest] : stored.input_hashes) {
    if (!current_inputs.count(file))
      return {ResumeState::kMismatch,
              "recorded input " + file + " is missing from this invocation"};
  }
  return {ResumeState::kMatch, ""};
}

}  // namespace cloze
