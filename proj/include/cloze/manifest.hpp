#ifndef CLOZE_MANIFEST_HPP_
#define CLOZE_MANIFEST_HPP_

#include <cstdint>
#include <map>
#include <string>

namespace cloze {

// 64-bit FNV-1a; stable across platforms, cheap enough for whole files.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& text);
std::uint64_t hash_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

// Record of one CLI run: what was invoked, with which settings and seeds, on
// which input bytes, producing which output bytes. Deliberately carries no
// timestamps so identical runs serialize to identical bytes. Each output
// artifact gets a sidecar `<artifact>.manifest.json`.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> input_hashes;   // path -> hex digest
  std::map<std::string, std::string> output_hashes;  // path -> hex digest

  void add_input(const std::string& path);
  void add_output(const std::string& path);

  // Canonical serialization of the run identity: command, config, seeds,
  // input digests. Output digests stay outside so artifacts can embed the
  // hash before they are written.
  std::string to_json() const;
  // Digest of the canonical serialization; artifacts embed or reference it.
  std::string manifest_hash() const;

  void write(const std::string& artifact_path) const;
  static std::string manifest_path(const std::string& artifact_path);
  static RunManifest read(const std::string& manifest_file);
};

enum class ResumeState { kNoManifest, kMatch, kMismatch };

struct ResumeCheck {
  ResumeState state = ResumeState::kNoManifest;
  std::string detail;
};

// Compares the input digests recorded beside `artifact_path` with the
// current ones. kMatch means the artifact is the product of these exact
// inputs; kMismatch explains the first difference.
ResumeCheck check_resume(const std::string& artifact_path,
                         const std::map<std::string, std::string>& current_inputs);

}  // namespace cloze

#endif  // CLOZE_MANIFEST_HPP_
