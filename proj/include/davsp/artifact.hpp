#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "davsp/tensor.hpp"

namespace davsp {

// On-disk artifact layout: <root>/<name>.meta.json + <root>/<name>.f32.
// Payload is raw little-endian float32, row-major. Bit-exact round trips.
class ArtifactStore {
 public:
  static constexpr const char* kFormatVersion = "davsp-v1";

  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  std::filesystem::path save_tensor(const std::string& name, const Tensor& t,
                                    const nlohmann::json& extra_meta = {}) const;
  Tensor load_tensor(const std::string& name) const;
  nlohmann::json load_meta(const std::string& name) const;

  void save_json(const std::string& name, const nlohmann::json& j) const;
  nlohmann::json load_json(const std::string& name) const;

  bool exists(const std::string& name) const;

 private:
  std::filesystem::path meta_path(const std::string& name) const;
  std::filesystem::path payload_path(const std::string& name) const;

  std::filesystem::path root_;
};

// Atomic file write: write to a temp sibling, then rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace davsp
