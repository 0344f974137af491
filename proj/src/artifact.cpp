#include "davsp/artifact.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace davsp {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "payload format is little-endian; big-endian hosts need byte swaps");

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw io_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw io_error("rename failed: " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw io_error("cannot create artifact root: " + root_.string());
}

fs::path ArtifactStore::meta_path(const std::string& name) const {
  return root_ / (name + ".meta.json");
}

fs::path ArtifactStore::payload_path(const std::string& name) const {
  return root_ / (name + ".f32");
}

bool ArtifactStore::exists(const std::string& name) const {
  return fs::exists(meta_path(name)) && fs::exists(payload_path(name));
}

fs::path ArtifactStore::save_tensor(const std::string& name, const Tensor& t,
                                    const json& extra_meta) const {
  if (name.empty() || name.find('/') != std::string::npos) {
    throw usage_error("artifact name must be a plain identifier: '" + name + "'");
  }
  json meta = {
      {"version", kFormatVersion},
      {"shape", t.shape()},
      {"dtype", "f32"},
      {"byte_order", "little-endian"},
      {"layout", "row-major"},
  };
  if (!extra_meta.is_null() && !extra_meta.empty()) meta["extra"] = extra_meta;

  std::string payload(t.size() * sizeof(float), '\0');
  std::memcpy(payload.data(), t.data(), payload.size());
  write_file_atomic(payload_path(name), payload);
  write_file_atomic(meta_path(name), meta.dump(2) + "\n");
  return payload_path(name);
}

json ArtifactStore::load_meta(const std::string& name) const {
  json meta;
  try {
    meta = json::parse(read_file(meta_path(name)));
  } catch (const json::exception& e) {
    throw io_error("corrupt metadata for '" + name + "': " + e.what());
  }
  if (!meta.contains("version") || meta["version"] != kFormatVersion) {
    throw io_error("artifact '" + name + "' has unsupported format version (expected " +
                   std::string(kFormatVersion) + ")");
  }
  return meta;
}

Tensor ArtifactStore::load_tensor(const std::string& name) const {
  json meta = load_meta(name);
  if (meta.value("dtype", "") != "f32") {
    throw io_error("artifact '" + name + "' has unsupported dtype");
  }
  std::vector<std::size_t> shape = meta.at("shape").get<std::vector<std::size_t>>();
  std::string payload = read_file(payload_path(name));
  const std::size_t expected = shape_product(shape) * sizeof(float);
  if (payload.size() != expected) {
    throw io_error("artifact '" + name + "' payload is corrupt: " +
                   std::to_string(payload.size()) + " bytes, expected " +
                   std::to_string(expected));
  }
  std::vector<float> data(shape_product(shape));
  std::memcpy(data.data(), payload.data(), payload.size());
  return Tensor(std::move(shape), std::move(data));
}

void ArtifactStore::save_json(const std::string& name, const json& j) const {
  write_file_atomic(root_ / (name + ".json"), j.dump(2) + "\n");
}

json ArtifactStore::load_json(const std::string& name) const {
  try {
    return json::parse(read_file(root_ / (name + ".json")));
  } catch (const json::exception& e) {
    throw io_error("corrupt json artifact '" + name + "': " + e.what());
  }
}

}  // namespace davsp
