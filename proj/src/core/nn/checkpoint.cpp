#include "core/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <openssl/evp.h>

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts need byte swaps");

namespace ftc::nn {

namespace {
std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const void* data, size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot write " + path);
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  require(out.good(), ErrorCode::IoError, "short write to " + path);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}
}  // namespace

void save_checkpoint(const std::string& prefix, const ParamStore& store,
                     const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["format"] = "ftc-checkpoint";
  manifest["version"] = 1;
  manifest["meta"] = meta;
  auto& tensors = manifest["tensors"] = nlohmann::json::array();
  size_t total = 0;
  for (int i = 0; i < store.count(); ++i) {
    const auto& e = store.entry(i);
    tensors.push_back({{"name", e.name}, {"shape", e.value.shape}});
    total += e.value.data.size();
  }
  std::vector<float> blob;
  blob.reserve(total);
  for (int i = 0; i < store.count(); ++i) {
    const auto& d = store.entry(i).value.data;
    blob.insert(blob.end(), d.begin(), d.end());
  }
  const std::string text = manifest.dump(2);
  write_file(prefix + ".json", text.data(), text.size());
  write_file(prefix + ".bin", blob.data(), blob.size() * sizeof(float));
}

nlohmann::json load_checkpoint(const std::string& prefix, ParamStore& store) {
  require(store.count() == 0, ErrorCode::Internal, "load_checkpoint: store not empty");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(prefix + ".json"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("bad checkpoint manifest: ") + e.what());
  }
  require(manifest.value("format", "") == "ftc-checkpoint", ErrorCode::ValidationError,
          "not a checkpoint manifest: " + prefix + ".json");
  const std::string blob = read_file(prefix + ".bin");
  require(blob.size() % sizeof(float) == 0, ErrorCode::ValidationError,
          "checkpoint blob size not a multiple of 4");
  const float* values = reinterpret_cast<const float*>(blob.data());
  const int64_t n_values = static_cast<int64_t>(blob.size() / sizeof(float));
  int64_t offset = 0;
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const Shape shape = t.at("shape").get<Shape>();
    const int64_t n = shape_size(shape);
    require(offset + n <= n_values, ErrorCode::ValidationError,
            "checkpoint blob shorter than manifest for " + name);
    Tensor tensor(shape);
    std::memcpy(tensor.data.data(), values + offset, static_cast<size_t>(n) * sizeof(float));
    store.add(name, std::move(tensor));
    offset += n;
  }
  require(offset == n_values, ErrorCode::ValidationError,
          "checkpoint blob longer than manifest");
  return manifest.value("meta", nlohmann::json::object());
}

std::string checkpoint_hash(const std::string& prefix) {
  return sha256_hex(read_file(prefix + ".json") + read_file(prefix + ".bin"));
}

bool tensors_identical(const ParamStore& a, const ParamStore& b, const std::string& name) {
  const int ia = a.find(name), ib = b.find(name);
  if (ia < 0 || ib < 0) return false;
  const auto& ta = a.entry(ia).value;
  const auto& tb = b.entry(ib).value;
  if (ta.shape != tb.shape) return false;
  return std::memcmp(ta.data.data(), tb.data.data(),
                     static_cast<size_t>(ta.size()) * sizeof(float)) == 0;
}

}  // namespace ftc::nn
