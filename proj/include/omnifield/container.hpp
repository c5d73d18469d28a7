#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "omnifield/common.hpp"

namespace omnifield {

// Portable on-disk array container: a directory holding manifest.json plus
// one binary file per array. Payloads are always little-endian, row-major,
// 32- or 64-bit floats as declared; the manifest carries a CRC32 per array.

namespace detail {

template <class Scalar>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<Scalar, double>)
    return "f64";
  else
    return "f32";
}

inline std::string sanitize_filename(const std::string& name) {
  std::string out;
  for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

// Writers always emit little-endian; big-endian hosts swap on both paths.
inline void swap_bytes_inplace(std::vector<unsigned char>& buf, std::size_t width) {
  if constexpr (std::endian::native == std::endian::little) {
    (void)buf;
    (void)width;
    return;
  } else {
    for (std::size_t i = 0; i + width <= buf.size(); i += width)
      for (std::size_t a = 0, b = width - 1; a < b; ++a, --b) std::swap(buf[i + a], buf[i + b]);
  }
}

template <class Scalar>
std::vector<unsigned char> to_le_bytes(const MatX<Scalar>& m) {
  std::vector<unsigned char> buf(sizeof(Scalar) * std::size_t(m.size()));
  std::memcpy(buf.data(), m.data(), buf.size());
  swap_bytes_inplace(buf, sizeof(Scalar));
  return buf;
}

}  // namespace detail

struct ArrayInfo {
  std::string name;
  Index rows = 0, cols = 0;
  std::string dtype;
  std::string file;
  std::uint64_t byte_offset = 0;
  std::string crc32_hex;
};

class ContainerWriter {
 public:
  ContainerWriter(std::filesystem::path dir, bool force = false) : dir_(std::move(dir)) {
    namespace fs = std::filesystem;
    if (fs::exists(dir_ / "manifest.json") && !force)
      throw Error("io", "container already exists at " + dir_.string() + " (use --force)");
    fs::create_directories(dir_);
  }

  template <class Scalar>
  void add_array(const std::string& name, const MatX<Scalar>& m) {
    if (names_.count(name)) throw Error("value", "container: duplicate array name " + name);
    names_.insert(name);
    ArrayInfo info;
    info.name = name;
    info.rows = m.rows();
    info.cols = m.cols();
    info.dtype = detail::dtype_name<Scalar>();
    char idx[16];
    std::snprintf(idx, sizeof(idx), "%03zu", arrays_.size());
    info.file = std::string(idx) + "_" + detail::sanitize_filename(name) + ".bin";

    const auto bytes = detail::to_le_bytes(m);
    char hex[16];
    std::snprintf(hex, sizeof(hex), "%08x", crc32(bytes.data(), bytes.size()));
    info.crc32_hex = hex;

    std::ofstream out(dir_ / info.file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot write " + (dir_ / info.file).string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error("io", "short write to " + info.file);
    arrays_.push_back(std::move(info));
  }

  void set_kind(std::string kind) { kind_ = std::move(kind); }
  void set_metadata(nlohmann::json meta) { metadata_ = std::move(meta); }
  void set_fingerprint(std::string fp) { fingerprint_ = std::move(fp); }

  void finalize() {
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["kind"] = kind_;
    manifest["config_fingerprint"] = fingerprint_;
    manifest["metadata"] = metadata_;
    auto& arr = manifest["arrays"] = nlohmann::json::array();
    for (const auto& a : arrays_) {
      arr.push_back({{"name", a.name},
                     {"shape", {a.rows, a.cols}},
                     {"dtype", a.dtype},
                     {"file", a.file},
                     {"byte_offset", a.byte_offset},
                     {"crc32", a.crc32_hex}});
    }
    std::ofstream out(dir_ / "manifest.json", std::ios::trunc);
    if (!out) throw Error("io", "cannot write manifest in " + dir_.string());
    out << manifest.dump(2) << "\n";
  }

 private:
  std::filesystem::path dir_;
  std::vector<ArrayInfo> arrays_;
  std::set<std::string> names_;
  std::string kind_ = "container";
  std::string fingerprint_;
  nlohmann::json metadata_ = nlohmann::json::object();
};

class ContainerReader {
 public:
  explicit ContainerReader(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::ifstream in(dir_ / "manifest.json");
    if (!in) throw Error("io", "no manifest.json in " + dir_.string());
    nlohmann::json manifest;
    try {
      in >> manifest;
    } catch (const std::exception& e) {
      throw Error("io", std::string("bad manifest: ") + e.what());
    }
    kind_ = manifest.value("kind", "container");
    fingerprint_ = manifest.value("config_fingerprint", "");
    metadata_ = manifest.value("metadata", nlohmann::json::object());
    for (const auto& a : manifest.at("arrays")) {
      ArrayInfo info;
      info.name = a.at("name").get<std::string>();
      info.rows = a.at("shape")[0].get<Index>();
      info.cols = a.at("shape")[1].get<Index>();
      info.dtype = a.at("dtype").get<std::string>();
      info.file = a.at("file").get<std::string>();
      info.byte_offset = a.value("byte_offset", std::uint64_t(0));
      info.crc32_hex = a.at("crc32").get<std::string>();
      index_[info.name] = arrays_.size();
      arrays_.push_back(std::move(info));
    }
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<ArrayInfo>& arrays() const { return arrays_; }
  const nlohmann::json& metadata() const { return metadata_; }
  const std::string& kind() const { return kind_; }
  const std::string& fingerprint() const { return fingerprint_; }

  const ArrayInfo& info(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("io", "container has no array named " + name);
    return arrays_[it->second];
  }

  /// Reads an array, verifying length and checksum; converts dtype to Scalar.
  template <class Scalar>
  MatX<Scalar> array(const std::string& name) const {
    const ArrayInfo& a = info(name);
    const std::size_t width = a.dtype == "f64" ? 8 : 4;
    const std::size_t expect = width * std::size_t(a.rows) * std::size_t(a.cols);
    std::ifstream in(dir_ / a.file, std::ios::binary);
    if (!in) throw Error("io", "missing array file " + a.file);
    std::vector<unsigned char> bytes(expect);
    in.seekg(std::streamoff(a.byte_offset));
    in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(expect));
    if (std::size_t(in.gcount()) != expect)
      throw Error("io", "array " + a.name + " is shorter than its declared shape");
    char hex[16];
    std::snprintf(hex, sizeof(hex), "%08x", crc32(bytes.data(), bytes.size()));
    if (a.crc32_hex != hex)
      throw Error("io", "array " + a.name + " failed its checksum");
    detail::swap_bytes_inplace(bytes, width);
    MatX<Scalar> out(a.rows, a.cols);
    if (a.dtype == "f64") {
      MatX<double> tmp(a.rows, a.cols);
      std::memcpy(tmp.data(), bytes.data(), expect);
      out = tmp.template cast<Scalar>();
    } else if (a.dtype == "f32") {
      MatX<float> tmp(a.rows, a.cols);
      std::memcpy(tmp.data(), bytes.data(), expect);
      out = tmp.template cast<Scalar>();
    } else {
      throw Error("io", "array " + a.name + " has unsupported dtype " + a.dtype);
    }
    return out;
  }

  /// Per-array checksums in manifest order, for reproducibility checks.
  std::vector<std::string> checksums() const {
    std::vector<std::string> out;
    for (const auto& a : arrays_) out.push_back(a.name + ":" + a.crc32_hex);
    return out;
  }

 private:
  std::filesystem::path dir_;
  std::vector<ArrayInfo> arrays_;
  std::map<std::string, std::size_t> index_;
  std::string kind_, fingerprint_;
  nlohmann::json metadata_;
};

}  // namespace omnifield
