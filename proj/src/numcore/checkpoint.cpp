#include "fsdm/numcore/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

namespace fsdm::numcore {
namespace {

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
    Bits b;
    std::memcpy(&b, &v, sizeof b);
    Bits r = 0;
    for (std::size_t i = 0; i < sizeof b; ++i) r = (r << 8) | ((b >> (8 * i)) & 0xff);
    std::memcpy(&v, &r, sizeof v);
    return v;
  }
}

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

template <typename T, typename Stored>
void decode_into(const std::string& blob, std::size_t offset, Tensor<T>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    Stored v;
    std::memcpy(&v, blob.data() + offset + i * sizeof(Stored), sizeof(Stored));
    t.data[i] = static_cast<T>(to_little(v));
  }
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& dir, std::span<const NamedTensor<T>> tensors,
                     const nlohmann::json& metadata) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  std::string blob;
  for (const auto& nt : tensors) {
    const Tensor<T>& t = *nt.tensor;
    nlohmann::json e;
    e["name"] = nt.name;
    e["shape"] = t.shape;
    e["dtype"] = dtype_name<T>();
    e["offset"] = blob.size();
    e["nbytes"] = t.size() * sizeof(T);
    entries.push_back(std::move(e));
    const std::size_t start = blob.size();
    blob.resize(start + t.size() * sizeof(T));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const T v = to_little(t.data[i]);
      std::memcpy(blob.data() + start + i * sizeof(T), &v, sizeof(T));
    }
  }
  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["dtype"] = dtype_name<T>();
  manifest["blob"] = kBlobFile;
  manifest["blob_bytes"] = blob.size();
  manifest["tensors"] = std::move(entries);
  manifest["metadata"] = metadata;

  std::ofstream blob_out(dir / kBlobFile, std::ios::binary | std::ios::trunc);
  blob_out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  std::ofstream man_out(dir / kManifestFile, std::ios::trunc);
  man_out << manifest.dump(2) << '\n';
  if (!blob_out || !man_out) throw CheckpointError("failed writing checkpoint to " + dir.string());
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / kManifestFile));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("version", std::string()) != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version in " + dir.string());
  }
  return manifest;
}

template <typename T>
nlohmann::json load_checkpoint(const std::filesystem::path& dir, std::span<const NamedTensor<T>> tensors) {
  const nlohmann::json manifest = read_manifest(dir);
  const std::string blob = read_file(dir / manifest.value("blob", std::string(kBlobFile)));
  if (blob.size() != manifest.at("blob_bytes").get<std::size_t>()) {
    throw CheckpointError("tensor blob size disagrees with manifest");
  }
  const auto& entries = manifest.at("tensors");
  if (entries.size() != tensors.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(entries.size()) + " tensors, model expects " +
                          std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = entries[i];
    Tensor<T>& t = *tensors[i].tensor;
    if (e.at("name").get<std::string>() != tensors[i].name) {
      throw CheckpointError("tensor " + std::to_string(i) + " is '" + e.at("name").get<std::string>() +
                            "', expected '" + tensors[i].name + "'");
    }
    if (e.at("shape").get<Shape>() != t.shape) {
      throw CheckpointError("shape mismatch for '" + tensors[i].name + "': checkpoint " +
                            shape_string(e.at("shape").get<Shape>()) + ", model " + shape_string(t.shape));
    }
    const std::string dtype = e.at("dtype").get<std::string>();
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
    if (width == 0) throw CheckpointError("unknown dtype '" + dtype + "'");
    if (offset + t.size() * width > blob.size() || e.at("nbytes").get<std::size_t>() != t.size() * width) {
      throw CheckpointError("tensor '" + tensors[i].name + "' overruns the blob");
    }
    if (width == 4) {
      decode_into<T, float>(blob, offset, t);
    } else {
      decode_into<T, double>(blob, offset, t);
    }
  }
  return manifest;
}

template void save_checkpoint<float>(const std::filesystem::path&, std::span<const NamedTensor<float>>,
                                     const nlohmann::json&);
template void save_checkpoint<double>(const std::filesystem::path&, std::span<const NamedTensor<double>>,
                                      const nlohmann::json&);
template nlohmann::json load_checkpoint<float>(const std::filesystem::path&, std::span<const NamedTensor<float>>);
template nlohmann::json load_checkpoint<double>(const std::filesystem::path&,
                                                std::span<const NamedTensor<double>>);

}  // namespace fsdm::numcore
