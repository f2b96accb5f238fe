#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "fcr/core/error.hpp"
#include "fcr/core/hash.hpp"
#include "fcr/core/rng.hpp"
#include "fcr/nn/model.hpp"

namespace fcr::nn {

inline constexpr const char* kCheckpointFormat = "fcr-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline bool known_arch(const std::string& arch) {
  return arch == "conv2net" || arch == "mlp" || arch == "sequential";
}

/// What save() wrote: the manifest plus hashes of both files.
struct Checkpoint {
  nlohmann::json manifest;
  std::string params_sha256;
  std::string manifest_sha256;
};

inline nlohmann::json layer_to_json(const LayerSpec& layer) {
  nlohmann::json j{{"kind", layer_kind(layer)}};
  std::visit(
      [&j](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv2d>) {
          j["out_channels"] = l.out_channels;
          j["kernel"] = l.kernel;
          j["stride"] = l.stride;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          j["k"] = l.k;
        } else if constexpr (std::is_same_v<T, Dense>) {
          j["in"] = l.in;
          j["out"] = l.out;
        }
      },
      layer);
  return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv2d") {
    return Conv2d{j.at("out_channels").get<std::size_t>(), j.at("kernel").get<std::size_t>(),
                  j.at("stride").get<std::size_t>()};
  }
  if (kind == "relu") return Relu{};
  if (kind == "maxpool") return MaxPool{j.at("k").get<std::size_t>()};
  if (kind == "flatten") return Flatten{};
  if (kind == "dense") return Dense{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>()};
  throw Error(ErrorKind::UnsupportedArch, "unknown layer kind '" + kind + "'");
}

/// Little-endian float32 bytes of every tensor in tensor_names() order.
inline std::vector<std::uint8_t> serialize_params(const Model& model) {
  std::vector<std::uint8_t> blob;
  blob.reserve(model.parameter_count() * 4);
  for (const auto& name : model.tensor_names()) {
    for (float v : model.tensor(name).values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) blob.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return blob;
}

inline std::string params_hash(const Model& model) {
  const auto blob = serialize_params(model);
  return Sha256().update(blob).hex_digest();
}

inline nlohmann::json make_manifest(const Model& model, const std::string& blob_hash) {
  nlohmann::json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["version"] = kCheckpointVersion;
  manifest["arch"] = model.meta().arch;
  const auto& in = model.input_shape();
  manifest["input_shape"] = {in.channels, in.height, in.width};
  manifest["layers"] = nlohmann::json::array();
  for (const auto& layer : model.layers()) manifest["layers"].push_back(layer_to_json(layer));
  manifest["class_names"] = model.meta().class_names;
  manifest["seed"] = model.meta().seed;
  manifest["rng"] = std::string(Pcg32::kName);
  manifest["training"] = model.meta().training;
  manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& name : model.tensor_names()) {
    const Tensor& t = model.tensor(name);
    manifest["tensors"].push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.size()}});
    offset += t.size() * 4;
  }
  manifest["blob_bytes"] = offset;
  manifest["params_sha256"] = blob_hash;
  return manifest;
}

/// Writes <dir>/manifest.json and <dir>/params.bin.
inline Checkpoint save(const Model& model, const std::filesystem::path& dir) {
  if (!known_arch(model.meta().arch)) {
    throw Error(ErrorKind::UnsupportedArch, "cannot save unknown arch '" + model.meta().arch + "'");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  const auto blob = serialize_params(model);
  Checkpoint ckpt;
  ckpt.params_sha256 = Sha256().update(blob).hex_digest();
  ckpt.manifest = make_manifest(model, ckpt.params_sha256);
  const std::string text = ckpt.manifest.dump(2) + "\n";
  ckpt.manifest_sha256 = sha256_hex(text);

  std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
  bin.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  std::ofstream man(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  man << text;
  if (!bin || !man) throw Error(ErrorKind::Io, "cannot write checkpoint to " + dir.string());
  return ckpt;
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingInput, "missing checkpoint manifest " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Corruption, "unreadable manifest " + path.string() + ": " + e.what());
  }
}

inline Model load(const std::filesystem::path& dir) {
  const nlohmann::json manifest = read_manifest(dir);
  Model model;
  try {
    if (manifest.at("format") != kCheckpointFormat) throw Error(ErrorKind::Corruption, "not an fcr checkpoint");
    const std::string arch = manifest.at("arch").get<std::string>();
    if (!known_arch(arch)) throw Error(ErrorKind::UnsupportedArch, "unsupported arch '" + arch + "'");
    const auto in = manifest.at("input_shape").get<std::vector<std::size_t>>();
    if (in.size() != 3) throw Error(ErrorKind::Corruption, "input_shape must have 3 entries");
    std::vector<LayerSpec> layers;
    for (const auto& l : manifest.at("layers")) layers.push_back(layer_from_json(l));
    ModelMeta meta;
    meta.arch = arch;
    meta.seed = manifest.at("seed").get<std::uint64_t>();
    meta.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    meta.training = manifest.value("training", nlohmann::json::object());
    model = Model({in[0], in[1], in[2]}, std::move(layers), std::move(meta));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Corruption, std::string("malformed manifest: ") + e.what());
  }

  const auto bin_path = dir / "params.bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(ErrorKind::MissingInput, "missing parameter blob " + bin_path.string());
  const std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const auto expected_bytes = manifest.at("blob_bytes").get<std::size_t>();
  if (blob.size() != expected_bytes || blob.size() != model.parameter_count() * 4) {
    throw Error(ErrorKind::Corruption, "params.bin holds " + std::to_string(blob.size()) + " bytes, manifest expects " +
                                           std::to_string(expected_bytes));
  }
  const auto names = model.tensor_names();
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != names.size()) throw Error(ErrorKind::Corruption, "tensor list does not match layers");
  for (std::size_t t = 0; t < names.size(); ++t) {
    const auto& entry = tensors[t];
    Tensor& tensor = model.tensor(names[t]);
    if (entry.at("name") != names[t] || entry.at("shape").get<std::vector<std::size_t>>() != tensor.shape) {
      throw Error(ErrorKind::Corruption, "tensor entry " + std::to_string(t) + " does not match architecture");
    }
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + tensor.size() * 4 > blob.size()) throw Error(ErrorKind::Corruption, "tensor exceeds blob");
    for (std::size_t n = 0; n < tensor.size(); ++n) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[offset + 4 * n + b]) << (8 * b);
      tensor.values[n] = std::bit_cast<float>(bits);
    }
  }
  if (manifest.contains("params_sha256") &&
      manifest.at("params_sha256").get<std::string>() != Sha256().update(blob).hex_digest()) {
    throw Error(ErrorKind::Corruption, "params.bin hash does not match manifest");
  }
  return model;
}

}  // namespace fcr::nn
