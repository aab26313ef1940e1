#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "toon2real/error.hpp"
#include "toon2real/nn/adam.hpp"
#include "toon2real/nn/module.hpp"
#include "toon2real/tensor.hpp"

namespace toon2real {

// File layout:
//   8 bytes   magic "T2RCKPT1"
//   8 bytes   little-endian header length L
//   L bytes   JSON header {spec_version, epoch, config_hash, ..., tensors: [{name, dtype, shape}]}
//   payload   raw little-endian tensor data in header order
inline constexpr char kCheckpointMagic[8] = {'T', '2', 'R', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointSpecVersion = 1;

class Checkpoint {
 public:
  struct Blob {
    std::string dtype;  // "f32" or "f64"
    Shape shape;
    std::vector<char> bytes;
  };

  nlohmann::json& header() { return header_; }
  const nlohmann::json& header() const { return header_; }

  template <typename T>
  void put(const std::string& name, const T* data, std::size_t count, Shape shape) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    if (shape.count() != count) fail(ErrorCategory::ShapeError, "checkpoint tensor '" + name + "' size mismatch");
    Blob b{std::is_same_v<T, float> ? "f32" : "f64", shape, std::vector<char>(count * sizeof(T))};
    std::memcpy(b.bytes.data(), data, b.bytes.size());
    if (!blobs_.emplace(name, std::move(b)).second) {
      fail(ErrorCategory::UsageError, "duplicate checkpoint tensor '" + name + "'");
    }
    order_.push_back(name);
  }

  template <typename T>
  void put(const std::string& name, const Tensor<T>& t) {
    put(name, t.data(), t.size(), t.shape());
  }

  bool has(const std::string& name) const { return blobs_.count(name) > 0; }

  template <typename T>
  void get(const std::string& name, T* out, std::size_t count) const {
    const auto it = blobs_.find(name);
    if (it == blobs_.end()) fail(ErrorCategory::CorpusError, "checkpoint lacks tensor '" + name + "'");
    const Blob& b = it->second;
    const bool f32 = b.dtype == "f32";
    const std::size_t elem = f32 ? sizeof(float) : sizeof(double);
    if (b.bytes.size() != count * elem) {
      fail(ErrorCategory::ShapeError, "checkpoint tensor '" + name + "' has the wrong size");
    }
    for (std::size_t i = 0; i < count; ++i) {
      if (f32) {
        float v;
        std::memcpy(&v, b.bytes.data() + i * elem, elem);
        out[i] = static_cast<T>(v);
      } else {
        double v;
        std::memcpy(&v, b.bytes.data() + i * elem, elem);
        out[i] = static_cast<T>(v);
      }
    }
  }

  void save(const std::filesystem::path& path) const {
    nlohmann::json h = header_;
    h["spec_version"] = kCheckpointSpecVersion;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& name : order_) {
      const Blob& b = blobs_.at(name);
      tensors.push_back({{"name", name}, {"dtype", b.dtype}, {"shape", {b.shape.n, b.shape.c, b.shape.h, b.shape.w}}});
    }
    h["tensors"] = tensors;
    const std::string text = h.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) fail(ErrorCategory::IoError, "cannot write checkpoint " + path.string());
      out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
      const std::uint64_t len = text.size();
      out.write(reinterpret_cast<const char*>(&len), sizeof(len));
      out.write(text.data(), static_cast<std::streamsize>(text.size()));
      for (const auto& name : order_) {
        const Blob& b = blobs_.at(name);
        out.write(b.bytes.data(), static_cast<std::streamsize>(b.bytes.size()));
      }
      if (!out) fail(ErrorCategory::IoError, "short write on checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCategory::NotFound, "no such checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
      fail(ErrorCategory::DecodeError, "not a checkpoint file: " + path.string());
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) fail(ErrorCategory::DecodeError, "truncated checkpoint header: " + path.string());
    Checkpoint ck;
    try {
      ck.header_ = nlohmann::json::parse(text);
      for (const auto& t : ck.header_.at("tensors")) {
        Blob b;
        b.dtype = t.at("dtype").get<std::string>();
        const auto s = t.at("shape").get<std::vector<std::size_t>>();
        if (s.size() != 4 || (b.dtype != "f32" && b.dtype != "f64")) throw std::runtime_error("bad tensor record");
        b.shape = {s[0], s[1], s[2], s[3]};
        b.bytes.resize(b.shape.count() * (b.dtype == "f32" ? 4 : 8));
        in.read(b.bytes.data(), static_cast<std::streamsize>(b.bytes.size()));
        if (!in) throw std::runtime_error("truncated payload");
        const auto name = t.at("name").get<std::string>();
        ck.order_.push_back(name);
        ck.blobs_.emplace(name, std::move(b));
      }
    } catch (const std::exception& e) {
      fail(ErrorCategory::DecodeError, "corrupt checkpoint " + path.string() + ": " + e.what());
    }
    ck.header_.erase("tensors");
    return ck;
  }

 private:
  nlohmann::json header_ = nlohmann::json::object();
  std::map<std::string, Blob> blobs_;
  std::vector<std::string> order_;
};

/// Store every parameter and statistics buffer of `net` under its own name.
template <typename T>
void save_module(Checkpoint& ck, nn::Module<T>& net) {
  for (auto* p : net.parameters()) ck.put(p->name, p->value);
}

template <typename T>
void load_module(const Checkpoint& ck, nn::Module<T>& net) {
  for (auto* p : net.parameters()) ck.get(p->name, p->value.data(), p->value.size());
}

template <typename T>
void save_optimizer(Checkpoint& ck, const std::string& prefix, nn::Adam<T>& opt) {
  ck.header()[prefix + ".steps"] = opt.steps();
  for (std::size_t k = 0; k < opt.slot_count(); ++k) {
    const auto& name = opt.slot_param(k).name;
    const auto& m = opt.first_moment(k);
    const auto& v = opt.second_moment(k);
    ck.put(prefix + ".m." + name, m.data(), m.size(), Shape{m.size(), 1, 1, 1});
    ck.put(prefix + ".v." + name, v.data(), v.size(), Shape{v.size(), 1, 1, 1});
  }
}

template <typename T>
void load_optimizer(const Checkpoint& ck, const std::string& prefix, nn::Adam<T>& opt) {
  opt.set_steps(ck.header().at(prefix + ".steps").get<std::int64_t>());
  for (std::size_t k = 0; k < opt.slot_count(); ++k) {
    const auto& name = opt.slot_param(k).name;
    auto& m = opt.first_moment(k);
    auto& v = opt.second_moment(k);
    ck.get(prefix + ".m." + name, m.data(), m.size());
    ck.get(prefix + ".v." + name, v.data(), v.size());
  }
}

}  // namespace toon2real
