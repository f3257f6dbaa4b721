// Copyright 2026 The PADE-ReID Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint file layout (all integers little-endian):
//
//   bytes 0..7   magic "PADECKPT"
//   u32          format version (currently 1)
//   u64 + bytes  metadata, UTF-8 JSON
//   u32          tensor count
//   per tensor:  u32 name length, name, u64 rows, u64 cols, rows*cols f64 row-major
//   u64          FNV-1a 64 checksum of every preceding byte
//
// Tensor names are "param/<name>" and "velocity/<name>". Files are written to
// a temporary sibling and renamed, so a failed write never clobbers an
// existing checkpoint.

#pragma once

#include <openssl/evp.h>

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "pade/autograd.hpp"
#include "pade/config.hpp"
#include "pade/error.hpp"
#include "pade/model.hpp"

namespace pade {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

inline constexpr char kCheckpointMagic[8] = {'P', 'A', 'D', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointState {
  RunConfig config;
  int num_ids = 0;
  int epoch = 0;  // completed epochs
  long long global_step = 0;
  std::map<std::string, Matrix> params;
  std::map<std::string, Matrix> velocity;
  nlohmann::json extra = nlohmann::json::object();
};

namespace ckpt_detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& b) : buf_(b) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError("checkpoint truncated");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  std::string str(std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError("checkpoint truncated");
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(const char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(p[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_atomic(const std::filesystem::path& path, const std::vector<char>& data) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move checkpoint into place: " + path.string());
  }
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::filesystem::path& path, const CheckpointState& s) {
  nlohmann::json meta = {
      {"format", "pade-checkpoint"},
      {"version", kCheckpointVersion},
      {"config_yaml", config_to_string(s.config)},
      {"num_ids", s.num_ids},
      {"epoch", s.epoch},
      {"global_step", s.global_step},
      {"optimizer",
       {{"type", "sgd"},
        {"momentum", s.config.trainer.momentum},
        {"weight_decay", s.config.trainer.weight_decay}}},
      {"rng",
       {{"trainer_seed", s.config.trainer.seed},
        {"next_epoch", s.epoch},
        {"scheme", "epoch stream = derive_seed(trainer_seed, \"epoch\", epoch)"}}},
      {"extra", s.extra}};
  ckpt_detail::Writer w;
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  const std::string m = meta.dump();
  w.pod<std::uint64_t>(m.size());
  w.bytes(m.data(), m.size());
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(s.params.size() + s.velocity.size()));
  auto put = [&](const std::string& name, const Matrix& v) {
    w.str(name);
    w.pod<std::uint64_t>(static_cast<std::uint64_t>(v.rows()));
    w.pod<std::uint64_t>(static_cast<std::uint64_t>(v.cols()));
    w.bytes(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  };
  for (const auto& [name, v] : s.params) put("param/" + name, v);
  for (const auto& [name, v] : s.velocity) put("velocity/" + name, v);
  const auto sum = ckpt_detail::fnv1a(w.buffer().data(), w.buffer().size());
  w.pod<std::uint64_t>(sum);
  ckpt_detail::write_atomic(path, w.buffer());
}

inline CheckpointState load_checkpoint(const std::filesystem::path& path) {
  const auto buf = ckpt_detail::read_file(path);
  if (buf.size() < sizeof(kCheckpointMagic) + 4 + 8 + 4 + 8 ||
      std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  std::uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (stored != ckpt_detail::fnv1a(buf.data(), buf.size() - 8)) {
    throw IoError("checkpoint checksum mismatch: " + path.string());
  }
  ckpt_detail::Reader r(buf);
  char magic[8];
  r.bytes(magic, 8);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto meta_len = r.pod<std::uint64_t>();
  const auto meta = nlohmann::json::parse(r.str(meta_len));

  CheckpointState s;
  s.config = config_from_string(meta.at("config_yaml").get<std::string>());
  s.num_ids = meta.at("num_ids").get<int>();
  s.epoch = meta.at("epoch").get<int>();
  s.global_step = meta.at("global_step").get<long long>();
  if (meta.contains("extra")) s.extra = meta.at("extra");

  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.pod<std::uint32_t>();
    const std::string name = r.str(name_len);
    const auto rows = r.pod<std::uint64_t>();
    const auto cols = r.pod<std::uint64_t>();
    Matrix v(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.bytes(v.data(), sizeof(double) * rows * cols);
    if (name.rfind("param/", 0) == 0) {
      s.params.emplace(name.substr(6), std::move(v));
    } else if (name.rfind("velocity/", 0) == 0) {
      s.velocity.emplace(name.substr(9), std::move(v));
    } else {
      throw IoError("unknown tensor kind in checkpoint: " + name);
    }
  }
  return s;
}

/// Copies stored values into the model; names and shapes must match exactly.
inline void assign_parameters(const Model& model, const std::map<std::string, Matrix>& values) {
  const ParamList params = model.parameters();
  if (params.size() != values.size()) {
    throw ConfigError("checkpoint has " + std::to_string(values.size()) +
                      " parameters, model expects " + std::to_string(params.size()));
  }
  for (auto [name, var] : params) {
    auto it = values.find(name);
    if (it == values.end()) throw ConfigError("checkpoint lacks parameter " + name);
    if (it->second.rows() != var.rows() || it->second.cols() != var.cols()) {
      throw ConfigError("checkpoint/config mismatch for " + name);
    }
    var.mutable_value() = it->second;
  }
}

inline std::map<std::string, Matrix> snapshot_parameters(const Model& model) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, var] : model.parameters()) out.emplace(name, var.value());
  return out;
}

/// Rebuilds a model from a checkpoint using the config stored inside it.
inline Model model_from_checkpoint(const CheckpointState& s) {
  Model m = Model::init(s.config.backbone, s.config.pipeline.dual_enhance, s.num_ids,
                        s.config.trainer.seed);
  assign_parameters(m, s.params);
  return m;
}

/// SHA-1 over "blob <size>\0" + content, as `git hash-object` computes it.
inline std::string git_blob_hash(const std::filesystem::path& path) {
  const auto data = ckpt_detail::read_file(path);
  const std::string header = "blob " + std::to_string(data.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("EVP_MD_CTX_new failed");
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, data.data(), data.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* kHex = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 0xF];
  }
  return hex;
}

}  // namespace pade
