// Copyright 2026 The GTNB Authors
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

#include "gtnb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gtnb {
namespace {

constexpr char kMagic[4] = {'G', 'T', 'N', 'B'};
constexpr char kEndMarker[4] = {'B', 'N', 'T', 'G'};
constexpr const char* kFirstMomentPrefix = "@adam.m/";
constexpr const char* kSecondMomentPrefix = "@adam.v/";

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename U>
  void pod(U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out_.append(buf, sizeof(U));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename U>
  U pod() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptionError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void write_entry(Writer& w, const std::string& name, const Tensor<float>& t) {
  w.str(name);
  w.pod(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.pod(static_cast<std::uint64_t>(d));
  w.raw(reinterpret_cast<const char*>(t.ptr()), t.numel() * sizeof(float));
}

}  // namespace

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ModelCheckpoint snapshot(const nn::ParameterStore<float>& store) {
  ModelCheckpoint ckpt;
  for (const auto& [name, v] : store.entries()) ckpt.tensors.emplace(name, v.value());
  ckpt.frozen = store.frozen();
  return ckpt;
}

void attach_optimizer(ModelCheckpoint& ckpt, const nn::OptimizerState<float>& state) {
  ckpt.optimizer_step = state.step;
  ckpt.first_moment = state.first_moment;
  ckpt.second_moment = state.second_moment;
}

nn::OptimizerState<float> restore_optimizer(const ModelCheckpoint& ckpt, nn::AdamConfig config) {
  nn::OptimizerState<float> state;
  state.config = config;
  state.step = ckpt.optimizer_step;
  state.first_moment = ckpt.first_moment;
  state.second_moment = ckpt.second_moment;
  return state;
}

template <typename T>
void restore(const ModelCheckpoint& ckpt, nn::ParameterStore<T>& store, const std::string& prefix) {
  for (const auto& [name, t] : ckpt.tensors) {
    if (!nn::prefix_matches(prefix, name)) continue;
    if (!store.contains(name)) throw Error("checkpoint parameter not in model: " + name);
    store.assign(name, t.template cast<T>());
  }
  for (const auto& [name, _] : store.entries()) {
    if (nn::prefix_matches(prefix, name) && !ckpt.tensors.count(name)) {
      throw Error("model parameter missing from checkpoint: " + name);
    }
  }
}

template void restore(const ModelCheckpoint&, nn::ParameterStore<float>&, const std::string&);
template void restore(const ModelCheckpoint&, nn::ParameterStore<double>&, const std::string&);

std::string encode_checkpoint(const ModelCheckpoint& ckpt) {
  Writer w;
  w.raw(kMagic, 4);
  w.pod(kCheckpointVersion);
  w.pod(static_cast<std::uint64_t>(ckpt.tensors.size() + ckpt.first_moment.size() +
                                   ckpt.second_moment.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.starts_with("@")) throw Error("parameter names may not start with '@': " + name);
    write_entry(w, name, t);
  }
  for (const auto& [name, t] : ckpt.first_moment) write_entry(w, kFirstMomentPrefix + name, t);
  for (const auto& [name, t] : ckpt.second_moment) write_entry(w, kSecondMomentPrefix + name, t);
  w.str(ckpt.stage);
  w.pod(ckpt.config_hash);
  w.pod(ckpt.epoch);
  w.pod(ckpt.optimizer_step);
  w.pod(static_cast<std::uint32_t>(ckpt.frozen.size()));
  for (const auto& f : ckpt.frozen) w.str(f);
  w.pod(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.str(ckpt.rng_state);
  w.raw(kEndMarker, 4);
  return w.take();
}

ModelCheckpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a GTNB checkpoint (bad magic)");
  }
  Reader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(version) +
                                  " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ModelCheckpoint ckpt;
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw CorruptionError("implausible tensor rank in checkpoint");
    Shape shape(rank);
    std::size_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.pod<std::uint64_t>());
      numel *= d;
    }
    if (numel > (std::size_t{1} << 34)) throw CorruptionError("implausible tensor size");
    std::vector<float> data(numel);
    r.raw(reinterpret_cast<char*>(data.data()), numel * sizeof(float));
    Tensor<float> t(std::move(shape), std::move(data));
    if (name.starts_with(kFirstMomentPrefix)) {
      ckpt.first_moment.emplace(name.substr(std::strlen(kFirstMomentPrefix)), std::move(t));
    } else if (name.starts_with(kSecondMomentPrefix)) {
      ckpt.second_moment.emplace(name.substr(std::strlen(kSecondMomentPrefix)), std::move(t));
    } else {
      ckpt.tensors.emplace(std::move(name), std::move(t));
    }
  }
  ckpt.stage = r.str();
  ckpt.config_hash = r.pod<std::uint64_t>();
  ckpt.epoch = r.pod<std::uint32_t>();
  ckpt.optimizer_step = r.pod<std::uint64_t>();
  const auto frozen = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < frozen; ++i) ckpt.frozen.insert(r.str());
  const auto meta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < meta; ++i) {
    auto k = r.str();
    ckpt.metadata[k] = r.str();
  }
  ckpt.rng_state = r.str();
  char end[4];
  r.raw(end, 4);
  if (std::memcmp(end, kEndMarker, 4) != 0 || !r.at_end()) {
    throw CorruptionError("checkpoint end marker missing");
  }
  return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

ModelCheckpoint load_checkpoint(const std::string& path, const std::string& required_stage) {
  auto ckpt = load_checkpoint(path);
  if (ckpt.stage != required_stage) {
    throw StageMismatchError("checkpoint " + path + " has stage \"" + ckpt.stage +
                             "\", expected \"" + required_stage + "\"");
  }
  return ckpt;
}

}  // namespace gtnb
