/*
 * Copyright 2026 The ltvit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "core/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <map>

#include "core/error.hpp"

namespace ltvit {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
      out_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
  void f32(double v) { uint(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size())
      fail(ErrorKind::kTruncated, "checkpoint truncated at byte " + std::to_string(pos_));
  }
  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(uint<std::uint32_t>())); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<unsigned char>& in_;
  std::size_t pos_ = 0;
};

double narrow(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

Checkpoint make_checkpoint(const RunConfig& config, const Parameters& params,
                           const OptimState* optim) {
  Checkpoint ckpt;
  ckpt.config = parse_run_config(serialize_run_config(config, false));
  params.visit([&](std::string_view name, const Tensor& t) {
    std::vector<double> data(t.data().begin(), t.data().end());
    for (double& v : data) v = narrow(v);
    ckpt.tensors.emplace_back(std::string(name), Tensor(t.shape(), std::move(data)));
  });
  if (optim) {
    ckpt.optim = *optim;
    ckpt.step = optim->step;
  }
  return ckpt;
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes("LTCK", 4);
  w.uint<std::uint16_t>(kCheckpointVersion);
  const std::string text = serialize_run_config(ckpt.config, false);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes(text.data(), text.size());
  w.uint<std::uint64_t>(ckpt.step);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > 0xffff) fail(ErrorKind::kFormat, "tensor name too long");
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) w.uint<std::uint32_t>(static_cast<std::uint32_t>(e));
    for (double v : t.data()) w.f32(v);
  }
  w.uint<std::uint8_t>(ckpt.optim ? 1 : 0);
  if (ckpt.optim) {
    const OptimState& o = *ckpt.optim;
    if (o.m.size() != ckpt.tensors.size() || o.v.size() != ckpt.tensors.size())
      fail(ErrorKind::kFormat, "optimizer state does not cover every tensor");
    w.uint<std::uint64_t>(o.step);
    for (std::size_t i = 0; i < o.m.size(); ++i) {
      if (o.m[i].size() != ckpt.tensors[i].second.size() ||
          o.v[i].size() != ckpt.tensors[i].second.size())
        fail(ErrorKind::kFormat, "optimizer moments for '" + ckpt.tensors[i].first +
                                     "' have the wrong size");
      for (double v : o.m[i]) w.f64(v);
      for (double v : o.v[i]) w.f64(v);
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) != "LTCK")
    fail(ErrorKind::kBadMagic, "bad magic (expected LTCK)");
  r.need(6);
  r.str(4);
  const auto version = r.uint<std::uint16_t>();
  if (version != kCheckpointVersion)
    fail(ErrorKind::kBadVersion, "unsupported LTCK version " + std::to_string(version));

  Checkpoint ckpt;
  const auto text_len = r.uint<std::uint32_t>();
  ckpt.config = parse_run_config(r.str(text_len));
  ckpt.step = r.uint<std::uint64_t>();
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.uint<std::uint16_t>();
    std::string name = r.str(name_len);
    const auto rank = r.uint<std::uint8_t>();
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape.push_back(r.uint<std::uint32_t>());
      if (shape.back() == 0) fail(ErrorKind::kFormat, "zero extent in tensor '" + name + "'");
    }
    const std::size_t n = shape_size(shape);
    r.need(n * 4);
    std::vector<double> data(n);
    for (double& v : data) v = r.f32();
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  const auto has_optim = r.uint<std::uint8_t>();
  if (has_optim > 1) fail(ErrorKind::kFormat, "invalid optimizer flag");
  if (has_optim) {
    OptimState o;
    o.hp = ckpt.config.schedule.adam;
    o.step = r.uint<std::uint64_t>();
    for (const auto& [name, t] : ckpt.tensors) {
      r.need(t.size() * 16);
      std::vector<double> m(t.size()), v(t.size());
      for (double& x : m) x = r.f64();
      for (double& x : v) x = r.f64();
      o.m.push_back(std::move(m));
      o.v.push_back(std::move(v));
    }
    ckpt.optim = std::move(o);
  }
  if (!r.done()) fail(ErrorKind::kFormat, "trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::kIo, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(e.what()) + " in " + path.string());
  }
}

namespace {

bool same_architecture(ModelConfig a, ModelConfig b) {
  a.dropout = b.dropout = 0.0;
  return a == b;
}

}  // namespace

Parameters parameters_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& model) {
  if (!same_architecture(ckpt.config.model, model))
    fail(ErrorKind::kConfig,
         "checkpoint model config does not match:\n" + serialize_run_config(ckpt.config, false));
  Parameters p = allocate_parameters(model);
  std::size_t i = 0;
  p.visit([&](std::string_view name, Tensor& t) {
    if (i >= ckpt.tensors.size() || ckpt.tensors[i].first != name)
      fail(ErrorKind::kConfig, "checkpoint is missing tensor '" + std::string(name) + "'");
    const Tensor& src = ckpt.tensors[i].second;
    if (src.shape() != t.shape())
      fail(ErrorKind::kConfig, "tensor '" + std::string(name) + "' has shape " +
                                   shape_string(src.shape()) + ", model expects " +
                                   shape_string(t.shape()));
    std::copy(src.data().begin(), src.data().end(), t.data().begin());
    ++i;
  });
  if (i != ckpt.tensors.size())
    fail(ErrorKind::kConfig, "checkpoint holds tensors the model does not use");
  return p;
}

Parameters transfer_parameters(const Checkpoint& source, const ModelConfig& target,
                               std::uint64_t seed, TransferReport* report) {
  std::map<std::string, const Tensor*, std::less<>> by_name;
  for (const auto& [name, t] : source.tensors) by_name.emplace(name, &t);
  Parameters p = init_parameters(target, seed);
  TransferReport local;
  p.visit([&](std::string_view name, Tensor& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      local.fresh.emplace_back(name);
      return;
    }
    if (it->second->shape() != t.shape())
      fail(ErrorKind::kConfig, "cannot transfer '" + std::string(name) + "': checkpoint shape " +
                                   shape_string(it->second->shape()) + ", model expects " +
                                   shape_string(t.shape()));
    std::copy(it->second->data().begin(), it->second->data().end(), t.data().begin());
    local.loaded.emplace_back(name);
  });
  if (report) *report = std::move(local);
  return p;
}

}  // namespace ltvit
