// Copyright 2026 The flsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flsim/container.hpp"

#include <cstring>
#include <fstream>

namespace flsim {

namespace {

constexpr char kMagic[4] = {'F', 'L', 'S', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    check(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    check(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string str(std::size_t n) {
    check(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void check(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw ContainerError("container truncated at byte " + std::to_string(pos_));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Container::find(const std::string& name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor& Container::require(const std::string& name) const {
  const Tensor* t = find(name);
  if (t == nullptr) throw ContainerError("container is missing entry '" + name + "'");
  return *t;
}

std::vector<std::uint8_t> serialize_container(const Container& c) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  const std::string meta = c.meta.dump();
  put_u64(out, meta.size());
  out.insert(out.end(), meta.begin(), meta.end());
  put_u64(out, c.entries.size());
  for (const auto& [name, tensor] : c.entries) {
    put_u64(out, name.size());
    out.insert(out.end(), name.begin(), name.end());
    put_u64(out, tensor.rank());
    for (std::size_t d : tensor.shape) put_u64(out, d);
    for (double v : tensor.data) put_f64(out, v);
  }
  return out;
}

Container parse_container(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::string magic = r.str(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw ContainerError("bad container magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw ContainerError("unsupported container version " + std::to_string(version));
  }
  Container c;
  const std::uint64_t meta_len = r.u64();
  const std::string meta = r.str(meta_len);
  c.meta = nlohmann::json::parse(meta);
  const std::uint64_t n = r.u64();
  c.entries.reserve(n);
  for (std::uint64_t e = 0; e < n; ++e) {
    const std::uint64_t name_len = r.u64();
    std::string name = r.str(name_len);
    const std::uint64_t ndim = r.u64();
    std::vector<std::size_t> shape(ndim);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = r.u64();
      count *= d;
    }
    std::vector<double> data(count);
    for (auto& v : data) v = r.f64();
    c.entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw ContainerError("trailing bytes after container payload");
  return c;
}

void write_container(const Container& c, const std::string& path) {
  const auto bytes = serialize_container(c);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ContainerError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ContainerError("write failed for '" + path + "'");
}

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContainerError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return parse_container(bytes);
}

std::string bytes_digest(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = hex[h & 0xf];
    h >>= 4;
  }
  return s;
}

std::string container_digest(const Container& c) {
  return bytes_digest(serialize_container(c));
}

}  // namespace flsim
