/*
 * Copyright 2026 The finecf Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <atomic>
#include <bit>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "finecf/data_hub.h"
#include "finecf/errors.h"
#include "finecf/hashing.h"

namespace finecf {

namespace {

constexpr char kMagic[4] = {'F', 'C', 'C', 'A'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kLittleEndian = 1;
constexpr uint8_t kFloat64 = 1;
constexpr std::size_t kHashLength = 64;

template <typename T>
void Append(std::string* buffer, const T& value) {
  buffer->append(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  bool Read(T* value) {
    if (offset_ + sizeof(T) > bytes_.size()) return false;
    std::memcpy(value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return true;
  }
  bool ReadBytes(std::size_t count, std::string* out) {
    if (offset_ + count > bytes_.size()) return false;
    out->assign(bytes_.data() + offset_, count);
    offset_ += count;
    return true;
  }
  std::size_t offset() const { return offset_; }

 private:
  std::string_view bytes_;
  std::size_t offset_ = 0;
};

std::string UniqueSuffix() {
  static std::atomic<uint64_t> counter{0};
  std::ostringstream s;
  s << ".tmp." << ::getpid() << "." << std::hash<std::thread::id>{}(std::this_thread::get_id())
    << "." << counter.fetch_add(1);
  return s.str();
}

}  // namespace

std::string CacheKey::Canonical() const {
  for (const std::string* field : {&model_id, &dataset_id, &subject_id, &kind}) {
    if (field->empty() || field->find_first_of("|\n") != std::string::npos) {
      throw ValidationError("malformed cache key field '" + *field + "'");
    }
  }
  return model_id + "|" + dataset_id + "|" + subject_id + "|" + kind;
}

ArrayCache::ArrayCache(std::filesystem::path root) : root_(std::move(root)) {}

ArrayCache ArrayCache::FromEnvironment(const std::filesystem::path& fallback) {
  const char* from_env = std::getenv(kCacheEnvironmentVariable);
  return ArrayCache(from_env && *from_env ? std::filesystem::path(from_env) : fallback);
}

std::filesystem::path ArrayCache::PathFor(const CacheKey& key) const {
  return root_ / (Sha256Hex(key.Canonical()).substr(0, 40) + ".fca");
}

CacheEntry ArrayCache::Put(const CacheKey& key, const ArrayPayload& payload) const {
  static_assert(std::endian::native == std::endian::little);
  const std::string canonical = key.Canonical();
  int64_t elements = 1;
  for (int64_t d : payload.shape) elements *= d;
  if (elements != static_cast<int64_t>(payload.values.size())) {
    throw ValidationError("cache payload shape does not match its value count");
  }
  std::string buffer(kMagic, 4);
  Append(&buffer, kVersion);
  Append(&buffer, kLittleEndian);
  Append(&buffer, kFloat64);
  Append(&buffer, static_cast<uint32_t>(canonical.size()));
  buffer += canonical;
  Append(&buffer, static_cast<uint32_t>(payload.shape.size()));
  for (int64_t d : payload.shape) Append(&buffer, d);
  buffer.append(reinterpret_cast<const char*>(payload.values.data()),
                payload.values.size() * sizeof(double));
  const std::string hash = Sha256Hex(buffer);
  buffer += hash;

  std::filesystem::create_directories(root_);
  const std::filesystem::path path = PathFor(key);
  const std::filesystem::path tmp = path.string() + UniqueSuffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache file " + tmp.string());
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (!out) throw IoError("failed writing cache file " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
  return {key, path, hash};
}

std::optional<ArrayPayload> ArrayCache::Get(const CacheKey& key) const {
  const std::string canonical = key.Canonical();
  const std::filesystem::path path = PathFor(key);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream content;
  content << in.rdbuf();
  in.close();
  const std::string bytes = content.str();

  auto evict = [&](const std::string& reason) -> std::optional<ArrayPayload> {
    spdlog::warn("evicting cache entry {} ({})", path.string(), reason);
    std::error_code ignored;
    std::filesystem::remove(path, ignored);
    return std::nullopt;
  };

  if (bytes.size() < kHashLength + 4) return evict("truncated");
  const std::string_view body(bytes.data(), bytes.size() - kHashLength);
  if (Sha256Hex(body) != bytes.substr(bytes.size() - kHashLength)) {
    return evict("content hash mismatch");
  }
  Reader reader(body);
  std::string magic;
  uint32_t version = 0;
  uint8_t endianness = 0, dtype = 0;
  uint32_t key_length = 0;
  std::string stored_key;
  if (!reader.ReadBytes(4, &magic) || magic != std::string(kMagic, 4) ||
      !reader.Read(&version) || version != kVersion || !reader.Read(&endianness) ||
      endianness != kLittleEndian || !reader.Read(&dtype) || dtype != kFloat64 ||
      !reader.Read(&key_length) || !reader.ReadBytes(key_length, &stored_key)) {
    return evict("malformed header");
  }
  if (stored_key != canonical) return std::nullopt;
  uint32_t ndim = 0;
  if (!reader.Read(&ndim)) return evict("malformed header");
  ArrayPayload payload;
  int64_t elements = 1;
  for (uint32_t d = 0; d < ndim; ++d) {
    int64_t dim = 0;
    if (!reader.Read(&dim) || dim < 0) return evict("malformed shape");
    payload.shape.push_back(dim);
    elements *= dim;
  }
  if (reader.offset() + elements * sizeof(double) != body.size()) return evict("size mismatch");
  payload.values.resize(elements);
  std::memcpy(payload.values.data(), body.data() + reader.offset(), elements * sizeof(double));
  return payload;
}

}  // namespace finecf
