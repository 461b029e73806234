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

#include "finecf/weights_io.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "finecf/errors.h"
#include "finecf/hashing.h"

namespace finecf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'C', 'W', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void WritePod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadPod(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw IoError("truncated checkpoint " + path.string());
  }
  return value;
}

struct StoredTensor {
  std::vector<int64_t> dims;
  std::vector<double> values;
};

std::map<std::string, StoredTensor> ReadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (ReadPod<uint32_t>(in, path) != kVersion) {
    throw IoError("unsupported checkpoint version in " + path.string());
  }
  const uint64_t count = ReadPod<uint64_t>(in, path);
  std::map<std::string, StoredTensor> stored;
  for (uint64_t t = 0; t < count; ++t) {
    const uint32_t name_length = ReadPod<uint32_t>(in, path);
    std::string name(name_length, '\0');
    if (!in.read(name.data(), name_length)) throw IoError("truncated checkpoint " + path.string());
    StoredTensor tensor;
    const uint32_t ndim = ReadPod<uint32_t>(in, path);
    int64_t elements = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      tensor.dims.push_back(ReadPod<int64_t>(in, path));
      elements *= tensor.dims.back();
    }
    const uint8_t dtype = ReadPod<uint8_t>(in, path);
    tensor.values.resize(elements);
    if (dtype == 1) {
      if (!in.read(reinterpret_cast<char*>(tensor.values.data()), elements * sizeof(double))) {
        throw IoError("truncated checkpoint " + path.string());
      }
    } else if (dtype == 0) {
      std::vector<float> raw(elements);
      if (!in.read(reinterpret_cast<char*>(raw.data()), elements * sizeof(float))) {
        throw IoError("truncated checkpoint " + path.string());
      }
      for (int64_t i = 0; i < elements; ++i) tensor.values[i] = raw[i];
    } else {
      throw IoError("unknown dtype in checkpoint " + path.string());
    }
    stored.emplace(std::move(name), std::move(tensor));
  }
  return stored;
}

}  // namespace

void SaveParameters(const std::filesystem::path& path,
                    const std::vector<nn::ParameterRef>& params) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, 4);
    WritePod(out, kVersion);
    WritePod(out, static_cast<uint64_t>(params.size()));
    for (const auto& p : params) {
      WritePod(out, static_cast<uint32_t>(p.name.size()));
      out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      WritePod(out, static_cast<uint32_t>(p.dims.size()));
      for (int64_t d : p.dims) WritePod(out, d);
      WritePod(out, static_cast<uint8_t>(1));
      out.write(reinterpret_cast<const char*>(p.values->data()),
                static_cast<std::streamsize>(p.values->size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<int64_t> CheckpointTensorDims(const std::filesystem::path& path,
                                          const std::string& name) {
  const auto stored = ReadCheckpoint(path);
  auto it = stored.find(name);
  return it == stored.end() ? std::vector<int64_t>{} : it->second.dims;
}

void LoadParameters(const std::filesystem::path& path,
                    const std::vector<nn::ParameterRef>& params) {
  const auto stored = ReadCheckpoint(path);

  for (const auto& p : params) {
    auto it = stored.find(p.name);
    if (it == stored.end()) {
      throw ConfigError("checkpoint " + path.string() + " lacks parameter " + p.name);
    }
    if (it->second.dims != p.dims) {
      throw ConfigError("shape mismatch for parameter " + p.name + " in " + path.string());
    }
    *p.values = it->second.values;
  }
}

std::string ParameterHash(const std::vector<nn::ParameterRef>& params) {
  std::vector<unsigned char> bytes;
  for (const auto& p : params) {
    bytes.insert(bytes.end(), p.name.begin(), p.name.end());
    const auto* raw = reinterpret_cast<const unsigned char*>(p.values->data());
    bytes.insert(bytes.end(), raw, raw + p.values->size() * sizeof(double));
  }
  return Sha256Hex(bytes);
}

}  // namespace finecf
