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

// Checkpoint file: little-endian "FCWT" container of named tensors.
//
//   magic "FCWT" | u32 version (1) | u64 tensor count
//   per tensor: u32 name length | name | u32 ndim | i64 dims[ndim]
//               | u8 dtype (0 = f32, 1 = f64) | raw values
//
// tools/export_torchvision.py writes the same layout from a torch state_dict.

#ifndef FINECF_WEIGHTS_IO_H_
#define FINECF_WEIGHTS_IO_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "finecf/nn.h"

namespace finecf {

// Writes every parameter as f64 through a temp file and atomic rename.
void SaveParameters(const std::filesystem::path& path,
                    const std::vector<nn::ParameterRef>& params);

// Fills every parameter from the file. Extra tensors in the file (e.g.
// num_batches_tracked) are ignored. Throws IoError if the file is missing or
// truncated, ConfigError on a missing name or shape mismatch.
void LoadParameters(const std::filesystem::path& path,
                    const std::vector<nn::ParameterRef>& params);

// Dims of one named tensor in a checkpoint, or empty if absent.
std::vector<int64_t> CheckpointTensorDims(const std::filesystem::path& path,
                                          const std::string& name);

// Hash over all parameter names and values in collection order.
std::string ParameterHash(const std::vector<nn::ParameterRef>& params);

}  // namespace finecf

#endif  // FINECF_WEIGHTS_IO_H_
