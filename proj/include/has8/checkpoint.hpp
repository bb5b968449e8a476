#pragma once

// Binary checkpoint container (little-endian):
//
//   "HAS8"  u32 version  u32 spec_len  spec bytes  u32 count
//   count x { u32 name_len  name  u8 kind(0 param, 1 buffer)  u8 dtype(0 f32, 1 f64)
//             u32 rank  u64 dims[rank]  raw values }

#include <cstdint>
#include <string>
#include <vector>

#include "has8/layers.hpp"

namespace has8 {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, const std::string& spec_echo,
                     const std::vector<ParamRef<T>>& params);

// The config text stored by save_checkpoint.
std::string read_checkpoint_spec(const std::string& path);

// Loads every entry into the tensor of the same name. Names, kinds and shapes
// must match exactly; values stored at the other precision are converted.
// Throws DataError on any mismatch or malformed file.
template <typename T>
void load_checkpoint(const std::string& path, const std::vector<ParamRef<T>>& params);

}  // namespace has8
