#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hfsim/param_set.hpp"
#include "hfsim/tensor.hpp"

namespace hfsim {

/// Checkpoint file layout (all integers little-endian):
///   magic "HFSM", version u16, tensor count u32, then per tensor:
///   name length u16, UTF-8 name, rank u8, dims u32 each, payload f32 each.
/// Round-trips are byte-identical.

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_params(const ParamSet& params, const std::string& path);
ParamSet load_params(const std::string& path);

std::vector<std::uint8_t> params_to_bytes(const ParamSet& params);
ParamSet params_from_bytes(const std::vector<std::uint8_t>& bytes);

/// Single-tensor framing (the per-tensor section of the checkpoint format),
/// reused by federation messages and latent files.
void append_tensor_frame(std::vector<std::uint8_t>& out, const std::string& name, const TensorF& tensor);
TensorF read_tensor_frame(const std::vector<std::uint8_t>& bytes, std::size_t& offset, std::string& name);

// Primitive little-endian helpers shared by the wire formats.
void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void append_f32(std::vector<std::uint8_t>& out, float v);
std::uint16_t read_u16(const std::vector<std::uint8_t>& bytes, std::size_t& offset);
std::uint32_t read_u32(const std::vector<std::uint8_t>& bytes, std::size_t& offset);
float read_f32(const std::vector<std::uint8_t>& bytes, std::size_t& offset);
std::uint8_t read_u8(const std::vector<std::uint8_t>& bytes, std::size_t& offset);

/// 64-bit FNV-1a, used for manifest content hashes and determinism checks.
std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes);
std::uint64_t fnv1a64_file(const std::string& path);

}  // namespace hfsim
