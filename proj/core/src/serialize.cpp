#include "hfsim/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hfsim {

namespace {

[[noreturn]] void truncated(std::size_t offset) {
  throw std::runtime_error("checkpoint: truncated at offset " + std::to_string(offset));
}

void require(bool ok, std::size_t offset, const std::string& what) {
  if (!ok) throw std::runtime_error("checkpoint: " + what + " at offset " + std::to_string(offset));
}

}  // namespace

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void append_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  append_u32(out, bits);
}

std::uint8_t read_u8(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
  if (offset + 1 > bytes.size()) truncated(offset);
  return bytes[offset++];
}

std::uint16_t read_u16(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
  if (offset + 2 > bytes.size()) truncated(offset);
  std::uint16_t v = static_cast<std::uint16_t>(bytes[offset]) | (static_cast<std::uint16_t>(bytes[offset + 1]) << 8);
  offset += 2;
  return v;
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
  if (offset + 4 > bytes.size()) truncated(offset);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + static_cast<std::size_t>(i)]) << (8 * i);
  offset += 4;
  return v;
}

float read_f32(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
  std::uint32_t bits = read_u32(bytes, offset);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void append_tensor_frame(std::vector<std::uint8_t>& out, const std::string& name, const TensorF& tensor) {
  if (name.size() > 0xffff) throw std::invalid_argument("tensor frame: name too long");
  if (tensor.rank() > 0xff) throw std::invalid_argument("tensor frame: rank too large");
  append_u16(out, static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (std::size_t d : tensor.shape) append_u32(out, static_cast<std::uint32_t>(d));
  for (float v : tensor.data) append_f32(out, v);
}

TensorF read_tensor_frame(const std::vector<std::uint8_t>& bytes, std::size_t& offset, std::string& name) {
  std::uint16_t name_len = read_u16(bytes, offset);
  if (offset + name_len > bytes.size()) truncated(offset);
  name.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
              bytes.begin() + static_cast<std::ptrdiff_t>(offset + name_len));
  offset += name_len;
  std::uint8_t rank = read_u8(bytes, offset);
  std::vector<std::size_t> shape;
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint32_t d = read_u32(bytes, offset);
    require(d > 0, offset - 4, "zero dimension");
    shape.push_back(d);
  }
  std::size_t count = shape_product(shape);
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = read_f32(bytes, offset);
  return TensorF(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> params_to_bytes(const ParamSet& params) {
  std::vector<std::uint8_t> out;
  out.push_back('H');
  out.push_back('F');
  out.push_back('S');
  out.push_back('M');
  append_u16(out, kCheckpointVersion);
  append_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params.entries()) append_tensor_frame(out, name, tensor);
  return out;
}

ParamSet params_from_bytes(const std::vector<std::uint8_t>& bytes) {
  std::size_t offset = 0;
  if (bytes.size() < 4) truncated(0);
  require(bytes[0] == 'H' && bytes[1] == 'F' && bytes[2] == 'S' && bytes[3] == 'M', 0, "bad magic");
  offset = 4;
  std::uint16_t version = read_u16(bytes, offset);
  require(version == kCheckpointVersion, 4, "unsupported version " + std::to_string(version));
  std::uint32_t count = read_u32(bytes, offset);
  ParamSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    TensorF t = read_tensor_frame(bytes, offset, name);
    params.add(std::move(name), std::move(t));
  }
  require(offset == bytes.size(), offset, "trailing bytes");
  return params;
}

void save_params(const ParamSet& params, const std::string& path) {
  std::vector<std::uint8_t> bytes = params_to_bytes(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_params: cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("save_params: write failed for '" + path + "'");
}

ParamSet load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_params: cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return params_from_bytes(bytes);
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("fnv1a64_file: cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

}  // namespace hfsim
