#include "hfsim/message.hpp"

#include <stdexcept>

#include "hfsim/serialize.hpp"

namespace hfsim {

Message make_param_message(MessageKind kind, std::uint32_t round, const ParamSet& params, std::string source,
                           std::string destination) {
  Message m;
  m.kind = kind;
  m.round = round;
  m.source = std::move(source);
  m.destination = std::move(destination);
  m.payload = params_to_bytes(params);
  return m;
}

ParamSet params_from_message(const Message& message) { return params_from_bytes(message.payload); }

Message make_tensor_message(MessageKind kind, std::uint32_t round, const std::string& name, const TensorF& tensor,
                            std::string source, std::string destination) {
  Message m;
  m.kind = kind;
  m.round = round;
  m.source = std::move(source);
  m.destination = std::move(destination);
  append_tensor_frame(m.payload, name, tensor);
  return m;
}

TensorF tensor_from_message(const Message& message, std::string* name) {
  std::size_t offset = 0;
  std::string n;
  TensorF t = read_tensor_frame(message.payload, offset, n);
  if (offset != message.payload.size()) {
    throw std::runtime_error("tensor_from_message: trailing bytes at offset " + std::to_string(offset));
  }
  if (name) *name = std::move(n);
  return t;
}

Message make_blob_message(MessageKind kind, std::uint32_t round, std::vector<std::uint8_t> blob, std::string source,
                          std::string destination) {
  Message m;
  m.kind = kind;
  m.round = round;
  m.source = std::move(source);
  m.destination = std::move(destination);
  m.payload = std::move(blob);
  return m;
}

std::size_t tensor_payload_data_bytes(const TensorF& tensor) { return tensor.size() * 4; }

std::vector<std::uint8_t> encode_message(const Message& message) {
  std::vector<std::uint8_t> out;
  out.push_back(static_cast<std::uint8_t>(message.kind));
  append_u32(out, message.round);
  out.insert(out.end(), message.payload.begin(), message.payload.end());
  return out;
}

Message decode_message(const std::vector<std::uint8_t>& bytes) {
  std::size_t offset = 0;
  Message m;
  std::uint8_t kind = read_u8(bytes, offset);
  if (kind < 1 || kind > 5) throw std::runtime_error("decode_message: unknown kind tag " + std::to_string(kind));
  m.kind = static_cast<MessageKind>(kind);
  m.round = read_u32(bytes, offset);
  m.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return m;
}

}  // namespace hfsim
