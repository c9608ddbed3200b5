#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hfsim/param_set.hpp"
#include "hfsim/tensor.hpp"

namespace hfsim {

enum class MessageKind : std::uint8_t {
  Weights = 1,
  Gradients = 2,
  Activations = 3,
  ActivationGrads = 4,
  Latents = 5,
};

/// Serialized cross-node payload. All simulated traffic between institutions
/// and the server moves through these frames so byte counts are real.
/// Wire layout: kind tag u8, round u32, then the checkpoint tensor framing.
struct Message {
  MessageKind kind = MessageKind::Weights;
  std::uint32_t round = 0;
  std::string source;
  std::string destination;
  std::vector<std::uint8_t> payload;

  std::size_t total_bytes() const { return 1 + 4 + payload.size(); }
};

Message make_param_message(MessageKind kind, std::uint32_t round, const ParamSet& params, std::string source,
                           std::string destination);
ParamSet params_from_message(const Message& message);

Message make_tensor_message(MessageKind kind, std::uint32_t round, const std::string& name, const TensorF& tensor,
                            std::string source, std::string destination);
TensorF tensor_from_message(const Message& message, std::string* name = nullptr);

/// Opaque payload (e.g. a latent-record file image).
Message make_blob_message(MessageKind kind, std::uint32_t round, std::vector<std::uint8_t> blob, std::string source,
                          std::string destination);

/// f32 data bytes inside a tensor message payload (excludes framing).
std::size_t tensor_payload_data_bytes(const TensorF& tensor);

std::vector<std::uint8_t> encode_message(const Message& message);
Message decode_message(const std::vector<std::uint8_t>& bytes);

}  // namespace hfsim
