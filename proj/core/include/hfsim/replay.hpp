#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "hfsim/autoencoder.hpp"
#include "hfsim/codebook.hpp"
#include "hfsim/dataset.hpp"
#include "hfsim/federation.hpp"
#include "hfsim/message.hpp"
#include "hfsim/training_log.hpp"

namespace hfsim {

/// One stored latent with its label and source. Discrete records hold the
/// two quantizer index grids (CWT+Replay); continuous records hold a raw
/// cut-layer feature map (FedReplay).
struct LatentRecord {
  enum class Kind : std::uint8_t { Discrete = 0, Continuous = 1 };
  Kind kind = Kind::Discrete;
  float label = 0.0f;
  std::size_t origin_institution = 0;
  IndexGrid top;        // discrete, dims {g, g}
  IndexGrid bottom;     // discrete, dims {g, g}
  TensorF feature_map;  // continuous, per-sample {C, H, W}

  bool operator==(const LatentRecord&) const = default;
};

/// Stored latents plus the frozen decoder used to synthesize from them.
struct ReplayBuffer {
  std::vector<LatentRecord> records;
  DecoderSnapshot decoder;
  bool has_decoder = false;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

/// Decode a batch of stored records through the buffer's decoder snapshot.
/// An empty selection returns an empty batch (the first institution in the
/// serial pass has no prior latents).
std::pair<TensorF, TensorF> synthesize_replay(const ReplayBuffer& buffer,
                                              const std::vector<std::size_t>& record_indices);

/// Serial generator training: visits institutions in order, each time mixing
/// real batches with replays decoded through the previous decoder snapshot,
/// then re-encodes the union with the updated encoders to refresh the buffer.
ReplayBuffer train_generator_serial(std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                                    QuantizedAutoencoder& ae, const StrategyConfig& cfg, TrainingLog& log);

/// CWT over union batches: every local step trains on {replayed, real}.
/// Degenerates to plain CWT when the buffer is empty.
ParamSet train_classifier_with_replay(std::vector<InstitutionNode>& nodes, const LabeledDataset& ds,
                                      const ModelGraph& model, const ParamSet& initial, const ReplayBuffer& buffer,
                                      const StrategyConfig& cfg, TrainingLog& log,
                                      std::vector<ParamSet>* checkpoints = nullptr);

/// One pass of the frozen encoder over the node's local data; one latents
/// message carries all records to the server.
struct ExtractResult {
  std::vector<LatentRecord> records;
  Message message;
};

ExtractResult fedreplay_client_extract(const InstitutionNode& node, const LabeledDataset& ds,
                                       const ModelGraph& encoder, const ParamSet& encoder_params);

/// Canonicalize the union of all institutions' records (sort by label then
/// serialized payload, origin excluded; then one server-seeded shuffle) and
/// train the tail network on it. The result depends only on the union
/// multiset, not the partitioning.
ParamSet fedreplay_server_train(const std::vector<std::vector<LatentRecord>>& per_institution_records,
                                const ModelGraph& tail, const StrategyConfig& cfg, std::uint64_t server_seed,
                                TrainingLog& log);

/// Train the full task model on one institution's data, split at cut_index,
/// return the frozen head (the auxiliary encoder).
struct EncoderTrainResult {
  ModelGraph head;
  ParamSet head_params;
  ParamSet full_params;  // full model at the moment of splitting
};

EncoderTrainResult train_encoder_at_institution(InstitutionNode& node, const LabeledDataset& ds,
                                                const ModelGraph& full_model, std::size_t cut_index,
                                                const StrategyConfig& cfg);

/// Latent record file: magic "HFLT", version u16, task flag u8 (0 = class
/// labels as u32, 1 = float labels), record count u32; per record the label,
/// a kind tag u8, then index grids (u16 entries) or f32 feature maps, each
/// framed with a u8 rank and u32 dims. Origin is per-file, not per-record.
std::vector<std::uint8_t> latent_records_to_bytes(const std::vector<LatentRecord>& records, bool float_labels);
std::vector<LatentRecord> latent_records_from_bytes(const std::vector<std::uint8_t>& bytes,
                                                    std::size_t origin_institution);
void save_latent_records(const std::vector<LatentRecord>& records, bool float_labels, const std::string& path);
std::vector<LatentRecord> load_latent_records(const std::string& path, std::size_t origin_institution);

/// Per-record canonical payload (label + kind + grids, origin excluded);
/// the sort key for fedreplay_server_train.
std::vector<std::uint8_t> canonical_record_bytes(const LatentRecord& record);

}  // namespace hfsim
