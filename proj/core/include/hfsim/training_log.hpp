#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

namespace hfsim {

/// Append-only per-round records. CSV columns:
/// round,institution,phase,loss,metric,bytes_sent,seed
struct LogRecord {
  std::size_t round = 0;
  std::string institution;
  std::string phase;
  double loss = 0.0;
  double metric = 0.0;
  bool has_metric = false;
  std::size_t bytes_sent = 0;
  std::uint64_t seed = 0;
};

class TrainingLog {
 public:
  void append(LogRecord record);
  const std::vector<LogRecord>& records() const { return records_; }
  void extend(const TrainingLog& other);

  /// Sum of bytes_sent over records matching the phase prefix ("" = all).
  std::size_t total_bytes(const std::string& phase_prefix = "") const;

  std::string to_csv() const;
  void save_csv(const std::string& path) const;

 private:
  std::vector<LogRecord> records_;
  std::size_t last_round_ = 0;
};

}  // namespace hfsim
