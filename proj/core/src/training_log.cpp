#include "hfsim/training_log.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hfsim {

void TrainingLog::append(LogRecord record) {
  if (record.round < last_round_) {
    throw std::invalid_argument("TrainingLog: round " + std::to_string(record.round) +
                                " is earlier than last logged round " + std::to_string(last_round_));
  }
  last_round_ = record.round;
  records_.push_back(std::move(record));
}

void TrainingLog::extend(const TrainingLog& other) {
  for (const auto& r : other.records_) append(r);
}

std::size_t TrainingLog::total_bytes(const std::string& phase_prefix) const {
  std::size_t total = 0;
  for (const auto& r : records_) {
    if (r.phase.rfind(phase_prefix, 0) == 0) total += r.bytes_sent;
  }
  return total;
}

std::string TrainingLog::to_csv() const {
  std::ostringstream os;
  os << "round,institution,phase,loss,metric,bytes_sent,seed\n";
  os.precision(9);
  for (const auto& r : records_) {
    os << r.round << ',' << r.institution << ',' << r.phase << ',' << r.loss << ',';
    if (r.has_metric) os << r.metric;
    os << ',' << r.bytes_sent << ',' << r.seed << "\n";
  }
  return os.str();
}

void TrainingLog::save_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("TrainingLog: cannot open '" + path + "'");
  out << to_csv();
  if (!out) throw std::runtime_error("TrainingLog: write failed for '" + path + "'");
}

}  // namespace hfsim
