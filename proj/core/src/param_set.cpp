#include "hfsim/param_set.hpp"

#include <algorithm>
#include <stdexcept>

namespace hfsim {

void ParamSet::add(std::string name, TensorF tensor) {
  if (index_.count(name)) throw std::invalid_argument("ParamSet: duplicate name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(tensor));
}

TensorF& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamSet: no entry named '" + name + "'");
  return entries_[it->second].second;
}

const TensorF& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamSet: no entry named '" + name + "'");
  return entries_[it->second].second;
}

bool ParamSet::compatible_with(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (entries_[i].second.shape != other.entries_[i].second.shape) return false;
  }
  return true;
}

std::size_t ParamSet::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, TensorF::zeros(t.shape));
  return out;
}

void ParamSet::axpy(float scale, const ParamSet& other) {
  if (!compatible_with(other)) throw std::invalid_argument("ParamSet::axpy: incompatible sets");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i].second.data;
    const auto& src = other.entries_[i].second.data;
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
  }
}

std::vector<float> ParamSet::flatten() const {
  std::vector<float> out;
  out.reserve(element_count());
  for (const auto& [name, t] : entries_) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

float param_distance(const ParamSet& a, const ParamSet& b) {
  if (!a.compatible_with(b)) throw std::invalid_argument("param_distance: incompatible ParamSets");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    m = std::max(m, max_abs_diff(a.entries()[i].second, b.entries()[i].second));
  }
  return m;
}

}  // namespace hfsim
