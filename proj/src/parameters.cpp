#include "aoa/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "aoa/errors.hpp"

namespace aoa {

void ParameterSet::add(const std::string& name, Tensor t) {
  if (find(name)) throw ConfigError("duplicate parameter name " + name);
  if (!t.requires_grad()) t.set_requires_grad(true);
  entries_.push_back(Entry{name, std::move(t)});
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

const Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e.tensor;
  return nullptr;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw ConfigError("unknown parameter " + name);
  return *t;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

Tensor uniform_fan_in(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape.numel());
  for (auto& x : v) x = dist(rng);
  return Tensor(shape, std::move(v));
}

GradientBuffers::GradientBuffers(const ParameterSet& params) {
  buffers_.reserve(params.size());
  for (const auto& e : params.entries()) buffers_.emplace_back(e.tensor.numel(), 0.0);
}

void GradientBuffers::zero() {
  for (auto& b : buffers_) std::fill(b.begin(), b.end(), 0.0);
}

void GradientBuffers::add(const GradientBuffers& other) {
  for (std::size_t i = 0; i < buffers_.size(); ++i)
    for (std::size_t j = 0; j < buffers_[i].size(); ++j) buffers_[i][j] += other.buffers_[i][j];
}

void GradientBuffers::scale(double s) {
  for (auto& b : buffers_)
    for (auto& x : b) x *= s;
}

GradientSink GradientBuffers::sink(const ParameterSet& params) {
  GradientSink s;
  for (std::size_t i = 0; i < params.size(); ++i) s.bind(params.entries()[i].tensor, buffers_[i]);
  return s;
}

GradientBuffers GradientBuffers::from_params(const ParameterSet& params) {
  GradientBuffers g;
  for (const auto& e : params.entries())
    g.buffers_.emplace_back(e.tensor.grad().begin(), e.tensor.grad().end());
  return g;
}

}  // namespace aoa
