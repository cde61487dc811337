#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "aoa/tensor.hpp"

namespace aoa {

// Ordered, named collection of trainable leaves. Names are dotted paths such
// as "encoder.layer0.aoa.W_g_q"; order is registration order and is what the
// checkpoint format and the optimizer iterate over.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  // Registers `t` (marking it as requiring gradient). Names must be unique.
  void add(const std::string& name, Tensor t);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;
  const Tensor* find(const std::string& name) const;
  const Tensor& at(const std::string& name) const;

  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

// Fan-in scaled uniform initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor uniform_fan_in(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng);

// Per-parameter flat gradient buffers, laid out like a ParameterSet.
class GradientBuffers {
 public:
  GradientBuffers() = default;
  explicit GradientBuffers(const ParameterSet& params);

  std::vector<double>& operator[](std::size_t i) { return buffers_[i]; }
  const std::vector<double>& operator[](std::size_t i) const { return buffers_[i]; }
  std::size_t size() const { return buffers_.size(); }

  void zero();
  void add(const GradientBuffers& other);
  void scale(double s);
  // Sink that routes the parameters' gradients into these buffers.
  GradientSink sink(const ParameterSet& params);
  // Copies each parameter's own accumulated gradient.
  static GradientBuffers from_params(const ParameterSet& params);

 private:
  std::vector<std::vector<double>> buffers_;
};

}  // namespace aoa
