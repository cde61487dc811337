#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace aoa {

// Dimension sizes of a rank 1..3 tensor.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t numel() const;
  const std::vector<std::size_t>& dims() const { return dims_; }

  // Matrix view: a rank-1 tensor of length n is a single 1 x n row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::string str() const;
  bool operator==(const Shape& other) const = default;

 private:
  std::vector<std::size_t> dims_;
};

class Tape;

namespace detail {

struct Storage {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t tape_id = 0;
};

using StoragePtr = std::shared_ptr<Storage>;

// out: forward value of the node. gout: its adjoint. gin[i]: adjoint buffer
// of input i, or nullptr when that input does not participate.
using BackwardFn = std::function<void(std::span<const double> out, const double* gout,
                                      std::span<double* const> gin)>;

}  // namespace detail

// Dense row-major float64 tensor. Copies share storage; use clone() for a
// deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& shape, double fill = 0.0);
  Tensor(const Shape& shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor identity(std::size_t n);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().rank(); }
  std::size_t numel() const { return shape().numel(); }
  std::size_t rows() const { return shape().rows(); }
  std::size_t cols() const { return shape().cols(); }

  std::span<const double> data() const;
  // Mutable access to values; only meaningful for leaves.
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;
  void zero_grad();

  // Deep copy of the values as a fresh leaf without gradient.
  Tensor clone() const;
  Tensor detach() const { return clone(); }
  std::vector<double> to_vector() const;

  const detail::StoragePtr& storage() const { return s_; }
  explicit Tensor(detail::StoragePtr s) : s_(std::move(s)) {}

 private:
  detail::StoragePtr s_;
};

// Redirects leaf gradients into caller-owned buffers during Tape::backward.
// Used to give each worker thread private gradient accumulators while the
// parameters themselves stay shared and read-only.
class GradientSink {
 public:
  void bind(const Tensor& leaf, std::span<double> buffer);
  double* find(const detail::Storage* leaf) const;
  void clear() { slots_.clear(); }

 private:
  std::unordered_map<const detail::Storage*, std::span<double>> slots_;
};

// Records differentiable operations executed on this thread while alive.
// Construction makes the tape the thread's active tape; destruction restores
// the previously active one. Operations executed with no active tape produce
// constants.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();
  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d(loss)/d(leaf) into every participating leaf. Calling it
  // again without clear() accumulates a second time into leaves.
  void backward(const Tensor& loss);

  // Drops all recorded nodes and zeroes non-leaf gradients.
  void clear();

  void set_sink(const GradientSink* sink) { sink_ = sink; }

  // Whether `s` carries gradient information on this tape.
  bool tracks(const detail::Storage& s) const;

  void record(std::vector<detail::StoragePtr> inputs, detail::StoragePtr output,
              detail::BackwardFn fn);

 private:
  struct Node {
    std::vector<detail::StoragePtr> inputs;
    detail::StoragePtr output;
    detail::BackwardFn backward;
  };

  std::uint64_t id_;
  Tape* previous_;
  std::vector<Node> nodes_;
  const GradientSink* sink_ = nullptr;
};

// Suspends recording on this thread (inference).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* saved_;
};

namespace detail {

// True when an op over `inputs` would be recorded on the active tape.
bool any_tracked(std::initializer_list<const Tensor*> inputs);

// Creates an op result; records a node on the active tape if any input
// carries gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   BackwardFn fn);

}  // namespace detail

}  // namespace aoa
