#include "aoa/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <sstream>

#include "aoa/errors.hpp"

namespace aoa {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 3) {
    throw DimensionError("tensor rank must be 1..3, got " + std::to_string(dims_.size()));
  }
}

std::size_t Shape::numel() const {
  if (dims_.empty()) return 0;
  return std::accumulate(dims_.begin(), dims_.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t Shape::rows() const {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i) r *= dims_[i];
  return r;
}

std::size_t Shape::cols() const { return dims_.empty() ? 0 : dims_.back(); }

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << 'x';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------

Tensor::Tensor(const Shape& shape, double fill) : s_(std::make_shared<detail::Storage>()) {
  s_->shape = shape;
  s_->value.assign(shape.numel(), fill);
}

Tensor::Tensor(const Shape& shape, std::vector<double> values)
    : s_(std::make_shared<detail::Storage>()) {
  if (values.size() != shape.numel()) {
    throw DimensionError("tensor " + shape.str() + " needs " + std::to_string(shape.numel()) +
                         " values, got " + std::to_string(values.size()));
  }
  s_->shape = shape;
  s_->value = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.s_->value[i * n + i] = 1.0;
  return t;
}

const Shape& Tensor::shape() const {
  if (!s_) throw ContractError("use of undefined tensor");
  return s_->shape;
}

std::span<const double> Tensor::data() const {
  if (!s_) throw ContractError("use of undefined tensor");
  return s_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!s_) throw ContractError("use of undefined tensor");
  return s_->value;
}

std::span<const double> Tensor::grad() const {
  if (!s_) throw ContractError("use of undefined tensor");
  return s_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!s_) throw ContractError("use of undefined tensor");
  return s_->grad;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape().str());
  return s_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const std::size_t n = cols();
  if (r >= rows() || c >= n) throw DimensionError("index out of range for " + shape().str());
  return s_->value[r * n + c];
}

bool Tensor::requires_grad() const { return s_ && s_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!s_) throw ContractError("use of undefined tensor");
  if (!s_->is_leaf) throw ContractError("requires_grad can only be set on leaf tensors");
  s_->requires_grad = on;
  if (on) {
    s_->grad.assign(s_->value.size(), 0.0);
  } else {
    s_->grad.clear();
  }
  return *this;
}

bool Tensor::is_leaf() const { return s_ && s_->is_leaf; }

void Tensor::zero_grad() {
  if (s_) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(shape(), s_->value); }

std::vector<double> Tensor::to_vector() const { return std::vector<double>(data().begin(), data().end()); }

// ---------------------------------------------------------------------------

void GradientSink::bind(const Tensor& leaf, std::span<double> buffer) {
  if (buffer.size() != leaf.numel()) {
    throw DimensionError("gradient buffer of size " + std::to_string(buffer.size()) +
                         " for leaf " + leaf.shape().str());
  }
  slots_[leaf.storage().get()] = buffer;
}

double* GradientSink::find(const detail::Storage* leaf) const {
  auto it = slots_.find(leaf);
  return it == slots_.end() ? nullptr : it->second.data();
}

namespace {

thread_local Tape* g_active = nullptr;
std::atomic<std::uint64_t> g_next_tape_id{1};

}  // namespace

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)), previous_(g_active) { g_active = this; }

Tape::~Tape() {
  // Outputs that outlive the tape become plain constants.
  for (auto& n : nodes_) n.output->tape_id = 0;
  if (g_active == this) g_active = previous_;
}

Tape* Tape::active() { return g_active; }

bool Tape::tracks(const detail::Storage& s) const {
  if (s.is_leaf) return s.requires_grad;
  return s.tape_id == id_;
}

void Tape::record(std::vector<detail::StoragePtr> inputs, detail::StoragePtr output,
                  detail::BackwardFn fn) {
  output->is_leaf = false;
  output->tape_id = id_;
  output->grad.assign(output->value.size(), 0.0);
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  const auto& ls = loss.storage();
  if (!ls) throw ContractError("backward on undefined tensor");
  if (ls->value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + ls->shape.str());
  }
  if (!tracks(*ls)) throw ContractError("loss is not reachable from this tape");

  for (auto& n : nodes_) std::fill(n.output->grad.begin(), n.output->grad.end(), 0.0);

  auto grad_buffer = [this](detail::Storage& s) -> double* {
    if (!tracks(s)) return nullptr;
    if (s.is_leaf && sink_) {
      if (double* p = sink_->find(&s)) return p;
    }
    return s.grad.data();
  };

  if (double* g = grad_buffer(*ls)) g[0] += 1.0;

  std::vector<double*> gin;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    gin.clear();
    for (auto& in : it->inputs) gin.push_back(grad_buffer(*in));
    it->backward(it->output->value, it->output->grad.data(), gin);
  }
}

void Tape::clear() {
  for (auto& n : nodes_) {
    std::fill(n.output->grad.begin(), n.output->grad.end(), 0.0);
    n.output->tape_id = 0;
  }
  nodes_.clear();
}

NoGradScope::NoGradScope() : saved_(g_active) { g_active = nullptr; }
NoGradScope::~NoGradScope() { g_active = saved_; }

namespace detail {

bool any_tracked(std::initializer_list<const Tensor*> inputs) {
  const Tape* tape = Tape::active();
  if (!tape) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && tape->tracks(*t->storage())) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   BackwardFn fn) {
  auto out = std::make_shared<Storage>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  Tape* tape = Tape::active();
  if (tape) {
    bool tracked = false;
    for (const auto& t : inputs) tracked = tracked || tape->tracks(*t.storage());
    if (tracked) {
      std::vector<StoragePtr> ins;
      ins.reserve(inputs.size());
      for (auto& t : inputs) ins.push_back(t.storage());
      tape->record(std::move(ins), out, std::move(fn));
    }
  }
  return Tensor(std::move(out));
}

}  // namespace detail

}  // namespace aoa
