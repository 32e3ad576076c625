#include "pairinfer/tensor.hpp"

#include <sstream>

#include "pairinfer/errors.hpp"

namespace pairinfer::nk {

namespace {
thread_local Tape* g_active_tape = nullptr;
#ifdef NDEBUG
thread_local bool g_finite_checks = false;
#else
thread_local bool g_finite_checks = true;
#endif
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : d_(std::make_shared<TensorData>()) {
  for (auto s : shape) {
    if (s == 0) throw ShapeError("tensor dimensions must be positive: " + to_string(shape));
  }
  if (numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  d_->shape = std::move(shape);
  d_->value = std::move(values);
  d_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double v) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + to_string(shape()));
  return d_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + to_string(shape()));
  return d_->shape[1];
}

std::span<const double> Tensor::grad() const {
  d_->ensure_grad();
  return d_->grad;
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on a tensor of shape " + to_string(shape()));
  return d_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return d_->value[r * cols() + c];
}

Tensor Tensor::clone() const { return Tensor(d_->shape, d_->value); }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + to_string(loss.shape()));
  }
  for (auto& e : entries_) {
    e.output->ensure_grad();
    std::fill(e.output->grad.begin(), e.output->grad.end(), 0.0);
  }
  auto* root = loss.impl();
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

}  // namespace pairinfer::nk
