#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pairinfer::nk {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Shared-handle dense tensor, row-major. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape.at(i); }
  std::size_t size() const { return d_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return d_->value; }
  std::span<double> mutable_values() { return d_->value; }
  const std::vector<double>& data() const { return d_->value; }

  // Zero-filled span when no gradient has reached this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  double item() const;
  double operator[](std::size_t i) const { return d_->value[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return d_ && d_->requires_grad; }
  void set_requires_grad(bool on) { d_->requires_grad = on; }

  // Deep copy of the values, outside any tape.
  Tensor clone() const;

  TensorData* impl() const { return d_.get(); }
  const std::shared_ptr<TensorData>& handle() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

// Define-by-run record of differentiable ops. Ops record onto the tape made
// active on the current thread through Tape::Scope; with no active tape the
// forward pass runs without bookkeeping.
class Tape {
 public:
  struct Entry {
    std::vector<std::shared_ptr<TensorData>> inputs;
    std::shared_ptr<TensorData> output;
    std::function<void()> backward;
  };

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(Entry entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays entries in reverse recording order.
  // Intermediate gradients are reset first; leaf gradients accumulate.
  void backward(const Tensor& loss);

 private:
  std::vector<Entry> entries_;
};

// Finite-value checking after every forward op. Defaults on in debug builds.
void set_finite_checks(bool enabled);
bool finite_checks();

}  // namespace pairinfer::nk
