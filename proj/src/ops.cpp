#include "pairinfer/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "pairinfer/errors.hpp"

namespace pairinfer::nk {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void check_finite(const Tensor& t, const char* op) {
  if (!finite_checks()) return;
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

Tensor make_output(Shape shape, std::vector<double> values, bool track, const char* op) {
  Tensor out(std::move(shape), std::move(values), track);
  check_finite(out, op);
  return out;
}

template <class Fn>
void record(std::initializer_list<const Tensor*> inputs, const Tensor& out, Fn&& backward) {
  Tape::Entry e;
  for (const auto* t : inputs) e.inputs.push_back(t->handle());
  e.output = out.handle();
  e.backward = std::forward<Fn>(backward);
  Tape::active()->record(std::move(e));
}

// Lazily-sized gradient buffer of an input, or nullptr if it takes none.
std::vector<double>* grad_of(const std::shared_ptr<TensorData>& d) {
  if (!d->requires_grad) return nullptr;
  d->ensure_grad();
  return &d->grad;
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a matrix, got " + to_string(x.shape()));
  }
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  const auto& xv = x.data();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
  bool track = tracking({&x});
  Tensor out = make_output(x.shape(), std::move(y), track, name);
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    record({&x}, out, [xd, od, deriv] {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < od->value.size(); ++i) {
        (*gx)[i] += od->grad[i] * deriv(xd->value[i], od->value[i]);
      }
    });
  }
  return out;
}

// Shared forward for masked/unmasked softmax and logsumexp along an axis.
void check_mask(const Tensor& x, const Mask* mask) {
  if (mask && mask->size() != x.size()) {
    throw ShapeError("mask size " + std::to_string(mask->size()) + " does not match tensor " +
                     to_string(x.shape()));
  }
}

Tensor softmax_impl(const Tensor& x, std::size_t axis, const Mask* mask) {
  auto s = split_axis(x.shape(), axis);
  check_mask(x, mask);
  const auto& xv = x.data();
  std::vector<double> y(xv.size(), 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      auto idx = [&](std::size_t i) { return (o * s.n + i) * s.inner + j; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.n; ++i) {
        if (mask && !(*mask)[idx(i)]) continue;
        mx = std::max(mx, xv[idx(i)]);
      }
      if (mx == -std::numeric_limits<double>::infinity()) {
        throw ShapeError("softmax: a slice has every entry masked out");
      }
      double z = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) {
        if (mask && !(*mask)[idx(i)]) continue;
        double e = std::exp(xv[idx(i)] - mx);
        y[idx(i)] = e;
        z += e;
      }
      for (std::size_t i = 0; i < s.n; ++i) y[idx(i)] /= z;
    }
  }
  bool track = tracking({&x});
  Tensor out = make_output(x.shape(), std::move(y), track, "softmax");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    record({&x}, out, [xd, od, s] {
      auto* gx = grad_of(xd);
      const auto& yv = od->value;
      const auto& gy = od->grad;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.inner; ++j) {
          double dot = 0.0;
          for (std::size_t i = 0; i < s.n; ++i) {
            auto k = (o * s.n + i) * s.inner + j;
            dot += gy[k] * yv[k];
          }
          for (std::size_t i = 0; i < s.n; ++i) {
            auto k = (o * s.n + i) * s.inner + j;
            (*gx)[k] += yv[k] * (gy[k] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor logsumexp_impl(const Tensor& x, std::size_t axis, const Mask* mask) {
  auto s = split_axis(x.shape(), axis);
  check_mask(x, mask);
  if (s.n == 0) throw ShapeError("logsumexp over an empty axis");
  const auto& xv = x.data();
  std::vector<double> y(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.inner; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.n; ++i) {
        auto k = (o * s.n + i) * s.inner + j;
        if (mask && !(*mask)[k]) continue;
        mx = std::max(mx, xv[k]);
      }
      if (mx == -std::numeric_limits<double>::infinity()) {
        throw ShapeError("logsumexp: a slice has every entry masked out");
      }
      double z = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) {
        auto k = (o * s.n + i) * s.inner + j;
        if (mask && !(*mask)[k]) continue;
        z += std::exp(xv[k] - mx);
      }
      y[o * s.inner + j] = mx + std::log(z);
    }
  }
  bool track = tracking({&x});
  Tensor out = make_output(drop_axis(x.shape(), axis), std::move(y), track, "logsumexp");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    Mask m = mask ? *mask : Mask{};
    record({&x}, out, [xd, od, s, m] {
      auto* gx = grad_of(xd);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.inner; ++j) {
          double lse = od->value[o * s.inner + j];
          double g = od->grad[o * s.inner + j];
          for (std::size_t i = 0; i < s.n; ++i) {
            auto k = (o * s.n + i) * s.inner + j;
            if (!m.empty() && !m[k]) continue;
            (*gx)[k] += g * std::exp(xd->value[k] - lse);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op) {
  require_same_shape(a, b, "elementwise");
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> y(av.size());
  switch (op) {
    case BinaryOp::add:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
      break;
    case BinaryOp::sub:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
      break;
    case BinaryOp::mul:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
      break;
  }
  bool track = tracking({&a, &b});
  Tensor out = make_output(a.shape(), std::move(y), track, "elementwise");
  if (track) {
    auto ad = a.handle();
    auto bd = b.handle();
    auto od = out.handle();
    record({&a, &b}, out, [ad, bd, od, op] {
      const auto& g = od->grad;
      auto* ga = grad_of(ad);
      auto* gb = grad_of(bd);
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case BinaryOp::add:
            if (ga) (*ga)[i] += g[i];
            if (gb) (*gb)[i] += g[i];
            break;
          case BinaryOp::sub:
            if (ga) (*ga)[i] += g[i];
            if (gb) (*gb)[i] -= g[i];
            break;
          case BinaryOp::mul:
            if (ga) (*ga)[i] += g[i] * bd->value[i];
            if (gb) (*gb)[i] += g[i] * ad->value[i];
            break;
        }
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row");
  const std::size_t r = x.rows(), c = x.cols();
  if (bias.size() != c) {
    throw ShapeError("add_row: bias of size " + std::to_string(bias.size()) + " for " +
                     std::to_string(c) + " columns");
  }
  std::vector<double> y(x.data());
  const auto& bv = bias.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] += bv[j];
  }
  bool track = tracking({&x, &bias});
  Tensor out = make_output(x.shape(), std::move(y), track, "add_row");
  if (track) {
    auto xd = x.handle();
    auto bd = bias.handle();
    auto od = out.handle();
    record({&x, &bias}, out, [xd, bd, od, r, c] {
      const auto& g = od->grad;
      if (auto* gx = grad_of(xd)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
      }
      if (auto* gb = grad_of(bd)) {
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g[i * c + j];
        }
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<double> y(m * n);
  MapMat(y.data(), m, n).noalias() =
      ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  bool track = tracking({&a, &b});
  Tensor out = make_output({m, n}, std::move(y), track, "matmul");
  if (track) {
    auto ad = a.handle();
    auto bd = b.handle();
    auto od = out.handle();
    record({&a, &b}, out, [ad, bd, od, m, k, n] {
      ConstMapMat g(od->grad.data(), m, n);
      if (auto* ga = grad_of(ad)) {
        MapMat(ga->data(), m, k).noalias() += g * ConstMapMat(bd->value.data(), k, n).transpose();
      }
      if (auto* gb = grad_of(bd)) {
        MapMat(gb->data(), k, n).noalias() += ConstMapMat(ad->value.data(), m, k).transpose() * g;
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> y(r * c);
  MapMat(y.data(), c, r) = ConstMapMat(x.data().data(), r, c).transpose();
  bool track = tracking({&x});
  Tensor out = make_output({c, r}, std::move(y), track, "transpose");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    record({&x}, out, [xd, od, r, c] {
      auto* gx = grad_of(xd);
      MapMat(gx->data(), r, c) += ConstMapMat(od->grad.data(), c, r).transpose();
    });
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double a = 0.044715;
  return unary(
      x, "gelu",
      [](double v) { return 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v))); },
      [](double v, double) {
        double t = std::tanh(c * (v + a * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * a * v * v);
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) { return softmax_impl(x, axis, nullptr); }
Tensor softmax(const Tensor& x, std::size_t axis, const Mask& mask) {
  return softmax_impl(x, axis, &mask);
}

Tensor logsumexp(const Tensor& x, std::size_t axis) { return logsumexp_impl(x, axis, nullptr); }
Tensor logsumexp(const Tensor& x, std::size_t axis, const Mask& mask) {
  return logsumexp_impl(x, axis, &mask);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError("layer_norm: gain/bias length must equal last axis " + std::to_string(d));
  }
  const std::size_t rows = x.size() / d;
  const auto& xv = x.data();
  const auto& gv = gain.data();
  const auto& bv = bias.data();
  std::vector<double> y(xv.size()), xhat(xv.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      double h = (row[j] - mu) * is;
      xhat[r * d + j] = h;
      y[r * d + j] = gv[j] * h + bv[j];
    }
  }
  bool track = tracking({&x, &gain, &bias});
  Tensor out = make_output(x.shape(), std::move(y), track, "layer_norm");
  if (track) {
    auto xd = x.handle();
    auto gd = gain.handle();
    auto bd = bias.handle();
    auto od = out.handle();
    record({&x, &gain, &bias}, out,
           [xd, gd, bd, od, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
             const auto& g = od->grad;
             auto* gx = grad_of(xd);
             auto* gg = grad_of(gd);
             auto* gb = grad_of(bd);
             std::vector<double> dh(d);
             for (std::size_t r = 0; r < rows; ++r) {
               double mean_dh = 0.0, mean_dh_h = 0.0;
               for (std::size_t j = 0; j < d; ++j) {
                 auto k = r * d + j;
                 if (gg) (*gg)[j] += g[k] * xhat[k];
                 if (gb) (*gb)[j] += g[k];
                 dh[j] = g[k] * gd->value[j];
                 mean_dh += dh[j];
                 mean_dh_h += dh[j] * xhat[k];
               }
               if (!gx) continue;
               mean_dh /= static_cast<double>(d);
               mean_dh_h /= static_cast<double>(d);
               for (std::size_t j = 0; j < d; ++j) {
                 auto k = r * d + j;
                 (*gx)[k] += inv_std[r] * (dh[j] - mean_dh - xhat[k] * mean_dh_h);
               }
             }
           });
  }
  return out;
}

Tensor stop_gradient(const Tensor& x) { return Tensor(x.shape(), x.data()); }

Tensor concat(std::span<const Tensor> xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = xs[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<AxisSplit> splits;
  for (const auto& t : xs) {
    if (t.rank() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && t.shape()[i] != first[i]) {
        throw ShapeError("concat: shape mismatch " + to_string(first) + " vs " +
                         to_string(t.shape()));
      }
    }
    out_shape[axis] += t.shape()[axis];
    splits.push_back(split_axis(t.shape(), axis));
  }
  const std::size_t outer = splits[0].outer;
  const std::size_t inner = splits[0].inner;
  const std::size_t total = out_shape[axis];
  std::vector<double> y(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const auto& v = xs[t].data();
    const std::size_t block = splits[t].n * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * block, block, y.data() + (o * total + offset) * inner);
    }
    offset += splits[t].n;
  }
  bool track = false;
  if (Tape::active()) {
    for (const auto& t : xs) track = track || t.requires_grad();
  }
  Tensor out = make_output(out_shape, std::move(y), track, "concat");
  if (track) {
    Tape::Entry e;
    std::vector<std::shared_ptr<TensorData>> ins;
    std::vector<std::size_t> lens;
    for (const auto& t : xs) {
      ins.push_back(t.handle());
      lens.push_back(t.shape()[axis]);
    }
    e.inputs = ins;
    e.output = out.handle();
    auto od = out.handle();
    e.backward = [ins, lens, od, outer, inner, total] {
      std::size_t off = 0;
      for (std::size_t t = 0; t < ins.size(); ++t) {
        const std::size_t block = lens[t] * inner;
        if (auto* g = grad_of(ins[t])) {
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = od->grad.data() + (o * total + off) * inner;
            double* dst = g->data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        off += lens[t];
      }
    };
    Tape::active()->record(std::move(e));
  }
  return out;
}

Tensor concat(std::initializer_list<Tensor> xs, std::size_t axis) {
  return concat(std::span<const Tensor>(xs.begin(), xs.size()), axis);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  auto s = split_axis(x.shape(), axis);
  if (length == 0 || start + length > s.n) throw ShapeError("slice out of range");
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> y(numel(out_shape));
  const auto& xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + (o * s.n + start) * s.inner, length * s.inner,
                y.data() + o * length * s.inner);
  }
  bool track = tracking({&x});
  Tensor out = make_output(out_shape, std::move(y), track, "slice");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    record({&x}, out, [xd, od, s, start, length] {
      auto* gx = grad_of(xd);
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src = od->grad.data() + o * length * s.inner;
        double* dst = gx->data() + (o * s.n + start) * s.inner;
        for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  bool track = tracking({&x});
  Tensor out = make_output(std::move(shape), x.data(), track, "reshape");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    record({&x}, out, [xd, od] {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < od->grad.size(); ++i) (*gx)[i] += od->grad[i];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  if (index.empty()) throw ShapeError("gather_rows with an empty index");
  const std::size_t rows = x.dim(0);
  const std::size_t width = x.size() / rows;
  Shape out_shape = x.shape();
  out_shape[0] = index.size();
  std::vector<double> y(index.size() * width);
  const auto& xv = x.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " >= " +
                       std::to_string(rows));
    }
    std::copy_n(xv.data() + index[i] * width, width, y.data() + i * width);
  }
  bool track = tracking({&x});
  Tensor out = make_output(out_shape, std::move(y), track, "gather_rows");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    std::vector<std::size_t> idx(index.begin(), index.end());
    record({&x}, out, [xd, od, idx = std::move(idx), width] {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* src = od->grad.data() + i * width;
        double* dst = gx->data() + idx[i] * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> index, std::size_t total_rows) {
  const std::size_t n = x.dim(0);
  if (index.size() != n) throw ShapeError("scatter_rows: index length differs from row count");
  const std::size_t width = x.size() / n;
  Shape out_shape = x.shape();
  out_shape[0] = total_rows;
  std::vector<double> y(total_rows * width, 0.0);
  const auto& xv = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= total_rows) throw ShapeError("scatter_rows: index out of range");
    for (std::size_t j = 0; j < width; ++j) y[index[i] * width + j] += xv[i * width + j];
  }
  bool track = tracking({&x});
  Tensor out = make_output(out_shape, std::move(y), track, "scatter_rows");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    std::vector<std::size_t> idx(index.begin(), index.end());
    record({&x}, out, [xd, od, idx = std::move(idx), width] {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) (*gx)[i * width + j] += od->grad[idx[i] * width + j];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  bool track = tracking({&x});
  Tensor out = make_output({1}, {s}, track, "sum");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    record({&x}, out, [xd, od] {
      auto* gx = grad_of(xd);
      for (auto& g : *gx) g += od->grad[0];
    });
  }
  return out;
}

Tensor sum(const Tensor& x, std::size_t axis) {
  auto s = split_axis(x.shape(), axis);
  const auto& xv = x.data();
  std::vector<double> y(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.n; ++i) {
      for (std::size_t j = 0; j < s.inner; ++j) {
        y[o * s.inner + j] += xv[(o * s.n + i) * s.inner + j];
      }
    }
  }
  bool track = tracking({&x});
  Tensor out = make_output(drop_axis(x.shape(), axis), std::move(y), track, "sum");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    record({&x}, out, [xd, od, s] {
      auto* gx = grad_of(xd);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.n; ++i) {
          for (std::size_t j = 0; j < s.inner; ++j) {
            (*gx)[(o * s.n + i) * s.inner + j] += od->grad[o * s.inner + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor mean(const Tensor& x, std::size_t axis) {
  return scale(sum(x, axis), 1.0 / static_cast<double>(x.shape().at(axis)));
}

Tensor normalize_rows(const Tensor& x, double eps) {
  require_matrix(x, "normalize_rows");
  const std::size_t r = x.rows(), c = x.cols();
  const auto& xv = x.data();
  std::vector<double> y(xv.size());
  std::vector<double> sums(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += xv[i * c + j];
    sums[i] = s;
    for (std::size_t j = 0; j < c; ++j) {
      y[i * c + j] = s < eps ? 1.0 / static_cast<double>(c) : xv[i * c + j] / s;
    }
  }
  bool track = tracking({&x});
  Tensor out = make_output(x.shape(), std::move(y), track, "normalize_rows");
  if (track) {
    auto xd = x.handle();
    auto od = out.handle();
    record({&x}, out, [xd, od, sums = std::move(sums), r, c, eps] {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < r; ++i) {
        if (sums[i] < eps) continue;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += od->grad[i * c + j] * od->value[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          (*gx)[i * c + j] += (od->grad[i * c + j] - dot) / sums[i];
        }
      }
    });
  }
  return out;
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  require_matrix(a, "cosine_rows");
  require_same_shape(a, b, "cosine_rows");
  const std::size_t r = a.rows(), c = a.cols();
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> y(r), na(r), nb(r);
  for (std::size_t i = 0; i < r; ++i) {
    double dot = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      dot += av[i * c + j] * bv[i * c + j];
      sa += av[i * c + j] * av[i * c + j];
      sb += bv[i * c + j] * bv[i * c + j];
    }
    if (sa == 0.0 || sb == 0.0) throw NumericError("cosine of a zero-norm vector");
    na[i] = std::sqrt(sa);
    nb[i] = std::sqrt(sb);
    y[i] = dot / (na[i] * nb[i]);
  }
  bool track = tracking({&a, &b});
  Tensor out = make_output({r}, std::move(y), track, "cosine_rows");
  if (track) {
    auto ad = a.handle();
    auto bd = b.handle();
    auto od = out.handle();
    record({&a, &b}, out, [ad, bd, od, na = std::move(na), nb = std::move(nb), r, c] {
      auto* ga = grad_of(ad);
      auto* gb = grad_of(bd);
      for (std::size_t i = 0; i < r; ++i) {
        double g = od->grad[i];
        double cs = od->value[i];
        for (std::size_t j = 0; j < c; ++j) {
          auto k = i * c + j;
          double ua = ad->value[k], ub = bd->value[k];
          if (ga) (*ga)[k] += g * (ub / (na[i] * nb[i]) - cs * ua / (na[i] * na[i]));
          if (gb) (*gb)[k] += g * (ua / (na[i] * nb[i]) - cs * ub / (nb[i] * nb[i]));
        }
      }
    });
  }
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  double dot = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    sa += a[i] * a[i];
    sb += b[i] * b[i];
  }
  if (sa == 0.0 || sb == 0.0) throw NumericError("cosine of a zero-norm vector");
  return dot / (std::sqrt(sa) * std::sqrt(sb));
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine");
  auto ra = reshape(a, {1, a.size()});
  auto rb = reshape(b, {1, b.size()});
  return cosine_rows(ra, rb);
}

}  // namespace pairinfer::nk
