// Copyright 2026 The GTNB Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gtnb/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace gtnb::ad {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;

template <typename T>
MapM<T> as_mat(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MapM<T>(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
CMapM<T> as_mat(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return CMapM<T>(t.ptr(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
CMapM<T> as_mat(const Tensor<T>& t) {
  return as_mat(t, t.rows(), t.cols());
}

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Creates a result node. Parents and the backward closure are only kept
// when some parent needs a gradient.
template <typename T>
Var<T> make(Tensor<T> value, std::vector<NodePtr<T>> parents,
            std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad =
      std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void require_rank2(const Var<T>& a, const char* op) {
  if (a.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Elementwise unary op: f computes the output, df(x, y) the local derivative.
template <typename T, typename F, typename DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  Tensor<T> out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  return make<T>(std::move(out), {a.node_ptr()}, [df](Node<T>& self) {
    auto& p = *self.parents[0];
    auto& gp = p.ensure_grad();
    for (std::size_t i = 0; i < gp.numel(); ++i) {
      gp[i] += self.grad[i] * df(p.value[i], self.value[i]);
    }
  });
}

template <typename T>
void accumulate(Node<T>& dst, const Tensor<T>& g) {
  auto& gd = dst.ensure_grad();
  for (std::size_t i = 0; i < gd.numel(); ++i) gd[i] += g[i];
}

}  // namespace

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var<T>(std::move(node));
}

template <typename T>
T Var<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
void Var<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar output, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, bool>> stack{{node_.get(), false}};
  while (!stack.empty()) {
    auto [n, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(n);
      continue;
    }
    if (!seen.insert(n).second) continue;
    stack.emplace_back(n, true);
    for (const auto& p : n->parents) {
      if (p->requires_grad && !seen.count(p.get())) stack.emplace_back(p.get(), false);
    }
  }

  node_->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& n = **it;
    if (n.backward_fn && n.grad.numel() == n.value.numel()) n.backward_fn(n);
  }
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return make<T>(std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) accumulate(*p, self.grad);
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return make<T>(std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node<T>& self) {
    if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
    if (auto& p = *self.parents[1]; p.requires_grad) {
      auto& gp = p.ensure_grad();
      for (std::size_t i = 0; i < gp.numel(); ++i) gp[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return make<T>(std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  require_rank2(a, "add_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (row.numel() != n) {
    throw ShapeError("add_row: row of " + shape_str(row.shape()) + " for matrix " +
                     shape_str(a.shape()));
  }
  Tensor<T> out = a.value();
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) += row.value()[c];
  }
  return make<T>(std::move(out), {a.node_ptr(), row.node_ptr()}, [m, n](Node<T>& self) {
    if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
    if (auto& p = *self.parents[1]; p.requires_grad) {
      auto& g = p.ensure_grad();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad.at(r, c);
      }
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> one_minus(const Var<T>& a) {
  return unary(a, [](T x) { return T{1} - x; }, [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary(
      a, [](T x) { return x > T{0} ? x : T{0}; }, [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary(
      a,
      [](T x) {
        if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
        const T e = std::exp(x);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> gelu(const Var<T>& a) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2 / pi)
  constexpr T k = T(0.044715);
  return unary(
      a, [](T x) { return T(0.5) * x * (T{1} + std::tanh(c * (x + k * x * x * x))); },
      [](T x, T) {
        const T t = std::tanh(c * (x + k * x * x * x));
        return T(0.5) * (T{1} + t) + T(0.5) * x * (T{1} - t * t) * c * (T{1} + T{3} * k * x * x);
      });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T) { return T{2} * x; });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out({m, n});
  as_mat(out, m, n).noalias() = as_mat(a.value()) * as_mat(b.value());
  return make<T>(std::move(out), {a.node_ptr(), b.node_ptr()}, [m, k, n](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto g = as_mat(self.grad, m, n);
    if (pa.requires_grad) {
      as_mat(pa.ensure_grad(), m, k).noalias() += g * as_mat(pb.value, k, n).transpose();
    }
    if (pb.requires_grad) {
      as_mat(pb.ensure_grad(), k, n).noalias() += as_mat(pa.value, m, k).transpose() * g;
    }
  });
}

template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor<T> out({m, n});
  as_mat(out, m, n).noalias() = as_mat(a.value()) * as_mat(b.value()).transpose();
  return make<T>(std::move(out), {a.node_ptr(), b.node_ptr()}, [m, k, n](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto g = as_mat(self.grad, m, n);
    if (pa.requires_grad) as_mat(pa.ensure_grad(), m, k).noalias() += g * as_mat(pb.value, n, k);
    if (pb.requires_grad) {
      as_mat(pb.ensure_grad(), n, k).noalias() += g.transpose() * as_mat(pa.value, m, k);
    }
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out({n, m});
  as_mat(out, n, m) = as_mat(a.value()).transpose();
  return make<T>(std::move(out), {a.node_ptr()}, [m, n](Node<T>& self) {
    as_mat(self.parents[0]->ensure_grad(), m, n) += as_mat(self.grad, n, m).transpose();
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value();
  out.reshape(std::move(shape));
  return make<T>(std::move(out), {a.node_ptr()},
                 [](Node<T>& self) { accumulate(*self.parents[0], self.grad); });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T s{0};
  for (T v : a.value().values()) s += v;
  return make<T>(Tensor<T>({1, 1}, {s}), {a.node_ptr()}, [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g.values()) v += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  if (a.numel() == 0) throw EmptyInputError("mean of empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(a.numel()));
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mse");
  return mean(square(sub(a, b)));
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_rows");
  if (begin > end || end > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t n = a.cols();
  Tensor<T> out({end - begin, n});
  std::copy(a.value().ptr() + begin * n, a.value().ptr() + end * n, out.ptr());
  return make<T>(std::move(out), {a.node_ptr()}, [begin, n](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) g[begin * n + i] += self.grad[i];
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  if (begin > end || end > a.cols()) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  Tensor<T> out({m, w});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(a.value().ptr() + r * n + begin, w, out.ptr() + r * w);
  }
  return make<T>(std::move(out), {a.node_ptr()}, [m, n, w, begin](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < w; ++c) g[r * n + begin + c] += self.grad[r * w + c];
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  std::vector<NodePtr<T>> parents;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != n) throw ShapeError("concat_rows: column mismatch");
    m += p.rows();
    parents.push_back(p.node_ptr());
  }
  Tensor<T> out({m, n});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().ptr(), p.value().ptr() + p.numel(), out.ptr() + offset);
    offset += p.numel();
  }
  return make<T>(std::move(out), std::move(parents), [](Node<T>& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t len = p->value.numel();
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[off + i];
      }
      off += len;
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  std::vector<NodePtr<T>> parents;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != m) throw ShapeError("concat_cols: row mismatch");
    n += p.cols();
    parents.push_back(p.node_ptr());
  }
  Tensor<T> out({m, n});
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < m; ++r) {
      std::copy_n(p.value().ptr() + r * w, w, out.ptr() + r * n + c0);
    }
    c0 += w;
  }
  return make<T>(std::move(out), std::move(parents), [m, n](Node<T>& self) {
    std::size_t c0 = 0;
    for (auto& p : self.parents) {
      const std::size_t w = p->value.cols();
      if (p->requires_grad) {
        auto& g = p->ensure_grad();
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * n + c0 + c];
        }
      }
      c0 += w;
    }
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& table, std::span<const int> indices) {
  require_rank2(table, "gather_rows");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<int> idx(indices.begin(), indices.end());
  Tensor<T> out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= v) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " outside table of " +
                       std::to_string(v) + " rows");
    }
    std::copy_n(table.value().ptr() + static_cast<std::size_t>(idx[i]) * d, d, out.ptr() + i * d);
  }
  return make<T>(std::move(out), {table.node_ptr()}, [idx = std::move(idx), d](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        g[static_cast<std::size_t>(idx[i]) * d + c] += self.grad[i * d + c];
      }
    }
  });
}

template <typename T>
Var<T> avg_pool_rows(const Var<T>& a, std::size_t factor) {
  require_rank2(a, "avg_pool_rows");
  if (factor == 0 || a.rows() % factor != 0) {
    throw ShapeError("avg_pool_rows: " + std::to_string(a.rows()) +
                     " rows not divisible by " + std::to_string(factor));
  }
  const std::size_t m = a.rows() / factor, n = a.cols();
  const T inv = T{1} / static_cast<T>(factor);
  Tensor<T> out({m, n});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) out.at(r / factor, c) += a.value().at(r, c) * inv;
  }
  return make<T>(std::move(out), {a.node_ptr()}, [factor, n, inv](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const std::size_t rows = g.rows();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < n; ++c) g.at(r, c) += self.grad.at(r / factor, c) * inv;
    }
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& a, std::span<const std::uint8_t> allowed) {
  require_rank2(a, "softmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  if (!allowed.empty() && allowed.size() != m * n) throw ShapeError("softmax_rows: mask size");
  Tensor<T> out({m, n});
  for (std::size_t r = 0; r < m; ++r) {
    const T* x = a.value().ptr() + r * n;
    T* y = out.ptr() + r * n;
    auto ok = [&](std::size_t c) { return allowed.empty() || allowed[r * n + c] != 0; };
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (ok(c)) mx = std::max(mx, x[c]);
    }
    if (!std::isfinite(mx)) throw NumericError("softmax_rows: row has no finite allowed entry");
    T total{0};
    for (std::size_t c = 0; c < n; ++c) {
      y[c] = ok(c) ? std::exp(x[c] - mx) : T{0};
      total += y[c];
    }
    for (std::size_t c = 0; c < n; ++c) y[c] /= total;
  }
  return make<T>(std::move(out), {a.node_ptr()}, [m, n](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < m; ++r) {
      const T* y = self.value.ptr() + r * n;
      const T* gy = self.grad.ptr() + r * n;
      T dot{0};
      for (std::size_t c = 0; c < n; ++c) dot += y[c] * gy[c];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (gy[c] - dot);
    }
  });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& probs, const Tensor<T>& target, T eps) {
  if (probs.shape() != target.shape()) {
    throw ShapeError("cross_entropy: " + shape_str(probs.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  T loss{0};
  for (std::size_t i = 0; i < target.numel(); ++i) {
    if (target[i] != T{0}) loss -= target[i] * std::log(std::max(probs.value()[i], eps));
  }
  return make<T>(Tensor<T>({1, 1}, {loss}), {probs.node_ptr()},
                 [target, eps](Node<T>& self) {
                   auto& p = *self.parents[0];
                   auto& g = p.ensure_grad();
                   for (std::size_t i = 0; i < g.numel(); ++i) {
                     if (target[i] != T{0} && p.value[i] >= eps) {
                       g[i] -= self.grad[0] * target[i] / p.value[i];
                     }
                   }
                 });
}

template <typename T>
Var<T> layer_norm_rows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require_rank2(x, "layer_norm_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.numel() != n || beta.numel() != n) throw ShapeError("layer_norm_rows: affine width");
  Tensor<T> out({m, n});
  Tensor<T> xhat({m, n});
  std::vector<T> rstd(m);
  for (std::size_t r = 0; r < m; ++r) {
    const T* xr = x.value().ptr() + r * n;
    T mu{0};
    for (std::size_t c = 0; c < n; ++c) mu += xr[c];
    mu /= static_cast<T>(n);
    T var{0};
    for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<T>(n);
    rstd[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat.at(r, c) = (xr[c] - mu) * rstd[r];
      out.at(r, c) = xhat.at(r, c) * gamma.value()[c] + beta.value()[c];
    }
  }
  return make<T>(
      std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pg.requires_grad || pb.requires_grad) {
          auto& gg = pg.ensure_grad();
          auto& gb = pb.ensure_grad();
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
              gg[c] += self.grad.at(r, c) * xhat.at(r, c);
              gb[c] += self.grad.at(r, c);
            }
          }
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
          std::vector<T> dxhat(n);
          for (std::size_t r = 0; r < m; ++r) {
            T mean_d{0}, mean_dx{0};
            for (std::size_t c = 0; c < n; ++c) {
              dxhat[c] = self.grad.at(r, c) * pg.value[c];
              mean_d += dxhat[c];
              mean_dx += dxhat[c] * xhat.at(r, c);
            }
            mean_d /= static_cast<T>(n);
            mean_dx /= static_cast<T>(n);
            for (std::size_t c = 0; c < n; ++c) {
              gx.at(r, c) += rstd[r] * (dxhat[c] - mean_d - xhat.at(r, c) * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Var<T> stop_gradient(const Var<T>& a) {
  return Var<T>::constant(a.value());
}

template <typename T>
Var<T> straight_through(const Var<T>& latent, const Var<T>& quantized) {
  require_same(latent, quantized, "straight_through");
  return make<T>(quantized.value(), {latent.node_ptr()},
                 [](Node<T>& self) { accumulate(*self.parents[0], self.grad); });
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t kernel,
              std::size_t stride, std::size_t padding) {
  require_rank2(x, "conv1d");
  const std::size_t len = x.rows(), cin = x.cols(), cout = weight.cols();
  if (weight.rows() != kernel * cin || bias.numel() != cout) {
    throw ShapeError("conv1d: weight " + shape_str(weight.shape()) + " for input " +
                     shape_str(x.shape()));
  }
  if (len + 2 * padding < kernel) throw ShapeError("conv1d: input shorter than kernel");
  const std::size_t out_len = (len + 2 * padding - kernel) / stride + 1;
  const std::size_t width = kernel * cin;
  Tensor<T> cols({out_len, width});
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t k = 0; k < kernel; ++k) {
      const auto src = static_cast<std::ptrdiff_t>(t * stride + k) -
                       static_cast<std::ptrdiff_t>(padding);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      std::copy_n(x.value().ptr() + static_cast<std::size_t>(src) * cin, cin,
                  cols.ptr() + t * width + k * cin);
    }
  }
  Tensor<T> out({out_len, cout});
  auto om = as_mat(out, out_len, cout);
  om.noalias() = as_mat(cols, out_len, width) * as_mat(weight.value());
  om.rowwise() += as_mat(bias.value(), 1, cout).row(0);
  return make<T>(
      std::move(out), {x.node_ptr(), weight.node_ptr(), bias.node_ptr()},
      [=, cols = std::move(cols)](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto g = as_mat(self.grad, out_len, cout);
        if (pw.requires_grad) {
          as_mat(pw.ensure_grad(), width, cout).noalias() +=
              as_mat(cols, out_len, width).transpose() * g;
        }
        if (pb.requires_grad) as_mat(pb.ensure_grad(), 1, cout) += g.colwise().sum();
        if (px.requires_grad) {
          Mat<T> dcols = g * as_mat(pw.value, width, cout).transpose();
          auto& gx = px.ensure_grad();
          for (std::size_t t = 0; t < out_len; ++t) {
            for (std::size_t k = 0; k < kernel; ++k) {
              const auto src = static_cast<std::ptrdiff_t>(t * stride + k) -
                               static_cast<std::ptrdiff_t>(padding);
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
              T* dst = gx.ptr() + static_cast<std::size_t>(src) * cin;
              const T* from = dcols.data() + t * width + k * cin;
              for (std::size_t c = 0; c < cin; ++c) dst[c] += from[c];
            }
          }
        }
      });
}

template <typename T>
Var<T> conv_transpose1d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
                        std::size_t kernel, std::size_t stride, std::size_t padding) {
  require_rank2(x, "conv_transpose1d");
  const std::size_t len = x.rows(), cin = x.cols();
  if (weight.rows() != cin || weight.cols() % kernel != 0) {
    throw ShapeError("conv_transpose1d: weight " + shape_str(weight.shape()) + " for input " +
                     shape_str(x.shape()));
  }
  const std::size_t cout = weight.cols() / kernel;
  if (bias.numel() != cout) throw ShapeError("conv_transpose1d: bias width");
  if ((len - 1) * stride + kernel < 2 * padding + 1) throw ShapeError("conv_transpose1d: too short");
  const std::size_t out_len = (len - 1) * stride + kernel - 2 * padding;
  Mat<T> y = as_mat(x.value()) * as_mat(weight.value());
  Tensor<T> out({out_len, cout});
  for (std::size_t r = 0; r < out_len; ++r) {
    for (std::size_t c = 0; c < cout; ++c) out.at(r, c) = bias.value()[c];
  }
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t k = 0; k < kernel; ++k) {
      const auto dst = static_cast<std::ptrdiff_t>(t * stride + k) -
                       static_cast<std::ptrdiff_t>(padding);
      if (dst < 0 || dst >= static_cast<std::ptrdiff_t>(out_len)) continue;
      T* o = out.ptr() + static_cast<std::size_t>(dst) * cout;
      const T* from = y.data() + t * kernel * cout + k * cout;
      for (std::size_t c = 0; c < cout; ++c) o[c] += from[c];
    }
  }
  return make<T>(
      std::move(out), {x.node_ptr(), weight.node_ptr(), bias.node_ptr()}, [=](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          for (std::size_t r = 0; r < out_len; ++r) {
            for (std::size_t c = 0; c < cout; ++c) gb[c] += self.grad.at(r, c);
          }
        }
        Mat<T> dy = Mat<T>::Zero(static_cast<Eigen::Index>(len),
                                 static_cast<Eigen::Index>(kernel * cout));
        for (std::size_t t = 0; t < len; ++t) {
          for (std::size_t k = 0; k < kernel; ++k) {
            const auto dst = static_cast<std::ptrdiff_t>(t * stride + k) -
                             static_cast<std::ptrdiff_t>(padding);
            if (dst < 0 || dst >= static_cast<std::ptrdiff_t>(out_len)) continue;
            const T* gsrc = self.grad.ptr() + static_cast<std::size_t>(dst) * cout;
            T* d = dy.data() + t * kernel * cout + k * cout;
            for (std::size_t c = 0; c < cout; ++c) d[c] = gsrc[c];
          }
        }
        if (pw.requires_grad) {
          as_mat(pw.ensure_grad(), cin, kernel * cout).noalias() +=
              as_mat(px.value, len, cin).transpose() * dy;
        }
        if (px.requires_grad) {
          as_mat(px.ensure_grad(), len, cin).noalias() +=
              dy * as_mat(pw.value, cin, kernel * cout).transpose();
        }
      });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t kernel,
              std::size_t stride, std::size_t padding) {
  if (x.shape().size() != 3) throw ShapeError("conv2d: expected [C, H, W] input");
  const std::size_t cin = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t cout = weight.rows();
  const std::size_t patch = cin * kernel * kernel;
  if (weight.cols() != patch || bias.numel() != cout) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " for input " +
                     shape_str(x.shape()));
  }
  if (h + 2 * padding < kernel || w + 2 * padding < kernel) {
    throw ShapeError("conv2d: input smaller than kernel");
  }
  const std::size_t ho = (h + 2 * padding - kernel) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kernel) / stride + 1;
  const std::size_t npos = ho * wo;

  // cols: [patch, npos]; row index = (ci * K + ky) * K + kx.
  Tensor<T> cols({patch, npos});
  const T* xs = x.value().ptr();
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        T* dst = cols.ptr() + ((ci * kernel + ky) * kernel + kx) * npos;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                          static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                            static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[oy * wo + ox] = xs[(ci * h + static_cast<std::size_t>(iy)) * w +
                                   static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
  Tensor<T> out({cout, ho, wo});
  auto om = as_mat(out, cout, npos);
  om.noalias() = as_mat(weight.value()) * as_mat(cols, patch, npos);
  om.colwise() += as_mat(bias.value(), cout, 1).col(0);
  return make<T>(
      std::move(out), {x.node_ptr(), weight.node_ptr(), bias.node_ptr()},
      [=, cols = std::move(cols)](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto g = as_mat(self.grad, cout, npos);
        if (pw.requires_grad) {
          as_mat(pw.ensure_grad(), cout, patch).noalias() +=
              g * as_mat(cols, patch, npos).transpose();
        }
        if (pb.requires_grad) as_mat(pb.ensure_grad(), cout, 1) += g.rowwise().sum();
        if (px.requires_grad) {
          Mat<T> dcols = as_mat(pw.value, cout, patch).transpose() * g;
          T* gx = px.ensure_grad().ptr();
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t ky = 0; ky < kernel; ++ky) {
              for (std::size_t kx = 0; kx < kernel; ++kx) {
                const T* src = dcols.data() + ((ci * kernel + ky) * kernel + kx) * npos;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                  static_cast<std::ptrdiff_t>(padding);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(padding);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    gx[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                        src[oy * wo + ox];
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax: non-finite logit");
    mx = std::max(mx, v);
  }
  std::vector<T> out(logits.size());
  T total{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

template <typename T>
T cross_entropy(std::span<const T> pred, std::span<const T> target, T eps) {
  if (pred.size() != target.size()) {
    throw ShapeError("cross_entropy: length " + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()));
  }
  T loss{0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (target[i] != T{0}) loss -= target[i] * std::log(std::max(pred[i], eps));
  }
  return loss;
}

#define GTNB_INSTANTIATE(T)                                                                     \
  template class Var<T>;                                                                        \
  template Var<T> add(const Var<T>&, const Var<T>&);                                            \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                            \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                            \
  template Var<T> add_row(const Var<T>&, const Var<T>&);                                        \
  template Var<T> scale(const Var<T>&, T);                                                      \
  template Var<T> one_minus(const Var<T>&);                                                     \
  template Var<T> relu(const Var<T>&);                                                          \
  template Var<T> tanh(const Var<T>&);                                                          \
  template Var<T> sigmoid(const Var<T>&);                                                       \
  template Var<T> gelu(const Var<T>&);                                                          \
  template Var<T> square(const Var<T>&);                                                        \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                         \
  template Var<T> matmul_nt(const Var<T>&, const Var<T>&);                                      \
  template Var<T> transpose(const Var<T>&);                                                     \
  template Var<T> reshape(const Var<T>&, Shape);                                                \
  template Var<T> sum(const Var<T>&);                                                           \
  template Var<T> mean(const Var<T>&);                                                          \
  template Var<T> mse(const Var<T>&, const Var<T>&);                                            \
  template Var<T> slice_rows(const Var<T>&, std::size_t, std::size_t);                          \
  template Var<T> slice_cols(const Var<T>&, std::size_t, std::size_t);                          \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                                      \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                                      \
  template Var<T> gather_rows(const Var<T>&, std::span<const int>);                             \
  template Var<T> avg_pool_rows(const Var<T>&, std::size_t);                                    \
  template Var<T> softmax_rows(const Var<T>&, std::span<const std::uint8_t>);                   \
  template Var<T> cross_entropy(const Var<T>&, const Tensor<T>&, T);                            \
  template Var<T> layer_norm_rows(const Var<T>&, const Var<T>&, const Var<T>&, T);              \
  template Var<T> stop_gradient(const Var<T>&);                                                 \
  template Var<T> straight_through(const Var<T>&, const Var<T>&);                               \
  template Var<T> conv1d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t, \
                         std::size_t);                                                          \
  template Var<T> conv_transpose1d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t,    \
                                   std::size_t, std::size_t);                                   \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t, \
                         std::size_t);                                                          \
  template std::vector<T> softmax(std::span<const T>);                                          \
  template T cross_entropy(std::span<const T>, std::span<const T>, T);

GTNB_INSTANTIATE(float)
GTNB_INSTANTIATE(double)

#undef GTNB_INSTANTIATE

}  // namespace gtnb::ad
