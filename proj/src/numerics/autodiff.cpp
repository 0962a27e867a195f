#include "aimm/numerics/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

namespace aimm {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace aimm

namespace aimm::ad {
namespace {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
MatMap<T> as_mat(Tensor<T>& t) {
  return MatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}
template <typename T>
ConstMatMap<T> as_mat(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents,
                 std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (auto& p : parents) {
    n->requires_grad = n->requires_grad || p.requires_grad();
    n->parents.push_back(p.ptr());
  }
  if (n->requires_grad) n->backward = std::move(backward_fn);
  return Var<T>(std::move(n));
}

template <typename T>
Node<T>& parent(Node<T>& self, std::size_t i) {
  return *self.parents[i];
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

template <typename T>
void require_matrix(const Var<T>& a, const char* op) {
  require(a.value().rank() == 2, std::string(op) + ": expected a matrix, got " +
                                     shape_string(a.shape()));
}

}  // namespace

template <typename T>
void backward(const Var<T>& root) {
  require(root.value().size() == 1, "backward: root must be a scalar");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{&root.node(), 0}};
  seen.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  if (!root.node().requires_grad) return;
  root.node().grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  require(a.cols() == b.rows(), "matmul: inner dimensions disagree " + shape_string(a.shape()) +
                                    " · " + shape_string(b.shape()));
  Tensor<T> out({a.rows(), b.cols()});
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value());
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    const auto g = as_mat(std::as_const(self.grad));
    if (A.requires_grad) as_mat(A.grad_buffer()).noalias() += g * as_mat(B.value).transpose();
    if (B.requires_grad) as_mat(B.grad_buffer()).noalias() += as_mat(A.value).transpose() * g;
  });
}

template <typename T>
Var<T> matmul_bt(const Var<T>& a, const Var<T>& b) {
  require_matrix(a, "matmul_bt");
  require_matrix(b, "matmul_bt");
  require(a.cols() == b.cols(), "matmul_bt: inner dimensions disagree");
  Tensor<T> out({a.rows(), b.rows()});
  as_mat(out).noalias() = as_mat(a.value()) * as_mat(b.value()).transpose();
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    const auto g = as_mat(std::as_const(self.grad));
    if (A.requires_grad) as_mat(A.grad_buffer()).noalias() += g * as_mat(B.value);
    if (B.requires_grad) as_mat(B.grad_buffer()).noalias() += g.transpose() * as_mat(A.value);
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  require_matrix(a, "transpose");
  Tensor<T> out({a.cols(), a.rows()});
  as_mat(out) = as_mat(a.value()).transpose();
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    as_mat(parent(self, 0).grad_buffer()) += as_mat(std::as_const(self.grad)).transpose();
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& P = parent(self, p);
      if (!P.requires_grad) continue;
      auto& g = P.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_node<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& A = parent(self, 0);
    auto& B = parent(self, 1);
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x *= s;
  return make_node<T>(std::move(out), {a}, [s](Node<T>& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

template <typename T>
Var<T> add_row(const Var<T>& a, const Var<T>& bias) {
  require(bias.value().size() == a.cols(), "add_row: bias length " +
                                               std::to_string(bias.value().size()) +
                                               " does not match " + std::to_string(a.cols()));
  Tensor<T> out = a.value();
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % n];
  return make_node<T>(std::move(out), {a, bias}, [n](Node<T>& self) {
    auto& A = parent(self, 0);
    auto& Bi = parent(self, 1);
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (Bi.requires_grad) {
      auto& g = Bi.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, const Var<T>& s) {
  require(s.value().size() == 1, "mul_scalar: scale must hold one element");
  Tensor<T> out = a.value();
  const T k = s.value()[0];
  for (auto& x : out.values()) x *= k;
  return make_node<T>(std::move(out), {a, s}, [](Node<T>& self) {
    auto& A = parent(self, 0);
    auto& S = parent(self, 1);
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * S.value[0];
    }
    if (S.requires_grad) {
      T acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * A.value[i];
      S.grad_buffer()[0] += acc;
    }
  });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& x : out.values()) x = std::exp(x);
  return make_node<T>(std::move(out), {a}, [](Node<T>& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
  });
}

// tanh approximation
template <typename T>
Var<T> gelu(const Var<T>& a) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  Tensor<T> out = a.value();
  Tensor<T> th(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = out[i];
    th[i] = std::tanh(kC * (x + kA * x * x * x));
    out[i] = T(0.5) * x * (T(1) + th[i]);
  }
  return make_node<T>(std::move(out), {a}, [th = std::move(th)](Node<T>& self) {
    auto& P = parent(self, 0);
    auto& g = P.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = P.value[i];
      const T t = th[i];
      const T d = T(0.5) * (T(1) + t) +
                  T(0.5) * x * (T(1) - t * t) * kC * (T(1) + T(3) * kA * x * x);
      g[i] += self.grad[i] * d;
    }
  });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = a.value();
  for (std::size_t r = 0; r < m; ++r) {
    T* row = out.data() + r * n;
    const T mx = *std::max_element(row, row + n);
    T total = 0;
    for (std::size_t c = 0; c < n; ++c) {
      row[c] = std::exp(row[c] - mx);
      total += row[c];
    }
    for (std::size_t c = 0; c < n; ++c) row[c] /= total;
  }
  return make_node<T>(std::move(out), {a}, [m, n](Node<T>& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      const T* y = self.value.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      T dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (dy[c] - dot);
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  const std::size_t d = x.cols();
  require(d >= 1, "layer_norm: empty last axis");
  require(gain.value().size() == d && bias.value().size() == d,
          "layer_norm: gain/bias length must equal the last axis");
  const std::size_t m = x.value().size() / d;
  Tensor<T> out(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> rstd(m);
  for (std::size_t r = 0; r < m; ++r) {
    const T* in = x.value().data() + r * d;
    T mu = 0;
    for (std::size_t c = 0; c < d; ++c) mu += in[c];
    mu /= T(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= T(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      const T h = (in[c] - mu) * rstd[r];
      xhat[r * d + c] = h;
      out[r * d + c] = h * gain.value()[c] + bias.value()[c];
    }
  }
  return make_node<T>(
      std::move(out), {x, gain, bias},
      [d, m, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
        auto& X = parent(self, 0);
        auto& G = parent(self, 1);
        auto& Bi = parent(self, 2);
        if (G.requires_grad) {
          auto& gg = G.grad_buffer();
          for (std::size_t i = 0; i < self.grad.size(); ++i) gg[i % d] += self.grad[i] * xhat[i];
        }
        if (Bi.requires_grad) {
          auto& gb = Bi.grad_buffer();
          for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % d] += self.grad[i];
        }
        if (X.requires_grad) {
          auto& gx = X.grad_buffer();
          std::vector<T> dxhat(d);
          for (std::size_t r = 0; r < m; ++r) {
            T mean_d = 0, mean_dx = 0;
            for (std::size_t c = 0; c < d; ++c) {
              dxhat[c] = self.grad[r * d + c] * G.value[c];
              mean_d += dxhat[c];
              mean_dx += dxhat[c] * xhat[r * d + c];
            }
            mean_d /= T(d);
            mean_dx /= T(d);
            for (std::size_t c = 0; c < d; ++c) {
              gx[r * d + c] += rstd[r] * (dxhat[c] - mean_d - xhat[r * d + c] * mean_dx);
            }
          }
        }
      });
}

template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x) {
  const std::size_t m = x.rows(), n = x.cols();
  Tensor<T> out = x.value();
  std::vector<T> norms(m);
  for (std::size_t r = 0; r < m; ++r) {
    T* row = out.data() + r * n;
    T ss = 0;
    for (std::size_t c = 0; c < n; ++c) ss += row[c] * row[c];
    norms[r] = std::max(std::sqrt(ss), T(1e-12));
    for (std::size_t c = 0; c < n; ++c) row[c] /= norms[r];
  }
  return make_node<T>(std::move(out), {x}, [m, n, norms = std::move(norms)](Node<T>& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      const T* y = self.value.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      T dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += (dy[c] - y[c] * dot) / norms[r];
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total = 0;
  for (T v : a.value().values()) total += v;
  return make_node<T>(Tensor<T>({1}, {total}), {a}, [](Node<T>& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (auto& v : g.values()) v += self.grad[0];
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / T(a.value().size()));
}

template <typename T>
Var<T> gather_rows(const Var<T>& table, std::span<const int> ids) {
  require_matrix(table, "gather_rows");
  const std::size_t d = table.cols();
  Tensor<T> out({ids.size(), d});
  std::vector<int> idx(ids.begin(), ids.end());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < table.rows(),
            "gather_rows: id " + std::to_string(idx[i]) + " out of range");
    std::copy_n(table.value().data() + idx[i] * d, d, out.data() + i * d);
  }
  return make_node<T>(std::move(out), {table}, [d, idx = std::move(idx)](Node<T>& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) g[idx[i] * d + c] += self.grad[i * d + c];
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require(p.cols() == d, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Tensor<T> out({rows, d});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + off);
    off += p.value().size();
  }
  return make_node<T>(std::move(out), parts, [](Node<T>& self) {
    std::size_t off = 0;
    for (auto& pp : self.parents) {
      const std::size_t len = pp->value.size();
      if (pp->requires_grad) {
        auto& g = pp->grad_buffer();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[off + i];
      }
      off += len;
    }
  });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t count) {
  require(begin + count <= a.rows(), "slice_rows: range out of bounds");
  const std::size_t d = a.cols();
  Tensor<T> out({count, d});
  std::copy_n(a.value().data() + begin * d, count * d, out.data());
  return make_node<T>(std::move(out), {a}, [begin, d](Node<T>& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * d + i] += self.grad[i];
  });
}

template <typename T>
Var<T> prepend_to_block(const Var<T>& lead, const Var<T>& block) {
  require(lead.cols() == block.cols(), "prepend_to_block: width mismatch");
  const std::size_t b = lead.rows(), l = block.rows(), d = lead.cols(), s = l + 1;
  Tensor<T> out({b * s, d});
  for (std::size_t i = 0; i < b; ++i) {
    std::copy_n(lead.value().data() + i * d, d, out.data() + i * s * d);
    std::copy_n(block.value().data(), l * d, out.data() + (i * s + 1) * d);
  }
  return make_node<T>(std::move(out), {lead, block}, [b, l, d, s](Node<T>& self) {
    auto& Le = parent(self, 0);
    auto& Bl = parent(self, 1);
    if (Le.requires_grad) {
      auto& g = Le.grad_buffer();
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < d; ++c) g[i * d + c] += self.grad[i * s * d + c];
    }
    if (Bl.requires_grad) {
      auto& g = Bl.grad_buffer();
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < l * d; ++j) g[j] += self.grad[(i * s + 1) * d + j];
    }
  });
}

template <typename T>
Var<T> add_positional(const Var<T>& x, const Var<T>& pos, std::size_t seq) {
  require(seq >= 1 && x.rows() % seq == 0, "add_positional: rows not a multiple of seq");
  require(pos.rows() >= seq && pos.cols() == x.cols(), "add_positional: table too small");
  const std::size_t d = x.cols();
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += pos.value()[(r % seq) * d + c];
  return make_node<T>(std::move(out), {x, pos}, [seq, d](Node<T>& self) {
    auto& X = parent(self, 0);
    auto& P = parent(self, 1);
    if (X.requires_grad) {
      auto& g = X.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (P.requires_grad) {
      auto& g = P.grad_buffer();
      const std::size_t rows = self.grad.size() / d;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < d; ++c) g[(r % seq) * d + c] += self.grad[r * d + c];
    }
  });
}

template <typename T>
Var<T> last_rows(const Var<T>& x, std::size_t seq) {
  require(seq >= 1 && x.rows() % seq == 0, "last_rows: rows not a multiple of seq");
  const std::size_t b = x.rows() / seq, d = x.cols();
  Tensor<T> out({b, d});
  for (std::size_t i = 0; i < b; ++i)
    std::copy_n(x.value().data() + ((i + 1) * seq - 1) * d, d, out.data() + i * d);
  return make_node<T>(std::move(out), {x}, [b, seq, d](Node<T>& self) {
    auto& g = parent(self, 0).grad_buffer();
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t c = 0; c < d; ++c) g[((i + 1) * seq - 1) * d + c] += self.grad[i * d + c];
  });
}

template <typename T>
Var<T> causal_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t seq,
                        std::size_t heads) {
  require(q.shape() == k.shape() && q.shape() == v.shape(), "attention: q/k/v shape mismatch");
  require_matrix(q, "attention");
  const std::size_t d = q.cols();
  require(heads >= 1 && d % heads == 0, "attention: width not divisible by heads");
  require(seq >= 1 && q.rows() % seq == 0, "attention: rows not a multiple of seq");
  const std::size_t b = q.rows() / seq, dh = d / heads;
  const T inv = T(1) / std::sqrt(T(dh));
  // probs[((bi * heads + h) * seq + i) * seq + j], zero above the diagonal
  std::vector<T> probs(b * heads * seq * seq, T(0));
  Tensor<T> out({b * seq, d});
  const T* Q = q.value().data();
  const T* K = k.value().data();
  const T* V = v.value().data();
  std::vector<T> row(seq);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < seq; ++i) {
        const T* qi = Q + (bi * seq + i) * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j <= i; ++j) {
          const T* kj = K + (bi * seq + j) * d + h * dh;
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          row[j] = s * inv;
          mx = std::max(mx, row[j]);
        }
        T total = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          row[j] = std::exp(row[j] - mx);
          total += row[j];
        }
        T* p = probs.data() + ((bi * heads + h) * seq + i) * seq;
        T* o = out.data() + (bi * seq + i) * d + h * dh;
        for (std::size_t j = 0; j <= i; ++j) {
          p[j] = row[j] / total;
          const T* vj = V + (bi * seq + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * vj[c];
        }
      }
    }
  }
  return make_node<T>(
      std::move(out), {q, k, v},
      [b, heads, seq, d, dh, inv, probs = std::move(probs)](Node<T>& self) {
        auto& Qn = parent(self, 0);
        auto& Kn = parent(self, 1);
        auto& Vn = parent(self, 2);
        T* gq = Qn.requires_grad ? Qn.grad_buffer().data() : nullptr;
        T* gk = Kn.requires_grad ? Kn.grad_buffer().data() : nullptr;
        T* gv = Vn.requires_grad ? Vn.grad_buffer().data() : nullptr;
        const T* G = self.grad.data();
        std::vector<T> dp(seq);
        for (std::size_t bi = 0; bi < b; ++bi) {
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < seq; ++i) {
              const T* p = probs.data() + ((bi * heads + h) * seq + i) * seq;
              const T* go = G + (bi * seq + i) * d + h * dh;
              T dot = 0;
              for (std::size_t j = 0; j <= i; ++j) {
                const T* vj = Vn.value.data() + (bi * seq + j) * d + h * dh;
                T s = 0;
                for (std::size_t c = 0; c < dh; ++c) s += go[c] * vj[c];
                dp[j] = s;
                dot += p[j] * s;
                if (gv) {
                  T* gvj = gv + (bi * seq + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * go[c];
                }
              }
              const T* qi = Qn.value.data() + (bi * seq + i) * d + h * dh;
              for (std::size_t j = 0; j <= i; ++j) {
                const T ds = p[j] * (dp[j] - dot) * inv;
                const T* kj = Kn.value.data() + (bi * seq + j) * d + h * dh;
                if (gq) {
                  T* gqi = gq + (bi * seq + i) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  T* gkj = gk + (bi * seq + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

template <typename T>
T log_prob_of(std::span<const T> logits, int label) {
  const T mx = *std::max_element(logits.begin(), logits.end());
  T total = 0;
  for (T z : logits) total += std::exp(z - mx);
  return logits[static_cast<std::size_t>(label)] - mx - std::log(total);
}

namespace {

template <typename T>
void check_labels(const Var<T>& logits, std::span<const int> labels, const char* op) {
  require_matrix(logits, op);
  require(labels.size() == logits.rows(), std::string(op) + ": label count mismatch");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < logits.cols(),
            std::string(op) + ": label out of range");
}

}  // namespace

template <typename T>
Var<T> mse(const Var<T>& pred, const Tensor<T>& target) {
  require(pred.value().size() == target.size(), "mse: shape mismatch");
  const std::size_t n = target.size();
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T e = pred.value()[i] - target[i];
    total += e * e;
  }
  return make_node<T>(Tensor<T>({1}, {total / T(n)}), {pred}, [n, target](Node<T>& self) {
    auto& P = parent(self, 0);
    auto& g = P.grad_buffer();
    const T k = T(2) * self.grad[0] / T(n);
    for (std::size_t i = 0; i < n; ++i) g[i] += k * (P.value[i] - target[i]);
  });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  check_labels(logits, labels, "cross_entropy");
  const std::size_t m = logits.rows(), n = logits.cols();
  std::vector<int> y(labels.begin(), labels.end());
  // softmax probabilities are kept for the backward pass
  Tensor<T> probs(logits.shape());
  T total = 0;
  for (std::size_t r = 0; r < m; ++r) {
    const T* z = logits.value().data() + r * n;
    T* p = probs.data() + r * n;
    const T mx = *std::max_element(z, z + n);
    T acc = 0;
    for (std::size_t c = 0; c < n; ++c) {
      p[c] = std::exp(z[c] - mx);
      acc += p[c];
    }
    for (std::size_t c = 0; c < n; ++c) p[c] /= acc;
    total += mx + std::log(acc) - z[y[r]];
  }
  return make_node<T>(Tensor<T>({1}, {total / T(m)}), {logits},
                      [m, n, y = std::move(y), probs = std::move(probs)](Node<T>& self) {
                        auto& g = parent(self, 0).grad_buffer();
                        const T k = self.grad[0] / T(m);
                        for (std::size_t r = 0; r < m; ++r)
                          for (std::size_t c = 0; c < n; ++c) {
                            const T delta = static_cast<int>(c) == y[r] ? T(1) : T(0);
                            g[r * n + c] += k * (probs[r * n + c] - delta);
                          }
                      });
}

template <typename T>
Var<T> focal_loss(const Var<T>& logits, std::span<const int> labels, T gamma) {
  check_labels(logits, labels, "focal_loss");
  const std::size_t m = logits.rows(), n = logits.cols();
  std::vector<int> y(labels.begin(), labels.end());
  T total = 0;
  for (std::size_t r = 0; r < m; ++r) {
    const std::span<const T> row(logits.value().data() + r * n, n);
    const T lp = log_prob_of(row, y[r]);
    const T weight = gamma == T(0) ? T(1) : std::pow(T(1) - std::exp(lp), gamma);
    total += -weight * lp;
  }
  return make_node<T>(
      Tensor<T>({1}, {total / T(m)}), {logits}, [m, n, gamma, y = std::move(y)](Node<T>& self) {
        auto& L = parent(self, 0);
        auto& g = L.grad_buffer();
        const T k = self.grad[0] / T(m);
        std::vector<T> p(n);
        for (std::size_t r = 0; r < m; ++r) {
          const T* z = L.value.data() + r * n;
          const T mx = *std::max_element(z, z + n);
          T total_r = 0;
          for (std::size_t c = 0; c < n; ++c) {
            p[c] = std::exp(z[c] - mx);
            total_r += p[c];
          }
          for (auto& pc : p) pc /= total_r;
          const T pt = p[y[r]];
          // d(loss)/dz_c = coeff · (δ_ct − p_c)
          T coeff = -T(1);
          if (gamma != T(0)) {
            const T lp = std::log(std::max(pt, std::numeric_limits<T>::min()));
            const T one_m = T(1) - pt;
            coeff = gamma * std::pow(one_m, gamma - T(1)) * pt * lp - std::pow(one_m, gamma);
          }
          for (std::size_t c = 0; c < n; ++c) {
            const T delta = static_cast<int>(c) == y[r] ? T(1) : T(0);
            g[r * n + c] += k * coeff * (delta - p[c]);
          }
        }
      });
}

template <typename T>
Var<T> sgcs_loss(const Var<T>& pred, const Tensor<T>& target, std::size_t* degenerate) {
  require(pred.value().size() == target.size(), "sgcs_loss: shape mismatch");
  require(pred.cols() % 2 == 0, "sgcs_loss: odd row width");
  const std::size_t m = pred.rows(), w = pred.cols(), n = w / 2;
  T total = 0;
  std::size_t bad = 0;
  for (std::size_t r = 0; r < m; ++r) {
    const T* p = pred.value().data() + r * w;
    const T* t = target.data() + r * w;
    T ir = 0, ii = 0, pp = 0, tt = 0;
    for (std::size_t c = 0; c < n; ++c) {
      // conj(p) · t
      ir += p[2 * c] * t[2 * c] + p[2 * c + 1] * t[2 * c + 1];
      ii += p[2 * c] * t[2 * c + 1] - p[2 * c + 1] * t[2 * c];
      pp += p[2 * c] * p[2 * c] + p[2 * c + 1] * p[2 * c + 1];
      tt += t[2 * c] * t[2 * c] + t[2 * c + 1] * t[2 * c + 1];
    }
    if (pp == T(0) || tt == T(0)) {
      ++bad;
      total += T(1);
    } else {
      total += T(1) - (ir * ir + ii * ii) / (pp * tt);
    }
  }
  if (degenerate) *degenerate += bad;
  return make_node<T>(Tensor<T>({1}, {total / T(m)}), {pred}, [m, w, n, target](Node<T>& self) {
    auto& P = parent(self, 0);
    auto& g = P.grad_buffer();
    const T k = self.grad[0] / T(m);
    for (std::size_t r = 0; r < m; ++r) {
      const T* p = P.value.data() + r * w;
      const T* t = target.data() + r * w;
      T ir = 0, ii = 0, pp = 0, tt = 0;
      for (std::size_t c = 0; c < n; ++c) {
        ir += p[2 * c] * t[2 * c] + p[2 * c + 1] * t[2 * c + 1];
        ii += p[2 * c] * t[2 * c + 1] - p[2 * c + 1] * t[2 * c];
        pp += p[2 * c] * p[2 * c] + p[2 * c + 1] * p[2 * c + 1];
        tt += t[2 * c] * t[2 * c] + t[2 * c + 1] * t[2 * c + 1];
      }
      if (pp == T(0) || tt == T(0)) continue;
      const T den = pp * tt;
      const T s = (ir * ir + ii * ii) / den;
      T* gr = g.data() + r * w;
      for (std::size_t c = 0; c < n; ++c) {
        const T tr = t[2 * c], ti = t[2 * c + 1];
        // conj(inner) · t_c
        const T re = ir * tr + ii * ti;
        const T im = ir * ti - ii * tr;
        const T ds_re = T(2) * re / den - s * T(2) * p[2 * c] / pp;
        const T ds_im = T(2) * im / den - s * T(2) * p[2 * c + 1] / pp;
        gr[2 * c] -= k * ds_re;
        gr[2 * c + 1] -= k * ds_im;
      }
    }
  });
}

#define AIMM_INSTANTIATE_AD(T)                                                                 \
  template void backward<T>(const Var<T>&);                                                    \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                     \
  template Var<T> matmul_bt<T>(const Var<T>&, const Var<T>&);                                  \
  template Var<T> transpose<T>(const Var<T>&);                                                 \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> scale<T>(const Var<T>&, T);                                                  \
  template Var<T> add_row<T>(const Var<T>&, const Var<T>&);                                    \
  template Var<T> mul_scalar<T>(const Var<T>&, const Var<T>&);                                 \
  template Var<T> exp<T>(const Var<T>&);                                                       \
  template Var<T> gelu<T>(const Var<T>&);                                                      \
  template Var<T> softmax_rows<T>(const Var<T>&);                                              \
  template Var<T> layer_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&, T);               \
  template Var<T> l2_normalize_rows<T>(const Var<T>&);                                         \
  template Var<T> sum<T>(const Var<T>&);                                                       \
  template Var<T> mean<T>(const Var<T>&);                                                      \
  template Var<T> gather_rows<T>(const Var<T>&, std::span<const int>);                         \
  template Var<T> concat_rows<T>(const std::vector<Var<T>>&);                                  \
  template Var<T> slice_rows<T>(const Var<T>&, std::size_t, std::size_t);                      \
  template Var<T> prepend_to_block<T>(const Var<T>&, const Var<T>&);                           \
  template Var<T> add_positional<T>(const Var<T>&, const Var<T>&, std::size_t);                \
  template Var<T> last_rows<T>(const Var<T>&, std::size_t);                                    \
  template Var<T> causal_attention<T>(const Var<T>&, const Var<T>&, const Var<T>&,             \
                                      std::size_t, std::size_t);                               \
  template Var<T> mse<T>(const Var<T>&, const Tensor<T>&);                                     \
  template Var<T> cross_entropy<T>(const Var<T>&, std::span<const int>);                       \
  template Var<T> focal_loss<T>(const Var<T>&, std::span<const int>, T);                       \
  template Var<T> sgcs_loss<T>(const Var<T>&, const Tensor<T>&, std::size_t*);                 \
  template T log_prob_of<T>(std::span<const T>, int);

AIMM_INSTANTIATE_AD(float)
AIMM_INSTANTIATE_AD(double)

}  // namespace aimm::ad
