#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aimm/numerics/tensor.hpp"

namespace aimm::ad {

// One vertex of a reverse-mode graph. Graphs are built fresh on every forward
// pass; leaves (parameters, inputs) persist across passes and accumulate
// gradients until cleared.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily, only when requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  static Var leaf(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
  }

  bool valid() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Tensor<T>(); }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  T item() const { return node_->value[0]; }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Seeds d(root)/d(root) = 1 (root must hold one element) and runs every
// backward closure in reverse topological order.
template <typename T>
void backward(const Var<T>& root);

// ---------------------------------------------------------------------------
// Differentiable operations. Matrices are rank-2 row-major tensors; vectors
// used as biases or gains are rank-1.

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// a · bᵀ
template <typename T> Var<T> matmul_bt(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> transpose(const Var<T>& a);
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
// Adds a length-n vector to every row of an m×n matrix.
template <typename T> Var<T> add_row(const Var<T>& a, const Var<T>& bias);
// Multiplies every entry of a by the single entry of s.
template <typename T> Var<T> mul_scalar(const Var<T>& a, const Var<T>& s);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> gelu(const Var<T>& a);
template <typename T> Var<T> softmax_rows(const Var<T>& a);
template <typename T> Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias,
                                        T eps);
template <typename T> Var<T> l2_normalize_rows(const Var<T>& x);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);

// Row gather from an embedding table.
template <typename T> Var<T> gather_rows(const Var<T>& table, std::span<const int> ids);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_rows(const Var<T>& a, std::size_t begin, std::size_t count);
// [B×d] leading tokens ⊕ [L×d] block shared by every sample → [B·(1+L) × d].
template <typename T> Var<T> prepend_to_block(const Var<T>& lead, const Var<T>& block);
// Adds rows 0..S-1 of pos to each length-S sequence packed in x.
template <typename T> Var<T> add_positional(const Var<T>& x, const Var<T>& pos, std::size_t seq);
// Row S-1 of each length-S sequence: [B·S × d] → [B × d].
template <typename T> Var<T> last_rows(const Var<T>& x, std::size_t seq);

// Multi-head causal self-attention over B packed sequences of length seq.
// q, k, v: [B·seq × d]; d divisible by heads. Returns [B·seq × d].
template <typename T>
Var<T> causal_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t seq,
                        std::size_t heads);

// ---------------------------------------------------------------------------
// Losses, all averaged over the batch (rows).

template <typename T> Var<T> mse(const Var<T>& pred, const Tensor<T>& target);
template <typename T> Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels);
template <typename T>
Var<T> focal_loss(const Var<T>& logits, std::span<const int> labels, T gamma);
// Mean of 1 − SGCS over rows; each row is a complex vector stored as
// interleaved (re, im). Rows with a zero-norm prediction count as loss 1 with
// zero gradient and are tallied in *degenerate when given.
template <typename T>
Var<T> sgcs_loss(const Var<T>& pred, const Tensor<T>& target, std::size_t* degenerate = nullptr);

// log softmax(logits)[label], max-shifted.
template <typename T>
T log_prob_of(std::span<const T> logits, int label);

}  // namespace aimm::ad
