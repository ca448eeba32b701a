#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "simplexlm/tensor.hpp"

namespace simplexlm {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode computation tape.
///
/// Nodes are appended in forward execution order, so reverse iteration is a
/// valid topological order for the backward pass. A tape is built fresh for
/// every forward pass and is confined to one thread.
class Tape {
 public:
  /// Receives the node's output value and its gradient; accumulates into
  /// inputs via grad_buffer().
  using Backward = std::function<void(Tape&, const Tensor& out, const Tensor& out_grad)>;

  /// With `check_finite`, every recorded value is validated and a
  /// NumericError is thrown on the first NaN or Inf.
  explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input.
  Var constant(Tensor value);
  /// Differentiable input owned by the tape.
  Var variable(Tensor value);
  /// Input that aliases external storage (model weights). The referenced
  /// tensor must outlive the tape and stay unmodified.
  Var parameter(const Tensor& value, bool requires_grad = true);
  /// Parameter whose gradient accumulates directly into `grad_sink` (same
  /// shape as `value`). The sink is not cleared by backward(), so several
  /// tapes can sum into one buffer.
  Var parameter(const Tensor& value, Tensor& grad_sink);

  /// Records an op result. `inputs` decide whether the node requires grad;
  /// `backward` is dropped when none of them do.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient accumulated for `v` by the last backward(); zeros if untouched.
  Tensor grad(Var v) const;

  /// Lazily zero-initialised accumulation buffer for node `id`.
  Tensor& grad_buffer(std::size_t id);

  /// Seeds d(root)/d(root) = seed and propagates to every node. Root must
  /// be a single-element tensor.
  void backward(Var root, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor* grad_sink = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Node node);
  const Tensor& node_value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }

  std::vector<Node> nodes_;
  bool check_finite_;
};

// Primitive operations. All operands must live on the same tape.

/// Matrix product of rank-2 tensors (rank-1 is treated as a single row).
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise (Hadamard) product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Adds a 1 x n row to every row of an r x n matrix.
Var add_row(Var a, Var row);
/// Exact (erf-based) GELU.
Var gelu(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Normalises each row to zero mean and unit variance (variance + 1e-5),
/// then applies per-column gain and bias.
Var layer_norm(Var x, Var gain, Var bias);
/// Mean over rows of -log softmax(logits)[target].
Var cross_entropy_rows(Var logits, std::span<const int> targets);
/// Rows of `table` selected by `ids`.
Var gather_rows(Var table, std::span<const int> ids);
/// Simplex-weighted sum of embedding rows: simplex (n x V) times table (V x d).
Var weighted_embedding(Var simplex, Var table);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Column-wise mean over rows: r x n -> 1 x n.
Var mean_rows(Var a);
Var sum(Var a);
Var mean(Var a);
/// Single entry (row, col) as a scalar.
Var element(Var a, std::size_t row, std::size_t col);

/// Multi-head scaled dot-product attention over n x d query/key/value
/// matrices; heads split the column dimension. With `causal`, position i
/// attends to positions <= i only.
///
/// If `weights_out` is non-null it receives one n x n probability matrix per
/// head (inspection only; not differentiable).
Var attention(Var q, Var k, Var v, std::size_t n_heads, bool causal,
              std::vector<Tensor>* weights_out = nullptr);

}  // namespace simplexlm
