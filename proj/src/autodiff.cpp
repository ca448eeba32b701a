#include "simplexlm/autodiff.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "eigen_view.hpp"
#include "simplexlm/errors.hpp"

namespace simplexlm {

using detail::RowMatrix;
using detail::view;

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::push(Node node) {
  if (check_finite_) {
    const Tensor& v = node.external ? *node.external : node.owned;
    v.require_finite("tape node " + std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(const Tensor& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::parameter(const Tensor& value, Tensor& grad_sink) {
  if (grad_sink.shape() != value.shape()) {
    throw ShapeError("gradient sink " + shape_string(grad_sink.shape()) + " does not match " +
                     shape_string(value.shape()));
  }
  Node n;
  n.external = &value;
  n.grad_sink = &grad_sink;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  Node n;
  n.owned = std::move(value);
  for (Var in : inputs) {
    if (in.tape() != this) throw Error("operand recorded on a different tape");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  if (v.tape() != this) throw Error("variable does not belong to this tape");
  return node_value(v.id());
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad_sink) return *n.grad_sink;
  if (n.grad.size() == 0) return Tensor(node_value(v.id()).shape());
  return n.grad;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad_sink) return *n.grad_sink;
  if (n.grad.size() == 0) n.grad = Tensor(node_value(id).shape());
  return n.grad;
}

void Tape::backward(Var root, double seed) {
  if (root.tape() != this) throw Error("backward root belongs to a different tape");
  if (node_value(root.id()).size() != 1) {
    throw ShapeError("backward requires a scalar root, got " +
                     shape_string(node_value(root.id()).shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (nodes_[root.id()].grad_sink) throw Error("backward root cannot be a parameter leaf");
  grad_buffer(root.id())[0] = seed;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, node_value(i), n.grad);
  }
}

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() > 2) {
    throw ShapeError(std::string(op) + ": expected rank <= 2, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Tensor matrix_of(std::size_t rows, std::size_t cols) { return Tensor(Shape{rows, cols}); }

bool wants(Tape& tape, Var v) { return tape.requires_grad(v); }

detail::MatrixView row_view(Tensor& t) {
  return detail::MatrixView(t.data(), 1, static_cast<Eigen::Index>(t.size()));
}

detail::ConstMatrixView row_view(const Tensor& t) {
  return detail::ConstMatrixView(t.data(), 1, static_cast<Eigen::Index>(t.size()));
}

void softmax_in_place(Tensor& t) {
  auto m = view(t);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  Tensor out = matrix_of(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (wants(tape, a)) {
      view(tape.grad_buffer(a.id())).noalias() += view(g) * view(b.value()).transpose();
    }
    if (wants(tape, b)) {
      view(tape.grad_buffer(b.id())).noalias() += view(a.value()).transpose() * view(g);
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  Tensor out = matrix_of(av.cols(), av.rows());
  view(out) = view(av).transpose();
  return a.tape()->record(std::move(out), {a}, [a](Tape& tape, const Tensor&, const Tensor& g) {
    view(tape.grad_buffer(a.id())) += view(g).transpose();
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  view(out) += view(b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (wants(tape, a)) view(tape.grad_buffer(a.id())) += view(g);
    if (wants(tape, b)) view(tape.grad_buffer(b.id())) += view(g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  view(out) -= view(b.value());
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (wants(tape, a)) view(tape.grad_buffer(a.id())) += view(g);
    if (wants(tape, b)) view(tape.grad_buffer(b.id())) -= view(g);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  view(out).array() *= view(b.value()).array();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    if (wants(tape, a)) {
      view(tape.grad_buffer(a.id())).array() += view(g).array() * view(b.value()).array();
    }
    if (wants(tape, b)) {
      view(tape.grad_buffer(b.id())).array() += view(g).array() * view(a.value()).array();
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  view(out) *= factor;
  return a.tape()->record(std::move(out), {a}, [a, factor](Tape& tape, const Tensor&, const Tensor& g) {
    view(tape.grad_buffer(a.id())) += factor * view(g);
  });
}

Var add_row(Var a, Var row) {
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  require_matrix(av, "add_row");
  if (rv.size() != av.cols()) {
    throw ShapeError("add_row: row of size " + std::to_string(rv.size()) + " for " +
                     shape_string(av.shape()));
  }
  Tensor out = av;
  view(out).rowwise() += row_view(rv).row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& tape, const Tensor&, const Tensor& g) {
    if (wants(tape, a)) view(tape.grad_buffer(a.id())) += view(g);
    if (wants(tape, row)) row_view(tape.grad_buffer(row.id())).row(0) += view(g).colwise().sum();
  });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

Var gelu(Var a) {
  const Tensor& x = a.value();
  auto cdf = std::make_shared<Eigen::ArrayXd>(static_cast<Eigen::Index>(x.size()));
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double c = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
    (*cdf)(static_cast<Eigen::Index>(i)) = c;
    out[i] = x[i] * c;
  }
  return a.tape()->record(std::move(out), {a}, [a, cdf](Tape& tape, const Tensor&, const Tensor& g) {
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    const Tensor& xv = a.value();
    const auto n = static_cast<Eigen::Index>(xv.size());
    const Eigen::Map<const Eigen::ArrayXd> xs(xv.data(), n);
    const Eigen::Map<const Eigen::ArrayXd> gs(g.data(), n);
    Eigen::Map<Eigen::ArrayXd> ga(tape.grad_buffer(a.id()).data(), n);
    const Eigen::ArrayXd pdf = kInvSqrt2Pi * (-0.5 * xs.square()).exp();
    ga += gs * (*cdf + xs * pdf);
  });
}

Var softmax_rows(Var a) {
  if (a.value().rank() < 1) throw ShapeError("softmax_rows: rank must be >= 1");
  Tensor out = a.value();
  softmax_in_place(out);
  return a.tape()->record(std::move(out), {a}, [a](Tape& tape, const Tensor& y, const Tensor& g) {
    auto yv = view(y).array();
    auto gv = view(g).array();
    const Eigen::ArrayXd dot = (yv * gv).rowwise().sum();
    view(tape.grad_buffer(a.id())).array() += yv * (gv.colwise() - dot);
  });
}

Var log_softmax_rows(Var a) {
  if (a.value().rank() < 1) throw ShapeError("log_softmax_rows: rank must be >= 1");
  Tensor out = a.value();
  auto m = view(out);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    row.array() -= lse;
  }
  return a.tape()->record(std::move(out), {a}, [a](Tape& tape, const Tensor& y, const Tensor& g) {
    auto gv = view(g).array();
    const Eigen::ArrayXd total = gv.rowwise().sum();
    view(tape.grad_buffer(a.id())).array() += gv - view(y).array().exp().colwise() * total;
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  constexpr double kEps = 1e-5;
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t d = xv.cols();
  if (gain.value().size() != d || bias.value().size() != d) {
    throw ShapeError("layer_norm: gain/bias must match last dimension " + std::to_string(d));
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(xv.rows());
  auto normalized = std::make_shared<RowMatrix>(rows, static_cast<Eigen::Index>(d));
  auto inv_std = std::make_shared<Eigen::ArrayXd>(rows);
  auto xm = view(xv);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = xm.row(r).mean();
    const auto centered = (xm.row(r).array() - mu).eval();
    const double var = centered.square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + kEps);
    normalized->row(r) = (centered * (*inv_std)(r)).matrix();
  }
  Tensor out = matrix_of(xv.rows(), d);
  view(out) = (normalized->array().rowwise() * row_view(gain.value()).array().row(0)).matrix();
  view(out).rowwise() += row_view(bias.value()).row(0);
  return x.tape()->record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, normalized, inv_std](Tape& tape, const Tensor&, const Tensor& g) {
        auto gv = view(g).array();
        if (wants(tape, gain)) {
          row_view(tape.grad_buffer(gain.id())).row(0) +=
              (gv * normalized->array()).colwise().sum().matrix();
        }
        if (wants(tape, bias)) row_view(tape.grad_buffer(bias.id())).row(0) += view(g).colwise().sum();
        if (wants(tape, x)) {
          const Eigen::ArrayXXd dxhat = gv.rowwise() * row_view(gain.value()).array().row(0);
          const Eigen::ArrayXd mean_dxhat = dxhat.rowwise().mean();
          const Eigen::ArrayXd mean_dxhat_xhat = (dxhat * normalized->array()).rowwise().mean();
          auto gx = view(tape.grad_buffer(x.id())).array();
          gx += ((dxhat.colwise() - mean_dxhat) -
                 normalized->array().colwise() * mean_dxhat_xhat)
                    .colwise() *
                *inv_std;
        }
      });
}

Var cross_entropy_rows(Var logits, std::span<const int> targets) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy_rows");
  const std::size_t rows = lv.rows();
  const std::size_t v = lv.cols();
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " rows");
  }
  if (rows == 0) throw ShapeError("cross_entropy_rows: no rows");
  auto probs = std::make_shared<Tensor>(lv);
  softmax_in_place(*probs);
  std::vector<int> ids(targets.begin(), targets.end());
  double loss = 0.0;
  auto lm = view(lv);
  for (std::size_t r = 0; r < rows; ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= v) {
      throw DataError("cross_entropy_rows: target " + std::to_string(ids[r]) +
                      " out of range for " + std::to_string(v) + " classes");
    }
    const auto row = lm.row(static_cast<Eigen::Index>(r));
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    loss += lse - row(ids[r]);
  }
  loss /= static_cast<double>(rows);
  return logits.tape()->record(
      Tensor::scalar(loss), {logits},
      [logits, probs, ids = std::move(ids)](Tape& tape, const Tensor&, const Tensor& g) {
        const double factor = g[0] / static_cast<double>(ids.size());
        Tensor& gl = tape.grad_buffer(logits.id());
        view(gl) += factor * view(*probs);
        for (std::size_t r = 0; r < ids.size(); ++r) {
          gl.at(r, static_cast<std::size_t>(ids[r])) -= factor;
        }
      });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  const std::size_t d = tv.cols();
  std::vector<int> rows(ids.begin(), ids.end());
  Tensor out = matrix_of(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= tv.rows()) {
      throw DataError("gather_rows: id " + std::to_string(rows[i]) + " out of range for table of " +
                      std::to_string(tv.rows()) + " rows");
    }
    view(out).row(static_cast<Eigen::Index>(i)) = view(tv).row(rows[i]);
  }
  return table.tape()->record(
      std::move(out), {table}, [table, rows = std::move(rows)](Tape& tape, const Tensor&, const Tensor& g) {
        auto gt = view(tape.grad_buffer(table.id()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
          gt.row(rows[i]) += view(g).row(static_cast<Eigen::Index>(i));
        }
      });
}

Var weighted_embedding(Var simplex, Var table) {
  if (simplex.value().cols() != table.value().rows()) {
    throw ShapeError("weighted_embedding: simplex width " + std::to_string(simplex.value().cols()) +
                     " does not match table of " + std::to_string(table.value().rows()) + " rows");
  }
  return matmul(simplex, table);
}

Var concat_rows(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "concat_rows");
  require_matrix(bv, "concat_rows");
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_rows: column mismatch " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  const std::size_t ra = av.size() ? av.rows() : 0;
  const std::size_t rb = bv.size() ? bv.rows() : 0;
  Tensor out = matrix_of(ra + rb, av.cols());
  std::copy(av.values().begin(), av.values().end(), out.values().begin());
  std::copy(bv.values().begin(), bv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(av.size()));
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor&, const Tensor& g) {
    const std::size_t na = a.value().size();
    if (wants(tape, a) && na) {
      Tensor& ga = tape.grad_buffer(a.id());
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (wants(tape, b) && b.value().size()) {
      Tensor& gb = tape.grad_buffer(b.id());
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  require_matrix(av, "slice_rows");
  if (begin + count > av.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") exceeds " + std::to_string(av.rows()) + " rows");
  }
  const std::size_t d = av.cols();
  Tensor out = matrix_of(count, d);
  std::copy_n(av.data() + begin * d, count * d, out.data());
  return a.tape()->record(std::move(out), {a}, [a, begin, d](Tape& tape, const Tensor&, const Tensor& g) {
    double* dst = tape.grad_buffer(a.id()).data() + begin * d;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "mean_rows");
  Tensor out = matrix_of(1, av.cols());
  row_view(out).row(0) = view(av).colwise().mean();
  return a.tape()->record(std::move(out), {a}, [a](Tape& tape, const Tensor&, const Tensor& g) {
    const double n = static_cast<double>(a.value().rows());
    view(tape.grad_buffer(a.id())).rowwise() += row_view(g).row(0) / n;
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double x : a.value().values()) total += x;
  return a.tape()->record(Tensor::scalar(total), {a}, [a](Tape& tape, const Tensor&, const Tensor& g) {
    for (double& x : tape.grad_buffer(a.id()).values()) x += g[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var element(Var a, std::size_t row, std::size_t col) {
  const Tensor& av = a.value();
  if (row >= av.rows() || col >= av.cols()) {
    throw ShapeError("element: (" + std::to_string(row) + ", " + std::to_string(col) +
                     ") out of range for " + shape_string(av.shape()));
  }
  return a.tape()->record(Tensor::scalar(av.at(row, col)), {a},
                          [a, row, col](Tape& tape, const Tensor&, const Tensor& g) {
                            tape.grad_buffer(a.id()).at(row, col) += g[0];
                          });
}

Var attention(Var q, Var k, Var v, std::size_t n_heads, bool causal,
              std::vector<Tensor>* weights_out) {
  const Tensor& qv = q.value();
  require_same_shape(qv, k.value(), "attention");
  require_same_shape(qv, v.value(), "attention");
  require_matrix(qv, "attention");
  const Eigen::Index n = static_cast<Eigen::Index>(qv.rows());
  const Eigen::Index d = static_cast<Eigen::Index>(qv.cols());
  if (n_heads == 0 || d % static_cast<Eigen::Index>(n_heads) != 0) {
    throw ShapeError("attention: width " + std::to_string(d) + " not divisible into " +
                     std::to_string(n_heads) + " heads");
  }
  const Eigen::Index dh = d / static_cast<Eigen::Index>(n_heads);
  const double factor = 1.0 / std::sqrt(static_cast<double>(dh));

  auto probs = std::make_shared<std::vector<RowMatrix>>(n_heads);
  Tensor out = matrix_of(qv.rows(), qv.cols());
  auto qm = view(qv);
  auto km = view(k.value());
  auto vm = view(v.value());
  auto om = view(out);
  if (weights_out) weights_out->clear();
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
    RowMatrix& p = (*probs)[h];
    p.noalias() = factor * qm.middleCols(c0, dh) * km.middleCols(c0, dh).transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index width = causal ? i + 1 : n;
      auto row = p.row(i).head(width);
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
      if (causal) p.row(i).tail(n - width).setZero();
    }
    om.middleCols(c0, dh).noalias() = p * vm.middleCols(c0, dh);
    if (weights_out) {
      Tensor w(Shape{static_cast<std::size_t>(n), static_cast<std::size_t>(n)});
      view(w) = p;
      weights_out->push_back(std::move(w));
    }
  }

  return q.tape()->record(
      std::move(out), {q, k, v},
      [q, k, v, probs, dh, factor](Tape& tape, const Tensor&, const Tensor& g) {
        auto qm = view(q.value());
        auto km = view(k.value());
        auto vm = view(v.value());
        auto gm = view(g);
        const bool gq = wants(tape, q), gk = wants(tape, k), gv = wants(tape, v);
        for (std::size_t h = 0; h < probs->size(); ++h) {
          const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
          const RowMatrix& p = (*probs)[h];
          const auto go = gm.middleCols(c0, dh);
          if (gv) view(tape.grad_buffer(v.id())).middleCols(c0, dh).noalias() += p.transpose() * go;
          if (!gq && !gk) continue;
          RowMatrix dp = go * vm.middleCols(c0, dh).transpose();
          const Eigen::ArrayXd dot = (dp.array() * p.array()).rowwise().sum();
          RowMatrix ds = (p.array() * (dp.array().colwise() - dot)).matrix() * factor;
          if (gq) view(tape.grad_buffer(q.id())).middleCols(c0, dh).noalias() += ds * km.middleCols(c0, dh);
          if (gk) view(tape.grad_buffer(k.id())).middleCols(c0, dh).noalias() += ds.transpose() * qm.middleCols(c0, dh);
        }
      });
}

}  // namespace simplexlm
