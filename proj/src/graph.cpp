#include "mdchain/numeric/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mdchain/error.hpp"

namespace mdchain::ad {

namespace {

void require_same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) throw ContractError("operands belong to different graphs");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw DimensionError(std::string(op) + ": operand shapes differ");
}

void add_into(Tensor& dst, const Tensor& src) { dst.mat() += src.mat(); }

}  // namespace

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) { return record("constant", std::move(value), {}, nullptr); }

Var Graph::parameter(Parameter& p) {
  Var v = record("parameter", p.value, {}, nullptr);
  nodes_[v.id].param = &p;
  nodes_[v.id].needs_grad = true;
  return v;
}

Var Graph::record(const char* op, Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": produced a non-finite value");
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.parents = std::move(parents);
  for (std::size_t p : node.parents) node.needs_grad = node.needs_grad || nodes_[p].needs_grad;
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
  if (nodes_[loss.id].value.size() != 1) throw ContractError("backward: loss must be a scalar");
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.needs_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      if (n.param->grad.size() != n.value.size()) n.param->grad = Tensor(n.value.shape());
      add_into(n.param->grad, n.grad);
    }
  }
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  Tensor out = num::matmul(a.value(), b.value());
  return g.record("matmul", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::size_t self) {
    const Tensor& dy = g.output_grad(self);
    if (g.needs_grad(a)) g.grad_buffer(a).mat().noalias() += dy.mat() * g.value(b).mat().transpose();
    if (g.needs_grad(b)) g.grad_buffer(b).mat().noalias() += g.value(a).mat().transpose() * dy.mat();
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.mat() += b.value().mat();
  return a.graph->record("add", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::size_t self) {
    const Tensor& dy = g.output_grad(self);
    if (g.needs_grad(a)) add_into(g.grad_buffer(a), dy);
    if (g.needs_grad(b)) add_into(g.grad_buffer(b), dy);
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.mat() -= b.value().mat();
  return a.graph->record("sub", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::size_t self) {
    const Tensor& dy = g.output_grad(self);
    if (g.needs_grad(a)) add_into(g.grad_buffer(a), dy);
    if (g.needs_grad(b)) g.grad_buffer(b).mat() -= dy.mat();
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  out.mat().array() *= b.value().mat().array();
  return a.graph->record("mul", std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::size_t self) {
    const Tensor& dy = g.output_grad(self);
    if (g.needs_grad(a)) g.grad_buffer(a).mat().array() += dy.mat().array() * g.value(b).mat().array();
    if (g.needs_grad(b)) g.grad_buffer(b).mat().array() += dy.mat().array() * g.value(a).mat().array();
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  out.mat() *= s;
  return a.graph->record("scale", std::move(out), {a.id}, [a = a.id, s](Graph& g, std::size_t self) {
    g.grad_buffer(a).mat() += s * g.output_grad(self).mat();
  });
}

Var add_row(Var a, Var row) {
  require_same_graph(a, row);
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) throw DimensionError("add_row: row must be 1 x cols");
  Tensor out = x;
  out.mat().rowwise() += r.mat().row(0);
  return a.graph->record("add_row", std::move(out), {a.id, row.id}, [a = a.id, r = row.id](Graph& g, std::size_t self) {
    const Tensor& dy = g.output_grad(self);
    if (g.needs_grad(a)) add_into(g.grad_buffer(a), dy);
    if (g.needs_grad(r)) g.grad_buffer(r).mat().row(0) += dy.mat().colwise().sum();
  });
}

Var exp(Var a) {
  Tensor out = a.value();
  out.mat() = out.mat().array().exp().matrix();
  return a.graph->record("exp", std::move(out), {a.id}, [a = a.id](Graph& g, std::size_t self) {
    g.grad_buffer(a).mat().array() += g.output_grad(self).mat().array() * g.value(self).mat().array();
  });
}

Var log(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
    v = std::log(v);
  }
  return a.graph->record("log", std::move(out), {a.id}, [a = a.id](Graph& g, std::size_t self) {
    g.grad_buffer(a).mat().array() += g.output_grad(self).mat().array() / g.value(a).mat().array();
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  return a.graph->record("tanh", std::move(out), {a.id}, [a = a.id](Graph& g, std::size_t self) {
    const auto y = g.value(self).mat().array();
    g.grad_buffer(a).mat().array() += g.output_grad(self).mat().array() * (1.0 - y * y);
  });
}

Var gelu(Var a) {
  Tensor out = a.value();
  num::gelu_inplace(out.values());
  return a.graph->record("gelu", std::move(out), {a.id}, [a = a.id](Graph& g, std::size_t self) {
    num::gelu_backward(g.value(a).values(), g.output_grad(self).values(), g.grad_buffer(a).values());
  });
}

Var softmax_rows(Var a) {
  Tensor out = num::softmax(a.value(), a.value().rank() - 1);
  return a.graph->record("softmax_rows", std::move(out), {a.id}, [a = a.id](Graph& g, std::size_t self) {
    const auto y = g.value(self).mat().array();
    const auto dy = g.output_grad(self).mat().array();
    const Eigen::VectorXd dot = (dy * y).rowwise().sum();
    g.grad_buffer(a).mat().array() += y * (dy.colwise() - dot.array());
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& x = a.value();
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double mx = -INFINITY;
    for (double v : row) {
      if (std::isnan(v)) throw NumericError("log_softmax_rows: NaN input");
      mx = std::max(mx, v);
    }
    double total = 0.0;
    for (double v : row) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (double& v : row) v -= lse;
  }
  return a.graph->record("log_softmax_rows", std::move(out), {a.id}, [a = a.id](Graph& g, std::size_t self) {
    const auto y = g.value(self).mat().array();
    const auto dy = g.output_grad(self).mat().array();
    const Eigen::VectorXd total = dy.rowwise().sum();
    g.grad_buffer(a).mat().array() += dy - y.exp().colwise() * total.array();
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& in = x.value();
  const std::size_t rows = in.rows();
  const std::size_t cols = in.cols();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw DimensionError("layer_norm: gain and bias must match the row width");
  }
  Tensor normalized({rows, cols});
  std::vector<double> inv_std(rows);
  Tensor out({rows, cols});
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in(r, c);
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in(r, c) - mu) * (in(r, c) - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      normalized(r, c) = (in(r, c) - mu) * inv_std[r];
      out(r, c) = normalized(r, c) * gv[c] + bv[c];
    }
  }
  return x.graph->record(
      "layer_norm", std::move(out), {x.id, gain.id, bias.id},
      [x = x.id, gain = gain.id, bias = bias.id, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
        const Tensor& dy = g.output_grad(self);
        const Tensor& gv = g.value(gain);
        const std::size_t rows = dy.rows();
        const std::size_t cols = dy.cols();
        if (g.needs_grad(gain)) {
          Tensor& dg = g.grad_buffer(gain);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) dg[c] += dy(r, c) * normalized(r, c);
        }
        if (g.needs_grad(bias)) {
          g.grad_buffer(bias).mat().row(0) += dy.mat().colwise().sum();
        }
        if (g.needs_grad(x)) {
          Tensor& dx = g.grad_buffer(x);
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0;
            double mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = dy(r, c) * gv[c];
              mean_d += d;
              mean_dx += d * normalized(r, c);
            }
            mean_d /= n;
            mean_dx /= n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = dy(r, c) * gv[c];
              dx(r, c) += inv_std[r] * (d - mean_d - normalized(r, c) * mean_dx);
            }
          }
        }
      });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Tensor& t = table.value();
  const std::size_t cols = t.cols();
  Tensor out({indices.size(), cols});
  std::vector<int> idx(indices.begin(), indices.end());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= t.rows()) {
      throw IndexError("gather_rows: index " + std::to_string(idx[r]) + " outside table of " +
                       std::to_string(t.rows()) + " rows");
    }
    std::copy_n(t.row(static_cast<std::size_t>(idx[r])).begin(), cols, out.row(r).begin());
  }
  return table.graph->record("gather_rows", std::move(out), {table.id},
                             [table = table.id, idx = std::move(idx)](Graph& g, std::size_t self) {
                               const Tensor& dy = g.output_grad(self);
                               Tensor& dt = g.grad_buffer(table);
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                 auto src = dy.row(r);
                                 auto dst = dt.row(static_cast<std::size_t>(idx[r]));
                                 for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                               }
                             });
}

Var sum(Var a) {
  return a.graph->record("sum", Tensor::scalar(a.value().mat().sum()), {a.id}, [a = a.id](Graph& g, std::size_t self) {
    g.grad_buffer(a).mat().array() += g.output_grad(self)[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return a.graph->record("mean", Tensor::scalar(a.value().mat().sum() / n), {a.id},
                         [a = a.id, n](Graph& g, std::size_t self) {
                           g.grad_buffer(a).mat().array() += g.output_grad(self)[0] / n;
                         });
}

Var nll_rows(Var log_probs, std::span<const int> targets) {
  const Tensor& lp = log_probs.value();
  if (targets.size() != lp.rows()) throw DimensionError("nll_rows: one target per row required");
  std::vector<int> tg(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t r = 0; r < tg.size(); ++r) {
    if (tg[r] < 0 || static_cast<std::size_t>(tg[r]) >= lp.cols()) throw IndexError("nll_rows: target out of range");
    total -= lp(r, static_cast<std::size_t>(tg[r]));
  }
  return log_probs.graph->record("nll_rows", Tensor::scalar(total), {log_probs.id},
                                 [lp = log_probs.id, tg = std::move(tg)](Graph& g, std::size_t self) {
                                   const double d = g.output_grad(self)[0];
                                   Tensor& dx = g.grad_buffer(lp);
                                   for (std::size_t r = 0; r < tg.size(); ++r) dx(r, static_cast<std::size_t>(tg[r])) -= d;
                                 });
}

Var soft_cross_entropy(Var log_probs, const Tensor& probs) {
  const Tensor& lp = log_probs.value();
  require_same_shape(lp, probs, "soft_cross_entropy");
  const double total = -(lp.mat().array() * probs.mat().array()).sum();
  return log_probs.graph->record("soft_cross_entropy", Tensor::scalar(total), {log_probs.id},
                                 [lp = log_probs.id, probs](Graph& g, std::size_t self) {
                                   g.grad_buffer(lp).mat() -= g.output_grad(self)[0] * probs.mat();
                                 });
}

Var attention(Var q, Var k, Var v, std::size_t heads, std::size_t batch, bool causal) {
  require_same_graph(q, k);
  require_same_graph(q, v);
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  const std::size_t d = Q.cols();
  if (heads == 0 || d % heads != 0) throw DimensionError("attention: width not divisible by head count");
  if (K.cols() != d || V.cols() != d || !K.same_shape(V)) throw DimensionError("attention: key/value shape mismatch");
  if (batch == 0 || Q.rows() % batch != 0 || K.rows() % batch != 0) {
    throw DimensionError("attention: rows not divisible by batch");
  }
  const std::size_t nq = Q.rows() / batch;
  const std::size_t nk = K.rows() / batch;
  if (causal && nq != nk) throw DimensionError("attention: causal attention needs equal query and key lengths");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // Attention weights per (batch, head), kept for the backward pass.
  std::vector<num::RowMatrix> weights(batch * heads);
  Tensor out({Q.rows(), d});
  auto qm = Q.mat();
  auto km = K.mat();
  auto vm = V.mat();
  auto om = out.mat();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      auto qb = qm.block(b * nq, h * dh, nq, dh);
      auto kb = km.block(b * nk, h * dh, nk, dh);
      auto vb = vm.block(b * nk, h * dh, nk, dh);
      num::RowMatrix p = (qb * kb.transpose()) * inv_sqrt;
      for (std::size_t i = 0; i < nq; ++i) {
        const std::size_t visible = causal ? i + 1 : nk;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < visible; ++j) mx = std::max(mx, p(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j < visible; ++j) {
          p(i, j) = std::exp(p(i, j) - mx);
          total += p(i, j);
        }
        for (std::size_t j = 0; j < visible; ++j) p(i, j) /= total;
        for (std::size_t j = visible; j < nk; ++j) p(i, j) = 0.0;
      }
      om.block(b * nq, h * dh, nq, dh).noalias() = p * vb;
      weights[b * heads + h] = std::move(p);
    }
  }
  return q.graph->record(
      "attention", std::move(out), {q.id, k.id, v.id},
      [q = q.id, k = k.id, v = v.id, heads, batch, nq, nk, dh, inv_sqrt,
       weights = std::move(weights)](Graph& g, std::size_t self) {
        auto dy = g.output_grad(self).mat();
        auto qm = g.value(q).mat();
        auto km = g.value(k).mat();
        auto vm = g.value(v).mat();
        const bool gq = g.needs_grad(q);
        const bool gk = g.needs_grad(k);
        const bool gv = g.needs_grad(v);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const num::RowMatrix& p = weights[b * heads + h];
            auto dyb = dy.block(b * nq, h * dh, nq, dh);
            if (gv) g.grad_buffer(v).mat().block(b * nk, h * dh, nk, dh).noalias() += p.transpose() * dyb;
            if (!gq && !gk) continue;
            num::RowMatrix dp = dyb * vm.block(b * nk, h * dh, nk, dh).transpose();
            const Eigen::VectorXd dot = (dp.array() * p.array()).rowwise().sum();
            num::RowMatrix ds = (p.array() * (dp.array().colwise() - dot.array())).matrix() * inv_sqrt;
            if (gq) g.grad_buffer(q).mat().block(b * nq, h * dh, nq, dh).noalias() += ds * km.block(b * nk, h * dh, nk, dh);
            if (gk) g.grad_buffer(k).mat().block(b * nk, h * dh, nk, dh).noalias() += ds.transpose() * qm.block(b * nq, h * dh, nq, dh);
          }
        }
      });
}

}  // namespace mdchain::ad
