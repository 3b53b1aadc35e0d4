#include "ectg/nn/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "ectg/rng.hpp"

namespace ectg::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

MapMat value_of(Node& n) { return MapMat(n.value.data(), n.rows, n.cols); }
CMapMat value_of(const Node& n) { return CMapMat(n.value.data(), n.rows, n.cols); }
MapMat grad_of(Node& n) {
  n.ensure_grad();
  return MapMat(n.grad.data(), n.rows, n.cols);
}
CMapMat out_grad(const Node& n) { return CMapMat(n.grad.data(), n.rows, n.cols); }

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a, b);
}

template <typename F, typename G>
Tensor unary(const Tensor& a, F&& fwd, G&& dfdx_from_xy) {
  auto out = detail::make_result(a.rows(), a.cols(), {a.node()}, [dfdx_from_xy](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      p.grad[i] += self.grad[i] * dfdx_from_xy(p.value[i], self.value[i]);
    }
  });
  const auto& x = a.node()->value;
  for (std::size_t i = 0; i < x.size(); ++i) out->value[i] = fwd(x[i]);
  return Tensor(out);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  auto out = detail::make_result(a.rows(), b.cols(), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto dc = out_grad(self);
    if (pa.requires_grad) grad_of(pa).noalias() += dc * value_of(pb).transpose();
    if (pb.requires_grad) grad_of(pb).noalias() += value_of(pa).transpose() * dc;
  });
  value_of(*out).noalias() = value_of(*a.node()) * value_of(*b.node());
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  auto out = detail::make_result(a.cols(), a.rows(), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    grad_of(p) += out_grad(self).transpose();
  });
  value_of(*out) = value_of(*a.node()).transpose();
  return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool broadcast = b.rows() == 1 && a.rows() != 1 && a.cols() == b.cols();
  if (!broadcast) require_same("add", a, b);
  auto out = detail::make_result(a.rows(), a.cols(), {a.node(), b.node()}, [broadcast](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto dc = out_grad(self);
    if (pa.requires_grad) grad_of(pa) += dc;
    if (pb.requires_grad) {
      if (broadcast) {
        grad_of(pb) += dc.colwise().sum();
      } else {
        grad_of(pb) += dc;
      }
    }
  });
  if (broadcast) {
    value_of(*out) = value_of(*a.node()).rowwise() + value_of(*b.node()).row(0);
  } else {
    value_of(*out) = value_of(*a.node()) + value_of(*b.node());
  }
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  auto out = detail::make_result(a.rows(), a.cols(), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) grad_of(pa) += out_grad(self);
    if (pb.requires_grad) grad_of(pb) -= out_grad(self);
  });
  value_of(*out) = value_of(*a.node()) - value_of(*b.node());
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  auto out = detail::make_result(a.rows(), a.cols(), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    auto dc = out_grad(self);
    if (pa.requires_grad) grad_of(pa) += dc.cwiseProduct(value_of(pb));
    if (pb.requires_grad) grad_of(pb) += dc.cwiseProduct(value_of(pa));
  });
  value_of(*out) = value_of(*a.node()).cwiseProduct(value_of(*b.node()));
  return Tensor(out);
}

Tensor scale(const Tensor& a, double factor) {
  auto out = detail::make_result(a.rows(), a.cols(), {a.node()}, [factor](Node& self) {
    grad_of(*self.parents[0]) += factor * out_grad(self);
  });
  value_of(*out) = factor * value_of(*a.node());
  return Tensor(out);
}

Tensor add_scalar(const Tensor& a, double offset) {
  auto out = detail::make_result(a.rows(), a.cols(), {a.node()}, [](Node& self) {
    grad_of(*self.parents[0]) += out_grad(self);
  });
  value_of(*out) = value_of(*a.node()).array() + offset;
  return Tensor(out);
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) shape_fail("mul_scalar", a, s);
  auto out = detail::make_result(a.rows(), a.cols(), {a.node(), s.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& ps = *self.parents[1];
    auto dc = out_grad(self);
    if (pa.requires_grad) grad_of(pa) += ps.value[0] * dc;
    if (ps.requires_grad) {
      ps.ensure_grad();
      ps.grad[0] += dc.cwiseProduct(value_of(pa)).sum();
    }
  });
  value_of(*out) = s.node()->value[0] * value_of(*a.node());
  return Tensor(out);
}

Tensor scale_rows(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) shape_fail("scale_rows", a, col);
  auto out = detail::make_result(a.rows(), a.cols(), {a.node(), col.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pc = *self.parents[1];
    auto dc = out_grad(self);
    if (pa.requires_grad) {
      grad_of(pa) += (dc.array().colwise() * value_of(pc).col(0).array()).matrix();
    }
    if (pc.requires_grad) {
      grad_of(pc) += dc.cwiseProduct(value_of(pa)).rowwise().sum();
    }
  });
  value_of(*out) =
      (value_of(*a.node()).array().colwise() * value_of(*col.node()).col(0).array()).matrix();
  return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  std::size_t rows = 0;
  const std::size_t cols = parts[0].cols();
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts[0], p);
    rows += p.rows();
    parents.push_back(p.node());
  }
  auto out = detail::make_result(rows, cols, parents, [](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) p->grad[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out->value.begin() + offset);
    offset += p.size();
  }
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts[0], p);
    cols += p.cols();
    parents.push_back(p.node());
  }
  auto out = detail::make_result(rows, cols, parents, [](Node& self) {
    std::size_t offset = 0;
    auto dc = out_grad(self);
    for (auto& p : self.parents) {
      if (p->requires_grad) grad_of(*p) += dc.middleCols(offset, p->cols);
      offset += p->cols;
    }
  });
  std::size_t offset = 0;
  for (const auto& p : parts) {
    value_of(*out).middleCols(offset, p.cols()) = value_of(*p.node());
    offset += p.cols();
  }
  return Tensor(out);
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + a.shape_str());
  }
  auto out = detail::make_result(count, a.cols(), {a.node()}, [begin, count](Node& self) {
    grad_of(*self.parents[0]).middleRows(begin, count) += out_grad(self);
  });
  value_of(*out) = value_of(*a.node()).middleRows(begin, count);
  return Tensor(out);
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) {
    throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " + a.shape_str());
  }
  auto out = detail::make_result(a.rows(), count, {a.node()}, [begin, count](Node& self) {
    grad_of(*self.parents[0]).middleCols(begin, count) += out_grad(self);
  });
  value_of(*out) = value_of(*a.node()).middleCols(begin, count);
  return Tensor(out);
}

Tensor repeat_rows(const Tensor& row, std::size_t times) {
  if (row.rows() != 1) throw ShapeError("repeat_rows: expected a row, got " + row.shape_str());
  auto out = detail::make_result(times, row.cols(), {row.node()}, [](Node& self) {
    grad_of(*self.parents[0]) += out_grad(self).colwise().sum();
  });
  value_of(*out) = value_of(*row.node()).replicate(times, 1);
  return Tensor(out);
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  const std::size_t d = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
      throw ShapeError("embedding: id " + std::to_string(id) + " outside table " +
                       table.shape_str());
    }
  }
  auto out = detail::make_result(ids.size(), d, {table.node()}, [ids, d](Node& self) {
    Node& t = *self.parents[0];
    t.ensure_grad();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      double* dst = t.grad.data() + static_cast<std::size_t>(ids[r]) * d;
      const double* src = self.grad.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
  const auto& tv = table.node()->value;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[r]) * d), d,
                out->value.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return Tensor(out);
}

Tensor gather(const Tensor& a, const std::vector<std::pair<std::size_t, std::size_t>>& at) {
  for (const auto& [r, c] : at) {
    if (r >= a.rows() || c >= a.cols()) {
      throw ShapeError("gather: index (" + std::to_string(r) + "," + std::to_string(c) +
                       ") outside " + a.shape_str());
    }
  }
  const std::size_t cols = a.cols();
  auto out = detail::make_result(at.size(), 1, {a.node()}, [at, cols](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < at.size(); ++i) {
      p.grad[at[i].first * cols + at[i].second] += self.grad[i];
    }
  });
  for (std::size_t i = 0; i < at.size(); ++i) out->value[i] = a.at(at[i].first, at[i].second);
  return Tensor(out);
}

Tensor softmax(const Tensor& a, int axis) {
  if (axis == 0) return transpose(softmax(transpose(a), 1));
  if (axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  auto out = detail::make_result(a.rows(), a.cols(), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto y = value_of(std::as_const(self));
    auto dy = out_grad(self);
    Eigen::VectorXd dot = y.cwiseProduct(dy).rowwise().sum();
    grad_of(p) += (y.array() * (dy.colwise() - dot).array()).matrix();
  });
  // scalar exp so that -inf entries come out as exact zeros
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* x = a.values().data() + r * n;
    double* y = out->value.data() + r * n;
    const double m = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) total += (y[c] = std::exp(x[c] - m));
    for (std::size_t c = 0; c < n; ++c) y[c] /= total;
  }
  return Tensor(out);
}

Tensor log_softmax(const Tensor& a) {
  auto out = detail::make_result(a.rows(), a.cols(), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto y = value_of(std::as_const(self));
    auto dy = out_grad(self);
    Eigen::VectorXd total = dy.rowwise().sum();
    RowMat soft = y.array().exp().matrix();
    grad_of(p) += dy - (soft.array().colwise() * total.array()).matrix();
  });
  auto x = value_of(*a.node());
  auto y = value_of(*out);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    y.row(r) = (x.row(r).array() - lse).matrix();
  }
  return Tensor(out);
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols()) shape_fail("layer_norm", x, gamma);
  if (beta.rows() != 1 || beta.cols() != x.cols()) shape_fail("layer_norm", x, beta);
  const std::size_t rows = x.rows();
  const std::size_t n = x.cols();
  auto xhat = std::make_shared<RowMat>(rows, n);
  auto inv_std = std::make_shared<Eigen::VectorXd>(rows);
  auto xv = value_of(*x.node());
  for (std::size_t r = 0; r < rows; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    (*inv_std)(r) = 1.0 / std::sqrt(var + eps);
    xhat->row(r) = (xv.row(r).array() - mu) * (*inv_std)(r);
  }
  auto out = detail::make_result(
      rows, n, {x.node(), gamma.node(), beta.node()}, [xhat, inv_std, n](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        auto dy = out_grad(self);
        if (pg.requires_grad) grad_of(pg) += dy.cwiseProduct(*xhat).colwise().sum();
        if (pb.requires_grad) grad_of(pb) += dy.colwise().sum();
        if (px.requires_grad) {
          RowMat dxhat = (dy.array().rowwise() * value_of(pg).row(0).array()).matrix();
          Eigen::VectorXd s1 = dxhat.rowwise().sum();
          Eigen::VectorXd s2 = dxhat.cwiseProduct(*xhat).rowwise().sum();
          auto dx = grad_of(px);
          const double nn = static_cast<double>(n);
          for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
            dx.row(r) += ((*inv_std)(r) / nn) *
                         (nn * dxhat.row(r).array() - s1(r) - xhat->row(r).array() * s2(r)).matrix();
          }
        }
      });
  value_of(*out) =
      ((xhat->array().rowwise() * value_of(*gamma.node()).row(0).array()).rowwise() +
       value_of(*beta.node()).row(0).array())
          .matrix();
  return Tensor(out);
}

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw ShapeError("dropout: p must be < 1");
  auto keep = std::make_shared<std::vector<double>>(x.size());
  const double s = 1.0 / (1.0 - p);
  for (auto& k : *keep) k = rng.uniform() >= p ? s : 0.0;
  auto out = detail::make_result(x.rows(), x.cols(), {x.node()}, [keep](Node& self) {
    Node& px = *self.parents[0];
    px.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i] * (*keep)[i];
  });
  for (std::size_t i = 0; i < x.size(); ++i) out->value[i] = x.values()[i] * (*keep)[i];
  return Tensor(out);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (targets.size() != logits.rows() || targets.empty()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     logits.shape_str());
  }
  std::vector<std::pair<std::size_t, std::size_t>> at;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= logits.cols()) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[r]) + " outside " +
                       logits.shape_str());
    }
    at.emplace_back(r, static_cast<std::size_t>(targets[r]));
  }
  return scale(mean(gather(log_softmax(logits), at)), -1.0);
}

Tensor masked_fill(const Tensor& a, const std::vector<bool>& mask, double value) {
  if (mask.size() != a.size()) {
    throw ShapeError("masked_fill: mask of " + std::to_string(mask.size()) + " for " +
                     a.shape_str());
  }
  auto out = detail::make_result(a.rows(), a.cols(), {a.node()}, [mask](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) p.grad[i] += self.grad[i];
    }
  });
  for (std::size_t i = 0; i < mask.size(); ++i) out->value[i] = mask[i] ? value : a.values()[i];
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  auto out = detail::make_result(1, 1, {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0];
  });
  out->value[0] = value_of(*a.node()).sum();
  return Tensor(out);
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

}  // namespace ectg::nn
