#include "rawradar/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace rawradar::ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < s.size(); ++i) out << (i ? "," : "") << s[i];
  out << "]";
  return out.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeMismatch("negative extent in shape " + shape_str(s));
    n *= std::size_t(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.size() > 5) throw ShapeMismatch("tensor rank above 5: " + shape_str(shape_));
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 5) throw ShapeMismatch("tensor rank above 5: " + shape_str(shape_));
  if (data_.size() != shape_size(shape_))
    throw ShapeMismatch("tensor data of " + std::to_string(data_.size()) + " values for shape " + shape_str(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

void Tensor::reshape(Shape s) {
  if (shape_size(s) != data_.size()) throw ShapeMismatch("reshape " + shape_str(shape_) + " -> " + shape_str(s));
  shape_ = std::move(s);
}

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::input(Tensor value, bool requires_grad) {
  Node n;
  n.tag = "input";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, int(nodes_.size()) - 1};
}

Var Graph::param(Parameter& p) {
  Node n;
  n.tag = "param:" + p.name;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {this, int(nodes_.size()) - 1};
}

Var Graph::op(std::string tag, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  Node n;
  n.tag = std::move(tag);
  n.value = std::move(value);
  for (const auto& v : inputs) {
    if (v.graph != this) throw std::invalid_argument("op '" + n.tag + "': input belongs to another graph");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, int(nodes_.size()) - 1};
}

const Tensor& Graph::grad(int id) const {
  const auto& n = nodes_.at(id);
  if (!n.has_grad) throw std::logic_error("no gradient recorded for node " + std::to_string(id) + " (" + n.tag + ")");
  return n.grad;
}

Tensor& Graph::grad_buffer(int id) {
  auto& n = nodes_.at(id);
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw std::invalid_argument("backward: loss belongs to another graph");
  auto& root = nodes_.at(loss.id);
  if (root.value.size() != 1)
    throw ShapeMismatch("backward: loss must be scalar, got shape " + shape_str(root.value.shape()));
  for (auto& n : nodes_) {
    const bool accumulating_leaf = n.inputs.empty() && n.param == nullptr && n.requires_grad;
    if (!accumulating_leaf) n.has_grad = false;
  }
  if (!root.requires_grad) return;
  std::vector<char> reachable(nodes_.size(), 0);
  reachable[loss.id] = 1;
  grad_buffer(loss.id)[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    if (!reachable[id]) continue;
    auto& n = nodes_[id];
    if (!n.requires_grad || !n.has_grad) continue;
    for (int in : n.inputs)
      if (nodes_[in].requires_grad) reachable[in] = 1;
    if (n.backward) n.backward(*this, id);
  }
  for (auto& n : nodes_)
    if (n.param && n.has_grad) {
      auto& dst = n.param->grad;
      if (!dst.same_shape(n.grad)) dst = Tensor(n.grad.shape());
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
}

Padding same_padding(int kh, int kw, int stride_h, int stride_w, int in_h, int in_w) {
  const int out_h = (in_h + stride_h - 1) / stride_h;
  const int out_w = (in_w + stride_w - 1) / stride_w;
  const int ph = std::max(0, (out_h - 1) * stride_h + kh - in_h);
  const int pw = std::max(0, (out_w - 1) * stride_w + kw - in_w);
  return {ph / 2, ph - ph / 2, pw / 2, pw - pw / 2};
}

namespace {

void require_same(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    throw ShapeMismatch(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

template <typename F>
Var unary(const char* tag, Var x, F&& f, std::function<double(double x, double y)> dfdx) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const int xid = x.id;
  return x.graph->op(tag, {x}, std::move(out), [xid, dfdx](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    const Tensor& xv = g.value(xid);
    const Tensor& yv = g.value(self);
    Tensor& gx = g.grad_buffer(xid);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * dfdx(xv[i], yv[i]);
  });
}

void accumulate(Graph& g, int id, const Tensor& src, double factor = 1.0) {
  if (!g.requires_grad(id)) return;
  Tensor& dst = g.grad_buffer(id);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

Var add(Var a, Var b) {
  require_same("add", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ai = a.id, bi = b.id;
  return a.graph->op("add", {a, b}, std::move(out), [ai, bi](Graph& g, int self) {
    accumulate(g, ai, g.grad(self));
    accumulate(g, bi, g.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int ai = a.id, bi = b.id;
  return a.graph->op("sub", {a, b}, std::move(out), [ai, bi](Graph& g, int self) {
    accumulate(g, ai, g.grad(self));
    accumulate(g, bi, g.grad(self), -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int ai = a.id, bi = b.id;
  return a.graph->op("mul", {a, b}, std::move(out), [ai, bi](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    if (g.requires_grad(ai)) {
      Tensor& ga = g.grad_buffer(ai);
      const Tensor& bv = g.value(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(bi)) {
      Tensor& gb = g.grad_buffer(bi);
      const Tensor& av = g.value(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= c;
  const int ai = a.id;
  return a.graph->op("scale", {a}, std::move(out), [ai, c](Graph& g, int self) { accumulate(g, ai, g.grad(self), c); });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v += c;
  const int ai = a.id;
  return a.graph->op("add_scalar", {a}, std::move(out), [ai](Graph& g, int self) { accumulate(g, ai, g.grad(self)); });
}

Var matmul(Var a, Var b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    throw ShapeMismatch("matmul: shapes " + shape_str(as) + " and " + shape_str(bs));
  const int m = as[0], k = as[1], n = bs[1];
  Tensor out({m, n});
  MapMat(out.data(), m, n).noalias() = CMapMat(a.value().data(), m, k) * CMapMat(b.value().data(), k, n);
  const int ai = a.id, bi = b.id;
  return a.graph->op("matmul", {a, b}, std::move(out), [ai, bi, m, k, n](Graph& g, int self) {
    CMapMat gy(g.grad(self).data(), m, n);
    if (g.requires_grad(ai))
      MapMat(g.grad_buffer(ai).data(), m, k).noalias() += gy * CMapMat(g.value(bi).data(), k, n).transpose();
    if (g.requires_grad(bi))
      MapMat(g.grad_buffer(bi).data(), k, n).noalias() += CMapMat(g.value(ai).data(), m, k).transpose() * gy;
  });
}

Var dense(Var x, Var w, Var b) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1] || b.shape() != Shape{ws[0]})
    throw ShapeMismatch("dense: input " + shape_str(xs) + ", weight " + shape_str(ws) + ", bias " + shape_str(b.shape()));
  const int n = xs[0], f = xs[1], o = ws[0];
  Tensor out({n, o});
  MapMat y(out.data(), n, o);
  y.noalias() = CMapMat(x.value().data(), n, f) * CMapMat(w.value().data(), o, f).transpose();
  const double* bias = b.value().data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < o; ++j) y(i, j) += bias[j];
  const int xi = x.id, wi = w.id, bi = b.id;
  return x.graph->op("dense", {x, w, b}, std::move(out), [xi, wi, bi, n, f, o](Graph& g, int self) {
    CMapMat gy(g.grad(self).data(), n, o);
    if (g.requires_grad(xi))
      MapMat(g.grad_buffer(xi).data(), n, f).noalias() += gy * CMapMat(g.value(wi).data(), o, f);
    if (g.requires_grad(wi))
      MapMat(g.grad_buffer(wi).data(), o, f).noalias() += gy.transpose() * CMapMat(g.value(xi).data(), n, f);
    if (g.requires_grad(bi)) {
      Tensor& gb = g.grad_buffer(bi);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < o; ++j) gb[j] += gy(i, j);
    }
  });
}

namespace {

struct ConvGeom {
  int n, c, h, w, o, kh, kw, sh, sw, oh, ow;
  Padding pad;
  int ckk() const { return c * kh * kw; }
  int ohw() const { return oh * ow; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && sh == 1 && sw == 1 && pad.top == 0 && pad.left == 0 && pad.bottom == 0 && pad.right == 0;
  }
};

void im2col(const ConvGeom& g, const double* x, double* col) {
  for (int ci = 0; ci < g.c; ++ci)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        double* row = col + std::size_t((ci * g.kh + i) * g.kw + j) * g.ohw();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.sh - g.pad.top + i;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.sw - g.pad.left + j;
            row[oy * g.ow + ox] =
                (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? x[(std::size_t(ci) * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
}

void col2im(const ConvGeom& g, const double* col, double* dx) {
  for (int ci = 0; ci < g.c; ++ci)
    for (int i = 0; i < g.kh; ++i)
      for (int j = 0; j < g.kw; ++j) {
        const double* row = col + std::size_t((ci * g.kh + i) * g.kw + j) * g.ohw();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.sh - g.pad.top + i;
          if (iy < 0 || iy >= g.h) continue;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.sw - g.pad.left + j;
            if (ix >= 0 && ix < g.w) dx[(std::size_t(ci) * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
          }
        }
      }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, int stride_h, int stride_w, Padding pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1] || b.shape() != Shape{ws[0]} || stride_h < 1 || stride_w < 1)
    throw ShapeMismatch("conv2d: input " + shape_str(xs) + ", weight " + shape_str(ws) + ", bias " + shape_str(b.shape()));
  ConvGeom geo{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride_h, stride_w, 0, 0, pad};
  geo.oh = (geo.h + pad.top + pad.bottom - geo.kh) / stride_h + 1;
  geo.ow = (geo.w + pad.left + pad.right - geo.kw) / stride_w + 1;
  if (geo.oh < 1 || geo.ow < 1)
    throw ShapeMismatch("conv2d: kernel " + shape_str(ws) + " does not fit input " + shape_str(xs));

  Tensor out({geo.n, geo.o, geo.oh, geo.ow});
  const double* xv = x.value().data();
  CMapMat wm(w.value().data(), geo.o, geo.ckk());
  const double* bias = b.value().data();
  std::vector<double> col(geo.pointwise() ? 0 : std::size_t(geo.ckk()) * geo.ohw());
  for (int s = 0; s < geo.n; ++s) {
    const double* xs_ptr = xv + std::size_t(s) * geo.c * geo.h * geo.w;
    const double* colp = xs_ptr;
    if (!geo.pointwise()) {
      im2col(geo, xs_ptr, col.data());
      colp = col.data();
    }
    MapMat y(out.data() + std::size_t(s) * geo.o * geo.ohw(), geo.o, geo.ohw());
    y.noalias() = wm * CMapMat(colp, geo.ckk(), geo.ohw());
    for (int oc = 0; oc < geo.o; ++oc) y.row(oc).array() += bias[oc];
  }

  const int xi = x.id, wi = w.id, bi = b.id;
  return x.graph->op("conv2d", {x, w, b}, std::move(out), [xi, wi, bi, geo](Graph& g, int self) {
    const double* gy = g.grad(self).data();
    const double* xv = g.value(xi).data();
    const bool need_x = g.requires_grad(xi);
    const bool need_w = g.requires_grad(wi);
    const bool need_b = g.requires_grad(bi);
    CMapMat wm(g.value(wi).data(), geo.o, geo.ckk());
    std::vector<double> col(geo.pointwise() ? 0 : std::size_t(geo.ckk()) * geo.ohw());
    std::vector<double> dcol(col.size());
    double* gx = need_x ? g.grad_buffer(xi).data() : nullptr;
    double* gw = need_w ? g.grad_buffer(wi).data() : nullptr;
    double* gb = need_b ? g.grad_buffer(bi).data() : nullptr;
    for (int s = 0; s < geo.n; ++s) {
      CMapMat gys(gy + std::size_t(s) * geo.o * geo.ohw(), geo.o, geo.ohw());
      const double* xs_ptr = xv + std::size_t(s) * geo.c * geo.h * geo.w;
      if (need_w) {
        const double* colp = xs_ptr;
        if (!geo.pointwise()) {
          im2col(geo, xs_ptr, col.data());
          colp = col.data();
        }
        MapMat(gw, geo.o, geo.ckk()).noalias() += gys * CMapMat(colp, geo.ckk(), geo.ohw()).transpose();
      }
      if (need_b)
        for (int oc = 0; oc < geo.o; ++oc) {
          const double* row = gy + (std::size_t(s) * geo.o + oc) * geo.ohw();
          double acc = 0;
          for (int i = 0; i < geo.ohw(); ++i) acc += row[i];
          gb[oc] += acc;
        }
      if (need_x) {
        double* gxs = gx + std::size_t(s) * geo.c * geo.h * geo.w;
        if (geo.pointwise()) {
          MapMat(gxs, geo.c, geo.ohw()).noalias() += wm.transpose() * gys;
        } else {
          MapMat(dcol.data(), geo.ckk(), geo.ohw()).noalias() = wm.transpose() * gys;
          col2im(geo, dcol.data(), gxs);
        }
      }
    }
  });
}

Var conv2d_same(Var x, Var w, Var b, int stride) {
  if (x.shape().size() != 4 || w.shape().size() != 4)
    throw ShapeMismatch("conv2d: input " + shape_str(x.shape()) + ", weight " + shape_str(w.shape()));
  const Padding pad = same_padding(w.shape()[2], w.shape()[3], stride, stride, x.shape()[2], x.shape()[3]);
  return conv2d(x, w, b, stride, stride, pad);
}

Var conv1x1(Var x, Var w, Var b) {
  if (w.shape().size() != 4 || w.shape()[2] != 1 || w.shape()[3] != 1)
    throw ShapeMismatch("conv1x1: weight " + shape_str(w.shape()) + " is not 1x1");
  return conv2d(x, w, b, 1, 1, Padding{});
}

Var upsample_nearest_x2(Var x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeMismatch("upsample_nearest_x2: input " + shape_str(s));
  const int nc = s[0] * s[1], h = s[2], w = s[3];
  Tensor out({s[0], s[1], 2 * h, 2 * w});
  const double* xv = x.value().data();
  for (int p = 0; p < nc; ++p)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        out[(std::size_t(p) * 2 * h + y) * 2 * w + xx] = xv[(std::size_t(p) * h + y / 2) * w + xx / 2];
  const int xi = x.id;
  return x.graph->op("upsample_nearest_x2", {x}, std::move(out), [xi, nc, h, w](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_buffer(xi);
    for (int p = 0; p < nc; ++p)
      for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
          gx[(std::size_t(p) * h + y / 2) * w + xx / 2] += gy[(std::size_t(p) * 2 * h + y) * 2 * w + xx];
  });
}

namespace {

std::pair<std::size_t, std::size_t> outer_inner(const Shape& s, int axis) {
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < int(s.size()); ++i) inner *= s[i];
  return {outer, inner};
}

}  // namespace

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeMismatch("concat: no inputs");
  Shape base = parts[0].shape();
  if (axis < 0 || axis >= int(base.size())) throw ShapeMismatch("concat: axis " + std::to_string(axis) + " for " + shape_str(base));
  int total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != base.size()) throw ShapeMismatch("concat: shapes " + shape_str(base) + " and " + shape_str(s));
    for (int i = 0; i < int(s.size()); ++i)
      if (i != axis && s[i] != base[i]) throw ShapeMismatch("concat: shapes " + shape_str(base) + " and " + shape_str(s));
    total += s[axis];
  }
  Shape out_shape = base;
  out_shape[axis] = total;
  Tensor out(out_shape);
  const auto [outer, inner] = outer_inner(out_shape, axis);
  std::vector<int> ids, extents;
  int offset = 0;
  for (const auto& p : parts) {
    const int ext = p.shape()[axis];
    const double* src = p.value().data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(src + o * ext * inner, src + (o + 1) * ext * inner, out.data() + (o * total + offset) * inner);
    ids.push_back(p.id);
    extents.push_back(ext);
    offset += ext;
  }
  std::size_t outer_c = outer, inner_c = inner;
  return parts[0].graph->op("concat", parts, std::move(out), [ids, extents, total, outer_c, inner_c](Graph& g, int self) {
    const double* gy = g.grad(self).data();
    int off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const int ext = extents[k];
      if (g.requires_grad(ids[k])) {
        double* gx = g.grad_buffer(ids[k]).data();
        for (std::size_t o = 0; o < outer_c; ++o)
          for (std::size_t i = 0; i < ext * inner_c; ++i) gx[o * ext * inner_c + i] += gy[(o * total + off) * inner_c + i];
      }
      off += ext;
    }
  });
}

Var slice(Var x, int axis, int start, int length) {
  const Shape& s = x.shape();
  if (axis < 0 || axis >= int(s.size()) || start < 0 || length < 1 || start + length > s[axis])
    throw ShapeMismatch("slice: axis " + std::to_string(axis) + " [" + std::to_string(start) + ", +" +
                        std::to_string(length) + ") of " + shape_str(s));
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out(out_shape);
  const auto [outer, inner] = outer_inner(s, axis);
  const int ext = s[axis];
  const double* src = x.value().data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(src + (o * ext + start) * inner, src + (o * ext + start + length) * inner, out.data() + o * length * inner);
  const int xi = x.id;
  std::size_t outer_c = outer, inner_c = inner;
  return x.graph->op("slice", {x}, std::move(out), [xi, outer_c, inner_c, ext, start, length](Graph& g, int self) {
    const double* gy = g.grad(self).data();
    double* gx = g.grad_buffer(xi).data();
    for (std::size_t o = 0; o < outer_c; ++o)
      for (std::size_t i = 0; i < length * inner_c; ++i) gx[(o * ext + start) * inner_c + i] += gy[o * length * inner_c + i];
  });
}

Var reshape(Var x, Shape shape) {
  if (shape_size(shape) != x.value().size())
    throw ShapeMismatch("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor out = x.value();
  out.reshape(std::move(shape));
  const int xi = x.id;
  return x.graph->op("reshape", {x}, std::move(out), [xi](Graph& g, int self) { accumulate(g, xi, g.grad(self)); });
}

Var dropout(Var x, double rate, bool train, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (!train || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution bern(keep);
  Tensor mask(x.shape());
  for (auto& m : mask.values()) m = bern(rng) ? 1.0 / keep : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const int xi = x.id;
  return x.graph->op("dropout", {x}, std::move(out), [xi, mask = std::move(mask)](Graph& g, int self) {
    const Tensor& gy = g.grad(self);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
  });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double xv, double) { return 1.0 / xv; });
}

Var elu(Var x) {
  return unary(
      "elu", x, [](double v) { return v > 0 ? v : std::expm1(v); },
      [](double xv, double y) { return xv > 0 ? 1.0 : y + 1.0; });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double xv, double) { return (xv >= lo && xv <= hi) ? 1.0 : 0.0; });
}

Var reduce_sum(Var x) {
  double s = 0;
  for (double v : x.value().values()) s += v;
  const int xi = x.id;
  return x.graph->op("reduce_sum", {x}, Tensor::scalar(s), [xi](Graph& g, int self) {
    const double gy = g.grad(self)[0];
    for (auto& v : g.grad_buffer(xi).values()) v += gy;
  });
}

Var reduce_mean(Var x) {
  const double n = double(x.value().size());
  return scale(reduce_sum(x), 1.0 / n);
}

Var focal_loss(Var p, const Tensor& y, double gamma, double alpha) {
  if (!p.value().same_shape(y))
    throw ShapeMismatch("focal_loss: prediction " + shape_str(p.shape()) + " vs label " + shape_str(y.shape()));
  constexpr double kLo = 1e-7;
  constexpr double kHi = 1.0 - 1e-7;
  const Tensor& pv = p.value();
  const std::size_t n = pv.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = std::clamp(pv[i], kLo, kHi);
    const bool pos = y[i] > 0.5;
    const double pt = pos ? pc : 1.0 - pc;
    const double at = pos ? 1.0 : alpha;
    total += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  const int pi = p.id;
  return p.graph->op("focal_loss", {p}, Tensor::scalar(total / double(n)), [pi, y, gamma, alpha, n](Graph& g, int self) {
    const double gy = g.grad(self)[0] / double(n);
    const Tensor& pv = g.value(pi);
    Tensor& gp = g.grad_buffer(pi);
    for (std::size_t i = 0; i < n; ++i) {
      if (pv[i] < kLo || pv[i] > kHi) continue;
      const bool pos = y[i] > 0.5;
      const double pt = pos ? pv[i] : 1.0 - pv[i];
      const double at = pos ? 1.0 : alpha;
      const double q = 1.0 - pt;
      double dpt = -at * std::pow(q, gamma) / pt;
      if (gamma != 0.0) dpt += at * gamma * std::pow(q, gamma - 1.0) * std::log(pt);
      gp[i] += gy * (pos ? dpt : -dpt);
    }
  });
}

Var squared_distance(Var x, const Tensor& ref) {
  if (!x.value().same_shape(ref))
    throw ShapeMismatch("squared_distance: " + shape_str(x.shape()) + " vs reference " + shape_str(ref.shape()));
  double s = 0;
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) s += (xv[i] - ref[i]) * (xv[i] - ref[i]);
  const int xi = x.id;
  return x.graph->op("squared_distance", {x}, Tensor::scalar(s), [xi, ref](Graph& g, int self) {
    const double gy = g.grad(self)[0];
    const Tensor& xv = g.value(xi);
    Tensor& gx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * gy * (xv[i] - ref[i]);
  });
}

void adam_step(Parameter& p, AdamState& st, const AdamConfig& cfg) {
  for (std::size_t i = 0; i < p.grad.size(); ++i)
    if (!std::isfinite(p.grad[i]))
      throw NonFiniteGradient("non-finite gradient in parameter '" + p.name + "' at element " + std::to_string(i));
  if (!st.m.same_shape(p.value) || st.m.size() != p.value.size()) {
    st.m = Tensor(p.value.shape());
    st.v = Tensor(p.value.shape());
    st.step = 0;
  }
  if (!p.grad.same_shape(p.value)) throw ShapeMismatch("adam_step: gradient shape differs for '" + p.name + "'");
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double gi = p.grad[i];
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * gi;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * gi * gi;
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

double GradCheckReport::worst() const {
  double w = 0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

GradCheckReport grad_check(const std::function<Var(Graph&)>& build, const std::vector<Parameter*>& params, double eps,
                           double tolerance, double floor, std::size_t max_elements_per_param) {
  GradCheckReport report;
  auto evaluate = [&]() {
    Graph g;
    const Var loss = build(g);
    if (g.nondeterministic()) report.deterministic = false;
    return loss.value().item();
  };
  const double first = evaluate();
  const double second = evaluate();
  if (first != second) report.deterministic = false;
  if (!report.deterministic) report.passed = false;
  if (params.empty()) return report;

  std::vector<Tensor> saved;
  for (auto* p : params) {
    saved.push_back(p->grad);
    p->grad = Tensor(p->value.shape());
  }
  {
    Graph g;
    g.backward(build(g));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    GradCheckEntry entry;
    entry.name = p.name;
    const std::size_t n = p.value.size();
    std::size_t stride = 1;
    if (max_elements_per_param > 0 && n > max_elements_per_param) stride = (n + max_elements_per_param - 1) / max_elements_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = evaluate();
      p.value[i] = orig - eps;
      const double down = evaluate();
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p.grad[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      if (rel > entry.max_rel_error || i == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, rel);
        if (rel >= entry.max_rel_error) {
          entry.worst_index = i;
          entry.analytic = analytic;
          entry.numeric = numeric;
        }
      }
    }
    entry.passed = entry.max_rel_error < tolerance;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(entry);
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->grad = std::move(saved[k]);
  return report;
}

}  // namespace rawradar::ag
