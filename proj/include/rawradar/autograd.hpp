#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rawradar::ag {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

// Dense row-major array of doubles with up to five axes. A scalar has an
// empty shape and one element.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  int dim(int axis) const { return shape_.at(axis); }
  int rank() const { return int(shape_.size()); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape s);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Named trainable array that lives outside any graph; gradients accumulate
// in `grad` until zeroed.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

class Graph;

// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return graph != nullptr && id >= 0; }
};

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tape of operations. Nodes are appended in execution order, which is a
// topological order; backward walks it once in reverse. One owner at a time.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Var input(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return input(std::move(value), false); }
  Var param(Parameter& p);

  // Appends an operation node; `backward` reads grad(self) and adds into the
  // gradients of `inputs`. Used by all primitives and by external layers.
  Var op(std::string tag, std::vector<Var> inputs, Tensor value, BackwardFn backward);
  // Marks the graph as depending on entropy outside the caller's control.
  void mark_nondeterministic() { nondeterministic_ = true; }
  bool nondeterministic() const { return nondeterministic_; }

  // Scalar loss only. Interior gradients are recomputed on every call while
  // leaf and parameter gradients accumulate.
  void backward(Var loss);

  const Tensor& value(int id) const { return nodes_.at(id).value; }
  const Tensor& grad(int id) const;
  const Tensor& grad(Var v) const { return grad(v.id); }
  // Mutable gradient buffer of a node, allocated on first use.
  Tensor& grad_buffer(int id);
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }
  const std::vector<int>& inputs_of(int id) const { return nodes_.at(id).inputs; }
  const std::string& tag(int id) const { return nodes_.at(id).tag; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string tag;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  bool nondeterministic_ = false;
};

struct Padding {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
};

// Output size ceil(in / stride), extra padding at the bottom/right.
Padding same_padding(int kh, int kw, int stride_h, int stride_w, int in_h, int in_w);

// Elementwise ops require identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);  // [m,k] x [k,n]
// x [N, F], w [O, F], b [O] -> [N, O]
Var dense(Var x, Var w, Var b);
// x [N, C, H, W], w [O, C, kh, kw], b [O]
Var conv2d(Var x, Var w, Var b, int stride_h, int stride_w, Padding pad);
Var conv2d_same(Var x, Var w, Var b, int stride = 1);
Var conv1x1(Var x, Var w, Var b);
Var upsample_nearest_x2(Var x);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(Var x, int axis, int start, int length);
Var reshape(Var x, Shape shape);
// Inverted dropout; identity when !train or rate == 0.
Var dropout(Var x, double rate, bool train, std::uint64_t seed);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var elu(Var x);
Var clamp(Var x, double lo, double hi);
Var reduce_sum(Var x);
Var reduce_mean(Var x);

// Mean over pixels of -alpha_t (1 - p_t)^gamma log p_t, p clamped to
// [1e-7, 1 - 1e-7]; y is treated as a constant {0,1} map.
Var focal_loss(Var p, const Tensor& y, double gamma, double alpha);
// sum (x - ref)^2 with `ref` constant.
Var squared_distance(Var x, const Tensor& ref);

// Adam moments for one parameter.
struct AdamState {
  Tensor m;
  Tensor v;
  long step = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// In-place Adam update of `p` from `p.grad`; throws NonFiniteGradient naming
// the parameter before touching any value.
void adam_step(Parameter& p, AdamState& state, const AdamConfig& cfg);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool deterministic = true;
  bool passed = true;
  double worst() const;
};

// Compares analytic gradients of the scalar built by `build` with central
// differences over every element of every parameter. `build` is invoked on a
// fresh Graph each time and must be deterministic; a second evaluation that
// differs from the first flags the report as non-deterministic. Elementwise
// relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport grad_check(const std::function<Var(Graph&)>& build, const std::vector<Parameter*>& params,
                           double eps = 1e-5, double tolerance = 1e-3, double floor = 1e-6,
                           std::size_t max_elements_per_param = 0);

}  // namespace rawradar::ag
