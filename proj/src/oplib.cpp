#include "nomto/oplib.hpp"

#include <boost/math/special_functions/airy.hpp>
#include <cmath>

namespace nomto {

namespace {

std::vector<OpSpec> build_ops() {
  return {
      {"id", 1, OpKind::Id, false, 0, Axis::T},
      {"const", 1, OpKind::Const, false, 0, Axis::T},
      {"square", 1, OpKind::Square, false, 0, Axis::T},
      {"sin", 1, OpKind::Sin, false, 0, Axis::T},
      {"cos", 1, OpKind::Cos, false, 0, Axis::T},
      {"ln", 1, OpKind::Ln, false, 0, Axis::T},
      {"sqrt", 1, OpKind::Sqrt, false, 0, Axis::T},
      {"airy", 1, OpKind::Airy, false, 0, Axis::T},
      {"gamma", 1, OpKind::Gamma, false, 0, Axis::T},
      {"ddt", 1, OpKind::DDt, true, 1, Axis::T},
      {"ddx", 1, OpKind::DDx, true, 1, Axis::X},
      {"ddy", 1, OpKind::DDy, true, 1, Axis::Y},
      {"mul", 2, OpKind::Mul, false, 0, Axis::T},
      {"div", 2, OpKind::Div, false, 0, Axis::T},
  };
}

std::vector<LibraryPreset> build_presets() {
  return {
      {"sr_benchmark",
       {"id", "const", "square", "sin", "cos", "ln", "sqrt", "mul", "div"}},
      {"derivatives_special",
       {"id", "ddt", "ddt", "sin", "airy", "gamma", "mul", "div"}},
      {"heat", {"ddx", "ddy"}},
      {"burgers", {"id", "id", "mul", "mul", "ddx", "ddy"}},
  };
}

}  // namespace

const std::vector<OpSpec>& all_ops() {
  static const std::vector<OpSpec> ops = build_ops();
  return ops;
}

const OpSpec& op_by_name(const std::string& name) {
  for (const auto& op : all_ops())
    if (op.name == name) return op;
  throw ConfigError("unknown operation: " + name);
}

const std::vector<LibraryPreset>& all_library_presets() {
  static const std::vector<LibraryPreset> presets = build_presets();
  return presets;
}

const LibraryPreset& library_preset(const std::string& name) {
  for (const auto& p : all_library_presets())
    if (p.name == name) return p;
  throw ConfigError("unknown library preset: " + name);
}

std::vector<OpSpec> resolve_ops(const std::vector<std::string>& names) {
  std::vector<OpSpec> ops;
  ops.reserve(names.size());
  for (const auto& n : names) ops.push_back(op_by_name(n));
  return ops;
}

double finite_or_saturate(double v, double clip_limit) {
  if (std::isnan(v)) return 0.0;
  if (std::isinf(v)) return v > 0 ? clip_limit : -clip_limit;
  return v;
}

double saturate_node(double v, double clip_limit) {
  v = finite_or_saturate(v, clip_limit);
  return std::clamp(v, -clip_limit, clip_limit);
}

double ProjectionSpec::project(double v) const {
  return std::tanh(std::clamp(finite_or_saturate(v, clip_limit), -clip_limit,
                              clip_limit));
}

double ProjectionSpec::crop(double y) const {
  const double hi = crop_hi();
  return std::clamp(finite_or_saturate(y, 1.0), -hi, hi);
}

double ProjectionSpec::unproject(double y) const {
  y = crop(y);
  if (y >= 1.0) return clip_limit;
  if (y <= -1.0) return -clip_limit;
  return std::clamp(std::atanh(y), -clip_limit, clip_limit);
}

double eval_point_unary(OpKind kind, double x, double clip_limit) {
  double r;
  switch (kind) {
    case OpKind::Id: r = x; break;
    case OpKind::Const: r = 1.0; break;
    case OpKind::Square: r = x * x; break;
    case OpKind::Sin: r = std::sin(x); break;
    case OpKind::Cos: r = std::cos(x); break;
    case OpKind::Ln: r = std::log(std::abs(x)); break;
    case OpKind::Sqrt: r = x > 0.0 ? std::sqrt(x) : 0.0; break;
    case OpKind::Airy: r = boost::math::airy_ai(x); break;
    case OpKind::Gamma:
      if (x <= 0.0 && x == std::floor(x)) return clip_limit;  // pole
      r = std::tgamma(x);
      break;
    default:
      throw ConfigError("eval_point_unary: not a point-wise unary op");
  }
  return finite_or_saturate(r, clip_limit);
}

double eval_point_binary(OpKind kind, double x, double y, double clip_limit) {
  double r;
  switch (kind) {
    case OpKind::Mul: r = x * y; break;
    case OpKind::Div:
      if (y == 0.0) {
        if (x == 0.0) return 0.0;
        return x > 0 ? clip_limit : -clip_limit;
      }
      r = x / y;
      break;
    default:
      throw ConfigError("eval_point_binary: not a point-wise binary op");
  }
  return finite_or_saturate(r, clip_limit);
}

namespace {

// Applies the second-order first-derivative stencil along one axis of a flat
// row-major array. The axis is described by (count, stride): `lines` many
// 1-d slices, each `n` points spaced `stride` apart starting at base offsets.
void d1_lines(const double* in, double* out, const std::uint8_t* min,
              std::uint8_t* mout, std::int64_t n, std::int64_t stride,
              std::int64_t nlines, const std::vector<std::int64_t>& bases,
              double h) {
  const double c = 1.0 / (2.0 * h);
  for (std::int64_t l = 0; l < nlines; ++l) {
    const std::int64_t b = bases[l];
    auto v = [&](std::int64_t i) { return in[b + i * stride]; };
    auto m = [&](std::int64_t i) -> bool { return !min || min[b + i * stride]; };
    out[b] = c * (-3.0 * v(0) + 4.0 * v(1) - v(2));
    out[b + (n - 1) * stride] =
        c * (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3));
    for (std::int64_t i = 1; i + 1 < n; ++i)
      out[b + i * stride] = c * (v(i + 1) - v(i - 1));
    if (mout) {
      mout[b] = m(0) && m(1) && m(2);
      mout[b + (n - 1) * stride] = m(n - 1) && m(n - 2) && m(n - 3);
      for (std::int64_t i = 1; i + 1 < n; ++i)
        mout[b + i * stride] = m(i - 1) && m(i) && m(i + 1);
    }
  }
}

}  // namespace

StencilPlan make_stencil_plan(const Grid& grid, Axis axis) {
  StencilPlan v;
  v.h = grid_spacing(grid, axis);
  if (const auto* g1 = std::get_if<Grid1D>(&grid)) {
    if (axis != Axis::T) throw ConfigError("1-d grids only have a t axis");
    v.n = g1->n;
    v.stride = 1;
    v.bases = {0};
    return v;
  }
  const auto& g3 = std::get<Grid3D>(grid);
  const std::int64_t nx = g3.nx, ny = g3.ny, nt = g3.nt;
  switch (axis) {
    case Axis::X:
      v.n = nx;
      v.stride = ny * nt;
      v.bases.reserve(ny * nt);
      for (std::int64_t j = 0; j < ny; ++j)
        for (std::int64_t k = 0; k < nt; ++k) v.bases.push_back(j * nt + k);
      break;
    case Axis::Y:
      v.n = ny;
      v.stride = nt;
      v.bases.reserve(nx * nt);
      for (std::int64_t i = 0; i < nx; ++i)
        for (std::int64_t k = 0; k < nt; ++k)
          v.bases.push_back(i * ny * nt + k);
      break;
    case Axis::T:
      v.n = nt;
      v.stride = 1;
      v.bases.reserve(nx * ny);
      for (std::int64_t i = 0; i < nx * ny; ++i) v.bases.push_back(i * nt);
      break;
  }
  return v;
}

DiscretizedFunction numeric_derivative(const DiscretizedFunction& f, Axis axis,
                                       int order) {
  if (order != 1 && order != 2)
    throw ConfigError("numeric_derivative: order must be 1 or 2");
  const StencilPlan view = make_stencil_plan(f.grid, axis);
  if (view.n < 3)
    throw ConfigError("numeric_derivative: need at least 3 points along axis");
  const double h = view.h;
  const bool masked = !f.defined.all_true();

  DiscretizedFunction out{f.grid};
  d1_lines(f.values.data(), out.values.data(),
           masked ? f.defined.flat().data() : nullptr,
           masked ? out.defined.flat().data() : nullptr, view.n, view.stride,
           static_cast<std::int64_t>(view.bases.size()), view.bases, h);
  if (order == 2) {
    DiscretizedFunction out2{f.grid};
    const bool masked2 = masked;
    d1_lines(out.values.data(), out2.values.data(),
             masked2 ? out.defined.flat().data() : nullptr,
             masked2 ? out2.defined.flat().data() : nullptr, view.n,
             view.stride, static_cast<std::int64_t>(view.bases.size()),
             view.bases, h);
    return out2;
  }
  return out;
}

DiscretizedFunction eval_exact_unary(const OpSpec& op,
                                     const DiscretizedFunction& x) {
  if (op.arity != 1) throw ConfigError("eval_exact_unary: op is not unary");
  if (op.is_derivative) {
    DiscretizedFunction d = numeric_derivative(x, op.axis, op.derivative_order);
    for (auto& v : d.values.flat()) v = finite_or_saturate(v);
    return d;
  }
  DiscretizedFunction out{x.grid};
  out.defined = x.defined;
  const auto& in = x.values.flat();
  auto& o = out.values.flat();
  for (std::size_t i = 0; i < in.size(); ++i)
    o[i] = eval_point_unary(op.kind, in[i]);
  return out;
}

DiscretizedFunction eval_exact_binary(const OpSpec& op,
                                      const DiscretizedFunction& x,
                                      const DiscretizedFunction& y) {
  if (op.arity != 2) throw ConfigError("eval_exact_binary: op is not binary");
  if (!grid_equal(x.grid, y.grid))
    throw ConfigError("eval_exact_binary: operands on different grids");
  DiscretizedFunction out{x.grid};
  const auto& a = x.values.flat();
  const auto& b = y.values.flat();
  auto& o = out.values.flat();
  for (std::size_t i = 0; i < a.size(); ++i)
    o[i] = eval_point_binary(op.kind, a[i], b[i]);
  for (std::int64_t i = 0; i < out.defined.numel(); ++i)
    out.defined[i] = x.defined[i] && y.defined[i];
  return out;
}

TrainingPair make_training_pair(const OpSpec& op,
                                const std::vector<DiscretizedFunction>& inputs,
                                const ProjectionSpec& proj) {
  if (static_cast<int>(inputs.size()) != op.arity)
    throw ConfigError("make_training_pair: wrong input count for op " +
                      op.name);
  DiscretizedFunction exact =
      op.arity == 1 ? eval_exact_unary(op, inputs[0])
                    : eval_exact_binary(op, inputs[0], inputs[1]);
  TrainingPair pair;
  pair.inputs.reserve(inputs.size());
  for (const auto& f : inputs) pair.inputs.push_back(f.values);
  pair.target = exact.values;
  for (auto& v : pair.target.flat()) v = proj.project(v);
  return pair;
}

}  // namespace nomto
