#include "nomto/ad.hpp"

#include <boost/math/special_functions/airy.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <memory>

namespace nomto::ad {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;

void check_same_numel(const Vec& a, const Vec& b, const char* who) {
  if (a.size() != b.size())
    throw ConfigError(std::string(who) + ": operand sizes differ");
}

// Block-wise product of M (or M^T) with `in`, written (or accumulated) into
// `out`. `b` describes the layout of `in`.
void block_mm(const RowMat& m, const double* in, double* out, Side side,
              const BlockSpec& b, bool transpose_m, double sign,
              bool accumulate) {
  using CMap = Eigen::Map<const RowMat>;
  using MMap = Eigen::Map<RowMat>;
  const std::int64_t in_r = b.rows, in_c = b.cols;
  std::int64_t out_r, out_c;
  if (side == Side::Right) {
    out_r = in_r;
    out_c = transpose_m ? m.rows() : m.cols();
  } else {
    out_r = transpose_m ? m.cols() : m.rows();
    out_c = in_c;
  }
  const std::int64_t in_sz = in_r * in_c, out_sz = out_r * out_c;
  for (std::int64_t blk = 0; blk < b.nblocks; ++blk) {
    CMap x(in + blk * in_sz, in_r, in_c);
    MMap y(out + blk * out_sz, out_r, out_c);
    if (side == Side::Right) {
      if (transpose_m) {
        if (accumulate) y.noalias() += sign * (x * m.transpose());
        else y.noalias() = sign * (x * m.transpose());
      } else {
        if (accumulate) y.noalias() += sign * (x * m);
        else y.noalias() = sign * (x * m);
      }
    } else {
      if (transpose_m) {
        if (accumulate) y.noalias() += sign * (m.transpose() * x);
        else y.noalias() = sign * (m.transpose() * x);
      } else {
        if (accumulate) y.noalias() += sign * (m * x);
        else y.noalias() = sign * (m * x);
      }
    }
  }
}

double unary_grad(OpKind kind, double x, double clip_limit) {
  switch (kind) {
    case OpKind::Id: return 1.0;
    case OpKind::Const: return 0.0;
    case OpKind::Square: {
      const double r = x * x;
      return std::isfinite(r) ? 2.0 * x : 0.0;
    }
    case OpKind::Sin: return std::cos(x);
    case OpKind::Cos: return -std::sin(x);
    case OpKind::Ln: return x != 0.0 ? 1.0 / x : 0.0;
    case OpKind::Sqrt: return x > 0.0 ? 0.5 / std::sqrt(x) : 0.0;
    case OpKind::Airy: return boost::math::airy_ai_prime(x);
    case OpKind::Gamma: {
      if (x <= 0.0 && x == std::floor(x)) return 0.0;  // saturated pole
      const double g = std::tgamma(x);
      if (!std::isfinite(g)) return 0.0;  // saturated overflow
      const double d = g * boost::math::digamma(x);
      (void)clip_limit;
      return std::isfinite(d) ? d : 0.0;
    }
    default:
      throw ConfigError("unary_grad: not a point-wise unary op");
  }
}

}  // namespace

Var Tape::push(std::vector<std::int64_t> shape, Vec value, bool needs,
               std::function<void(Tape&)> back) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.needs_grad = needs;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Vec& Tape::gref(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) n.grad = Vec::Zero(n.value.size());
  return n.grad;
}

void Tape::acc(Var v, const Vec& g) {
  if (!needs(v)) return;
  gref(v) += g;
}

Vec Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == 0) return Vec::Zero(n.value.size());
  return n.grad;
}

Var Tape::leaf(std::vector<std::int64_t> shape, const double* data,
               bool requires_grad) {
  const std::int64_t n = shape_numel(shape);
  Vec v(n);
  std::copy(data, data + n, v.data());
  return push(std::move(shape), std::move(v), requires_grad, nullptr);
}

Var Tape::leaf_scalar(double v, bool requires_grad) {
  Vec d(1);
  d[0] = v;
  return push({1}, std::move(d), requires_grad, nullptr);
}

Var Tape::add(Var a, Var b) {
  check_same_numel(val(a), val(b), "add");
  Vec v = val(a) + val(b);
  const bool ng = needs(a) || needs(b);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, b, out](Tape& t) {
      const Vec& g = t.nodes_[out.id].grad;
      t.acc(a, g);
      t.acc(b, g);
    };
  return out;
}

Var Tape::sub(Var a, Var b) {
  check_same_numel(val(a), val(b), "sub");
  Vec v = val(a) - val(b);
  const bool ng = needs(a) || needs(b);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, b, out](Tape& t) {
      const Vec& g = t.nodes_[out.id].grad;
      t.acc(a, g);
      if (t.needs(b)) t.gref(b) -= g;
    };
  return out;
}

Var Tape::hadamard(Var a, Var b) {
  check_same_numel(val(a), val(b), "hadamard");
  Vec v = val(a) * val(b);
  const bool ng = needs(a) || needs(b);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, b, out](Tape& t) {
      const Vec& g = t.nodes_[out.id].grad;
      if (t.needs(a)) t.gref(a) += g * t.val(b);
      if (t.needs(b)) t.gref(b) += g * t.val(a);
    };
  return out;
}

Var Tape::scale(Var a, double c) {
  Vec v = c * val(a);
  const bool ng = needs(a);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, c, out](Tape& t) {
      t.gref(a) += c * t.nodes_[out.id].grad;
    };
  return out;
}

Var Tape::gelu(Var a) {
  const Vec& z = val(a);
  Vec phi = 0.5 * (1.0 + (z * M_SQRT1_2).unaryExpr([](double u) { return std::erf(u); }));
  Vec v = z * phi;
  const bool ng = needs(a);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, out](Tape& t) {
      const Vec& z2 = t.val(a);
      const Vec& g = t.nodes_[out.id].grad;
      Vec phi2 = 0.5 * (1.0 + (z2 * M_SQRT1_2).unaryExpr([](double u) { return std::erf(u); }));
      t.gref(a) +=
          g * (phi2 + z2 * (-0.5 * z2.square()).exp() * kInvSqrt2Pi);
    };
  return out;
}

Var Tape::leaky_relu(Var a, double slope) {
  const Vec& z = val(a);
  Vec v = (z > 0.0).select(z, slope * z);
  const bool ng = needs(a);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, slope, out](Tape& t) {
      const Vec& z2 = t.val(a);
      const Vec& g = t.nodes_[out.id].grad;
      t.gref(a) += (z2 > 0.0).select(g, slope * g);
    };
  return out;
}

Var Tape::tanh_fn(Var a) {
  Vec v = val(a).tanh();
  const bool ng = needs(a);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, out](Tape& t) {
      const Vec& y = t.nodes_[out.id].value;
      t.gref(a) += t.nodes_[out.id].grad * (1.0 - y.square());
    };
  return out;
}

Var Tape::clamp(Var a, double lo, double hi) {
  Vec v = val(a).max(lo).min(hi);
  const bool ng = needs(a);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, lo, hi, out](Tape& t) {
      const Vec& z = t.val(a);
      const Vec& g = t.nodes_[out.id].grad;
      t.gref(a) += ((z > lo) && (z < hi)).select(g, Vec::Zero(g.size()));
    };
  return out;
}

Var Tape::saturate(Var a, double limit) { return clamp(a, -limit, limit); }

Var Tape::unproject(Var a, double limit) {
  const ProjectionSpec proj{limit};
  const Vec& x = val(a);
  Vec v(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) v[i] = proj.unproject(x[i]);
  const bool ng = needs(a);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, limit, out](Tape& t) {
      const Vec& y = t.val(a);
      const Vec& g = t.nodes_[out.id].grad;
      Vec& da = t.gref(a);
      const double hi = std::tanh(limit);
      for (Eigen::Index i = 0; i < y.size(); ++i)
        if (std::isfinite(y[i]) && y[i] > -hi && y[i] < hi)
          da[i] += g[i] / (1.0 - y[i] * y[i]);
    };
  return out;
}

Var Tape::pointwise_unary(Var a, OpKind kind, double clip_limit) {
  const Vec& x = val(a);
  Vec v(x.size());
  const bool ng = needs(a);
  auto dcoef = ng ? std::make_shared<Vec>(x.size()) : nullptr;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    v[i] = eval_point_unary(kind, x[i], clip_limit);
    if (ng) (*dcoef)[i] = unary_grad(kind, x[i], clip_limit);
  }
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, dcoef, out](Tape& t) {
      t.gref(a) += t.nodes_[out.id].grad * (*dcoef);
    };
  return out;
}

Var Tape::pointwise_binary(Var a, Var b, OpKind kind, double clip_limit) {
  check_same_numel(val(a), val(b), "pointwise_binary");
  const Vec& x = val(a);
  const Vec& y = val(b);
  Vec v(x.size());
  const bool ng = needs(a) || needs(b);
  auto da = ng ? std::make_shared<Vec>(Vec::Zero(x.size())) : nullptr;
  auto db = ng ? std::make_shared<Vec>(Vec::Zero(x.size())) : nullptr;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    v[i] = eval_point_binary(kind, x[i], y[i], clip_limit);
    if (!ng) continue;
    if (kind == OpKind::Mul) {
      if (std::isfinite(x[i] * y[i])) {
        (*da)[i] = y[i];
        (*db)[i] = x[i];
      }
    } else {  // Div
      if (y[i] != 0.0 && std::isfinite(x[i] / y[i])) {
        (*da)[i] = 1.0 / y[i];
        (*db)[i] = -x[i] / (y[i] * y[i]);
      }
    }
  }
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, b, da, db, out](Tape& t) {
      const Vec& g = t.nodes_[out.id].grad;
      if (t.needs(a)) t.gref(a) += g * (*da);
      if (t.needs(b)) t.gref(b) += g * (*db);
    };
  return out;
}

Var Tape::matmul(Var w, Var x) {
  const auto& ws = nodes_[w.id].shape;
  const auto& xs = nodes_[x.id].shape;
  if (ws.size() != 2 || xs.size() != 2 || ws[1] != xs[0])
    throw ConfigError("matmul: shape mismatch");
  const std::int64_t m = ws[0], k = ws[1], n = xs[1];
  Vec v(m * n);
  Eigen::Map<const RowMat> wm(val(w).data(), m, k);
  Eigen::Map<const RowMat> xm(val(x).data(), k, n);
  Eigen::Map<RowMat>(v.data(), m, n).noalias() = wm * xm;
  const bool ng = needs(w) || needs(x);
  Var out = push({m, n}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [w, x, m, k, n, out](Tape& t) {
      Eigen::Map<const RowMat> g(t.nodes_[out.id].grad.data(), m, n);
      if (t.needs(w)) {
        Eigen::Map<const RowMat> xm2(t.val(x).data(), k, n);
        Eigen::Map<RowMat>(t.gref(w).data(), m, k).noalias() +=
            g * xm2.transpose();
      }
      if (t.needs(x)) {
        Eigen::Map<const RowMat> wm2(t.val(w).data(), m, k);
        Eigen::Map<RowMat>(t.gref(x).data(), k, n).noalias() +=
            wm2.transpose() * g;
      }
    };
  return out;
}

Var Tape::add_col_bias(Var x, Var b) {
  const auto& xs = nodes_[x.id].shape;
  if (xs.size() != 2 || nodes_[b.id].shape != std::vector<std::int64_t>{xs[0]})
    throw ConfigError("add_col_bias: shape mismatch");
  const std::int64_t m = xs[0], n = xs[1];
  Vec v = val(x);
  for (std::int64_t i = 0; i < m; ++i)
    Eigen::Map<Vec>(v.data() + i * n, n) += val(b)[i];
  const bool ng = needs(x) || needs(b);
  Var out = push({m, n}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [x, b, m, n, out](Tape& t) {
      const Vec& g = t.nodes_[out.id].grad;
      t.acc(x, g);
      if (t.needs(b)) {
        Vec& gb = t.gref(b);
        for (std::int64_t i = 0; i < m; ++i)
          gb[i] += Eigen::Map<const Vec>(g.data() + i * n, n).sum();
      }
    };
  return out;
}

Var Tape::add2_bias_gelu(Var pw, Var sp, Var b) {
  const auto& xs = nodes_[pw.id].shape;
  check_same_numel(val(pw), val(sp), "add2_bias_gelu");
  const std::int64_t m = xs[0], n = xs[1];
  if (nodes_[b.id].shape != std::vector<std::int64_t>{m})
    throw ConfigError("add2_bias_gelu: bias shape mismatch");
  auto z = std::make_shared<Vec>(val(pw) + val(sp));
  for (std::int64_t i = 0; i < m; ++i)
    Eigen::Map<Vec>(z->data() + i * n, n) += val(b)[i];
  Vec v = *z * (0.5 * (1.0 + (*z * M_SQRT1_2).unaryExpr([](double u) { return std::erf(u); })));
  const bool ng = needs(pw) || needs(sp) || needs(b);
  Var out = push({m, n}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [pw, sp, b, z, m, n, out](Tape& t) {
      const Vec& g = t.nodes_[out.id].grad;
      Vec phi = 0.5 * (1.0 + (*z * M_SQRT1_2).unaryExpr([](double u) { return std::erf(u); }));
      Vec dz = g * (phi + *z * (-0.5 * z->square()).exp() * kInvSqrt2Pi);
      t.acc(pw, dz);
      t.acc(sp, dz);
      if (t.needs(b)) {
        Vec& gb = t.gref(b);
        for (std::int64_t i = 0; i < m; ++i)
          gb[i] += Eigen::Map<const Vec>(dz.data() + i * n, n).sum();
      }
    };
  return out;
}

Var Tape::dft_analysis(Var in, bool in_real, const RowMat* c, const RowMat* s,
                       Side side, BlockSpec blocks) {
  const std::int64_t plane = blocks.numel();
  const std::int64_t expect = in_real ? plane : 2 * plane;
  if (val(in).size() != expect)
    throw ConfigError("dft_analysis: input size mismatch");
  std::int64_t out_r, out_c;
  if (side == Side::Right) {
    out_r = blocks.rows;
    out_c = c->cols();
  } else {
    out_r = c->rows();
    out_c = blocks.cols;
  }
  const std::int64_t out_plane = blocks.nblocks * out_r * out_c;
  Vec v(2 * out_plane);
  const double* x = val(in).data();
  if (in_real) {
    block_mm(*c, x, v.data(), side, blocks, false, 1.0, false);
    block_mm(*s, x, v.data() + out_plane, side, blocks, false, -1.0, false);
  } else {
    const double* xr = x;
    const double* xi = x + plane;
    block_mm(*c, xr, v.data(), side, blocks, false, 1.0, false);
    block_mm(*s, xi, v.data(), side, blocks, false, 1.0, true);
    block_mm(*c, xi, v.data() + out_plane, side, blocks, false, 1.0, false);
    block_mm(*s, xr, v.data() + out_plane, side, blocks, false, -1.0, true);
  }
  const bool ng = needs(in);
  Var out = push({2, blocks.nblocks, out_r, out_c}, std::move(v), ng, nullptr);
  if (ng) {
    BlockSpec ob{blocks.nblocks, out_r, out_c};
    nodes_[out.id].back = [in, in_real, c, s, side, blocks, ob, plane,
                           out_plane, out](Tape& t) {
      const double* gr = t.nodes_[out.id].grad.data();
      const double* gi = gr + out_plane;
      if (!t.needs(in)) return;
      double* din = t.gref(in).data();
      if (in_real) {
        block_mm(*c, gr, din, side, ob, true, 1.0, true);
        block_mm(*s, gi, din, side, ob, true, -1.0, true);
      } else {
        block_mm(*c, gr, din, side, ob, true, 1.0, true);
        block_mm(*s, gi, din, side, ob, true, -1.0, true);
        block_mm(*s, gr, din + plane, side, ob, true, 1.0, true);
        block_mm(*c, gi, din + plane, side, ob, true, 1.0, true);
      }
    };
  }
  return out;
}

Var Tape::dft_synthesis(Var in, const RowMat* c, const RowMat* s, Side side,
                        BlockSpec blocks, bool real_out) {
  const std::int64_t plane = blocks.numel();
  if (val(in).size() != 2 * plane)
    throw ConfigError("dft_synthesis: input size mismatch");
  std::int64_t out_r, out_c;
  if (side == Side::Right) {
    out_r = blocks.rows;
    out_c = c->cols();
  } else {
    out_r = c->rows();
    out_c = blocks.cols;
  }
  const std::int64_t out_plane = blocks.nblocks * out_r * out_c;
  const double* xr = val(in).data();
  const double* xi = val(in).data() + plane;
  Vec v(real_out ? out_plane : 2 * out_plane);
  block_mm(*c, xr, v.data(), side, blocks, false, 1.0, false);
  block_mm(*s, xi, v.data(), side, blocks, false, -1.0, true);
  if (!real_out) {
    block_mm(*c, xi, v.data() + out_plane, side, blocks, false, 1.0, false);
    block_mm(*s, xr, v.data() + out_plane, side, blocks, false, 1.0, true);
  }
  std::vector<std::int64_t> oshape =
      real_out ? std::vector<std::int64_t>{blocks.nblocks, out_r, out_c}
               : std::vector<std::int64_t>{2, blocks.nblocks, out_r, out_c};
  const bool ng = needs(in);
  Var out = push(std::move(oshape), std::move(v), ng, nullptr);
  if (ng) {
    BlockSpec ob{blocks.nblocks, out_r, out_c};
    nodes_[out.id].back = [in, c, s, side, ob, plane, out_plane, real_out,
                           out](Tape& t) {
      if (!t.needs(in)) return;
      const double* gr = t.nodes_[out.id].grad.data();
      double* din = t.gref(in).data();
      if (real_out) {
        block_mm(*c, gr, din, side, ob, true, 1.0, true);
        block_mm(*s, gr, din + plane, side, ob, true, -1.0, true);
      } else {
        const double* gi = gr + out_plane;
        block_mm(*c, gr, din, side, ob, true, 1.0, true);
        block_mm(*s, gi, din, side, ob, true, 1.0, true);
        block_mm(*s, gr, din + plane, side, ob, true, -1.0, true);
        block_mm(*c, gi, din + plane, side, ob, true, 1.0, true);
      }
    };
  }
  return out;
}

Var Tape::mode_mix(Var packed, Var wre, Var wim, std::int64_t co,
                   std::int64_t ci, std::int64_t k, std::int64_t b) {
  if (val(packed).size() != 2 * ci * b * k)
    throw ConfigError("mode_mix: input size mismatch");
  if (val(wre).size() != k * co * ci || val(wim).size() != k * co * ci)
    throw ConfigError("mode_mix: weight size mismatch");
  const double* are = val(packed).data();  // [ci, b, k] per plane
  const double* aim = are + ci * b * k;
  const double* wr = val(wre).data();  // [k, co, ci]
  const double* wi = val(wim).data();
  Vec v = Vec::Zero(2 * co * b * k);
  double* yre = v.data();
  double* yim = v.data() + co * b * k;
  for (std::int64_t kk = 0; kk < k; ++kk) {
    const double* wrk = wr + kk * co * ci;
    const double* wik = wi + kk * co * ci;
    for (std::int64_t o = 0; o < co; ++o) {
      const double* wro = wrk + o * ci;
      const double* wio = wik + o * ci;
      for (std::int64_t bb = 0; bb < b; ++bb) {
        double accr = 0.0, acci = 0.0;
        for (std::int64_t c2 = 0; c2 < ci; ++c2) {
          const std::int64_t ix = (c2 * b + bb) * k + kk;
          accr += wro[c2] * are[ix] - wio[c2] * aim[ix];
          acci += wro[c2] * aim[ix] + wio[c2] * are[ix];
        }
        yre[(o * b + bb) * k + kk] = accr;
        yim[(o * b + bb) * k + kk] = acci;
      }
    }
  }
  const bool ng = needs(packed) || needs(wre) || needs(wim);
  Var out = push({2, co, b, k}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [packed, wre, wim, co, ci, k, b, out](Tape& t) {
      const double* gre = t.nodes_[out.id].grad.data();  // [co, b, k]
      const double* gim = gre + co * b * k;
      const double* are2 = t.val(packed).data();
      const double* aim2 = are2 + ci * b * k;
      const double* wr2 = t.val(wre).data();
      const double* wi2 = t.val(wim).data();
      const bool na = t.needs(packed);
      double* dwr = t.needs(wre) ? t.gref(wre).data() : nullptr;
      double* dwi = t.needs(wim) ? t.gref(wim).data() : nullptr;
      double* dar = na ? t.gref(packed).data() : nullptr;
      double* dai = na ? dar + ci * b * k : nullptr;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const double* wrk = wr2 + kk * co * ci;
        const double* wik = wi2 + kk * co * ci;
        for (std::int64_t o = 0; o < co; ++o) {
          const double* wro = wrk + o * ci;
          const double* wio = wik + o * ci;
          for (std::int64_t bb = 0; bb < b; ++bb) {
            const double gr = gre[(o * b + bb) * k + kk];
            const double gi = gim[(o * b + bb) * k + kk];
            for (std::int64_t c2 = 0; c2 < ci; ++c2) {
              const std::int64_t ix = (c2 * b + bb) * k + kk;
              if (dwr) dwr[kk * co * ci + o * ci + c2] += gr * are2[ix] + gi * aim2[ix];
              if (dwi) dwi[kk * co * ci + o * ci + c2] += gi * are2[ix] - gr * aim2[ix];
              if (na) {
                dar[ix] += wro[c2] * gr + wio[c2] * gi;
                dai[ix] += wro[c2] * gi - wio[c2] * gr;
              }
            }
          }
        }
      }
    };
  return out;
}

Var Tape::stencil_derivative(Var a, const StencilPlan* plan) {
  const Vec& x = val(a);
  Vec v(x.size());
  const double cc = 1.0 / (2.0 * plan->h);
  const std::int64_t n = plan->n, st = plan->stride;
  for (const std::int64_t b : plan->bases) {
    auto vv = [&](std::int64_t i) { return x[b + i * st]; };
    v[b] = cc * (-3.0 * vv(0) + 4.0 * vv(1) - vv(2));
    v[b + (n - 1) * st] = cc * (3.0 * vv(n - 1) - 4.0 * vv(n - 2) + vv(n - 3));
    for (std::int64_t i = 1; i + 1 < n; ++i)
      v[b + i * st] = cc * (vv(i + 1) - vv(i - 1));
  }
  const bool ng = needs(a);
  Var out = push(nodes_[a.id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [a, plan, out](Tape& t) {
      if (!t.needs(a)) return;
      const Vec& g = t.nodes_[out.id].grad;
      Vec& d = t.gref(a);
      const double cc2 = 1.0 / (2.0 * plan->h);
      const std::int64_t n2 = plan->n, st2 = plan->stride;
      for (const std::int64_t b : plan->bases) {
        const double g0 = g[b];
        d[b] += -3.0 * cc2 * g0;
        d[b + st2] += 4.0 * cc2 * g0;
        d[b + 2 * st2] += -cc2 * g0;
        const double gn = g[b + (n2 - 1) * st2];
        d[b + (n2 - 1) * st2] += 3.0 * cc2 * gn;
        d[b + (n2 - 2) * st2] += -4.0 * cc2 * gn;
        d[b + (n2 - 3) * st2] += cc2 * gn;
        for (std::int64_t i = 1; i + 1 < n2; ++i) {
          const double gi = g[b + i * st2];
          d[b + (i + 1) * st2] += cc2 * gi;
          d[b + (i - 1) * st2] -= cc2 * gi;
        }
      }
    };
  return out;
}

Var Tape::conv1d(Var x, Var k, std::int64_t co, std::int64_t ci,
                 std::int64_t kw) {
  const auto& xs = nodes_[x.id].shape;
  if (xs.size() != 2 || xs[0] != ci)
    throw ConfigError("conv1d: input shape mismatch");
  if (val(k).size() != co * ci * kw || kw % 2 == 0)
    throw ConfigError("conv1d: kernel shape mismatch");
  const std::int64_t n = xs[1], pad = kw / 2;
  const double* xp = val(x).data();
  const double* kp = val(k).data();
  Vec v = Vec::Zero(co * n);
  for (std::int64_t o = 0; o < co; ++o)
    for (std::int64_t c2 = 0; c2 < ci; ++c2) {
      const double* kr = kp + (o * ci + c2) * kw;
      const double* xr = xp + c2 * n;
      double* yr = v.data() + o * n;
      for (std::int64_t t = 0; t < n; ++t) {
        double acc2 = 0.0;
        for (std::int64_t d = 0; d < kw; ++d) {
          const std::int64_t src = t + d - pad;
          if (src >= 0 && src < n) acc2 += kr[d] * xr[src];
        }
        yr[t] += acc2;
      }
    }
  const bool ng = needs(x) || needs(k);
  Var out = push({co, n}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [x, k, co, ci, kw, n, pad, out](Tape& t) {
      const double* g = t.nodes_[out.id].grad.data();
      const double* xp2 = t.val(x).data();
      const double* kp2 = t.val(k).data();
      double* dx = t.needs(x) ? t.gref(x).data() : nullptr;
      double* dk = t.needs(k) ? t.gref(k).data() : nullptr;
      for (std::int64_t o = 0; o < co; ++o)
        for (std::int64_t c2 = 0; c2 < ci; ++c2) {
          const double* kr = kp2 + (o * ci + c2) * kw;
          const double* xr = xp2 + c2 * n;
          const double* gr = g + o * n;
          for (std::int64_t tt = 0; tt < n; ++tt) {
            const double gv = gr[tt];
            for (std::int64_t d = 0; d < kw; ++d) {
              const std::int64_t src = tt + d - pad;
              if (src < 0 || src >= n) continue;
              if (dk) dk[(o * ci + c2) * kw + d] += gv * xr[src];
              if (dx) dx[c2 * n + src] += gv * kr[d];
            }
          }
        }
    };
  return out;
}

Var Tape::conv3d(Var x, Var k, std::int64_t co, std::int64_t ci,
                 std::int64_t nx, std::int64_t ny, std::int64_t nt) {
  const std::int64_t vol = nx * ny * nt;
  if (val(x).size() != ci * vol)
    throw ConfigError("conv3d: input shape mismatch");
  if (val(k).size() != co * ci * 27)
    throw ConfigError("conv3d: kernel shape mismatch");
  const double* xp = val(x).data();
  const double* kp = val(k).data();
  Vec v = Vec::Zero(co * vol);
  for (std::int64_t o = 0; o < co; ++o)
    for (std::int64_t c2 = 0; c2 < ci; ++c2) {
      const double* kr = kp + (o * ci + c2) * 27;
      const double* xc = xp + c2 * vol;
      double* yc = v.data() + o * vol;
      for (std::int64_t i = 0; i < nx; ++i)
        for (std::int64_t j = 0; j < ny; ++j)
          for (std::int64_t t = 0; t < nt; ++t) {
            double acc2 = 0.0;
            for (std::int64_t di = -1; di <= 1; ++di) {
              const std::int64_t si = i + di;
              if (si < 0 || si >= nx) continue;
              for (std::int64_t dj = -1; dj <= 1; ++dj) {
                const std::int64_t sj = j + dj;
                if (sj < 0 || sj >= ny) continue;
                for (std::int64_t dt2 = -1; dt2 <= 1; ++dt2) {
                  const std::int64_t st2 = t + dt2;
                  if (st2 < 0 || st2 >= nt) continue;
                  acc2 += kr[(di + 1) * 9 + (dj + 1) * 3 + (dt2 + 1)] *
                          xc[(si * ny + sj) * nt + st2];
                }
              }
            }
            yc[(i * ny + j) * nt + t] += acc2;
          }
    }
  const bool ng = needs(x) || needs(k);
  Var out = push({co, vol}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [x, k, co, ci, nx, ny, nt, vol, out](Tape& t) {
      const double* g = t.nodes_[out.id].grad.data();
      const double* xp2 = t.val(x).data();
      const double* kp2 = t.val(k).data();
      double* dx = t.needs(x) ? t.gref(x).data() : nullptr;
      double* dk = t.needs(k) ? t.gref(k).data() : nullptr;
      for (std::int64_t o = 0; o < co; ++o)
        for (std::int64_t c2 = 0; c2 < ci; ++c2) {
          const double* kr = kp2 + (o * ci + c2) * 27;
          const double* xc = xp2 + c2 * vol;
          const double* gc = g + o * vol;
          for (std::int64_t i = 0; i < nx; ++i)
            for (std::int64_t j = 0; j < ny; ++j)
              for (std::int64_t t2 = 0; t2 < nt; ++t2) {
                const double gv = gc[(i * ny + j) * nt + t2];
                for (std::int64_t di = -1; di <= 1; ++di) {
                  const std::int64_t si = i + di;
                  if (si < 0 || si >= nx) continue;
                  for (std::int64_t dj = -1; dj <= 1; ++dj) {
                    const std::int64_t sj = j + dj;
                    if (sj < 0 || sj >= ny) continue;
                    for (std::int64_t dt3 = -1; dt3 <= 1; ++dt3) {
                      const std::int64_t st3 = t2 + dt3;
                      if (st3 < 0 || st3 >= nt) continue;
                      const std::int64_t koff =
                          (di + 1) * 9 + (dj + 1) * 3 + (dt3 + 1);
                      const std::int64_t xoff = (si * ny + sj) * nt + st3;
                      if (dk) dk[(o * ci + c2) * 27 + koff] += gv * xc[xoff];
                      if (dx) dx[c2 * vol + xoff] += gv * kr[koff];
                    }
                  }
                }
              }
        }
    };
  return out;
}

Var Tape::weighted_sum(const std::vector<Var>& xs, const std::vector<Var>& ws) {
  if (xs.empty() || xs.size() != ws.size())
    throw ConfigError("weighted_sum: needs matching non-empty lists");
  Vec v = Vec::Zero(val(xs[0]).size());
  bool ng = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check_same_numel(val(xs[0]), val(xs[i]), "weighted_sum");
    if (val(ws[i]).size() != 1)
      throw ConfigError("weighted_sum: weights must be scalars");
    v += scalar(ws[i]) * val(xs[i]);
    ng = ng || needs(xs[i]) || needs(ws[i]);
  }
  auto xs2 = std::make_shared<std::vector<Var>>(xs);
  auto ws2 = std::make_shared<std::vector<Var>>(ws);
  Var out = push(nodes_[xs[0].id].shape, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [xs2, ws2, out](Tape& t) {
      const Vec& g = t.nodes_[out.id].grad;
      for (std::size_t i = 0; i < xs2->size(); ++i) {
        const Var xi = (*xs2)[i], wi = (*ws2)[i];
        if (t.needs(wi)) t.gref(wi)[0] += (g * t.val(xi)).sum();
        if (t.needs(xi)) t.gref(xi) += t.scalar(wi) * g;
      }
    };
  return out;
}

Var Tape::masked_l1(Var pred, const double* target, const std::uint8_t* mask) {
  const Vec& p = val(pred);
  std::int64_t m = 0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (mask && !mask[i]) continue;
    total += std::abs(p[i] - target[i]);
    ++m;
  }
  if (m == 0) throw ConfigError("masked_l1: empty mask");
  Vec v(1);
  v[0] = total / static_cast<double>(m);
  const bool ng = needs(pred);
  Var out = push({1}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [pred, target, mask, m, out](Tape& t) {
      const double g0 = t.nodes_[out.id].grad[0] / static_cast<double>(m);
      const Vec& p2 = t.val(pred);
      Vec& d = t.gref(pred);
      for (Eigen::Index i = 0; i < p2.size(); ++i) {
        if (mask && !mask[i]) continue;
        const double r = p2[i] - target[i];
        d[i] += r > 0.0 ? g0 : (r < 0.0 ? -g0 : 0.0);
      }
    };
  return out;
}

Var Tape::relative_l2(Var pred, const double* target, std::int64_t nbatch) {
  const Vec& p = val(pred);
  if (nbatch < 1 || p.size() % nbatch != 0)
    throw ConfigError("relative_l2: batch does not divide the buffer");
  const std::int64_t len = p.size() / nbatch;
  auto norms = std::make_shared<std::vector<double>>(2 * nbatch);
  double loss = 0.0;
  for (std::int64_t b = 0; b < nbatch; ++b) {
    const double* pp = p.data() + b * len;
    const double* tp = target + b * len;
    double num = 0.0, den = 0.0;
    for (std::int64_t i = 0; i < len; ++i) {
      const double d = pp[i] - tp[i];
      num += d * d;
      den += tp[i] * tp[i];
    }
    const double pnorm = std::sqrt(num);
    const double tnorm = std::max(std::sqrt(den), 1e-12);
    (*norms)[2 * b] = pnorm;
    (*norms)[2 * b + 1] = tnorm;
    loss += pnorm / tnorm;
  }
  Vec v(1);
  v[0] = loss / static_cast<double>(nbatch);
  const bool ng = needs(pred);
  Var out = push({1}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [pred, target, nbatch, len, norms, out](Tape& t) {
      const double g0 = t.nodes_[out.id].grad[0] / static_cast<double>(nbatch);
      const Vec& p2 = t.val(pred);
      Vec& d = t.gref(pred);
      for (std::int64_t b = 0; b < nbatch; ++b) {
        const double pnorm = (*norms)[2 * b];
        if (pnorm == 0.0) continue;
        const double c = g0 / (pnorm * (*norms)[2 * b + 1]);
        const std::int64_t off = b * len;
        for (std::int64_t i = 0; i < len; ++i)
          d[off + i] += c * (p2[off + i] - target[off + i]);
      }
    };
  return out;
}

Var Tape::concat_rows(const std::vector<Var>& xs, std::int64_t ncols) {
  if (xs.empty()) throw ConfigError("concat_rows: empty list");
  std::int64_t rows = 0;
  bool ng = false;
  for (Var x : xs) {
    if (val(x).size() % ncols != 0)
      throw ConfigError("concat_rows: column count does not divide input");
    rows += val(x).size() / ncols;
    ng = ng || needs(x);
  }
  Vec v(rows * ncols);
  std::int64_t off = 0;
  for (Var x : xs) {
    const Vec& xv = val(x);
    std::copy(xv.data(), xv.data() + xv.size(), v.data() + off);
    off += xv.size();
  }
  auto xs2 = std::make_shared<std::vector<Var>>(xs);
  Var out = push({rows, ncols}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [xs2, out](Tape& t) {
      const Vec& g = t.nodes_[out.id].grad;
      std::int64_t pos = 0;
      for (Var x : *xs2) {
        const std::int64_t sz = t.val(x).size();
        if (t.needs(x)) {
          Vec& d = t.gref(x);
          for (std::int64_t i = 0; i < sz; ++i) d[i] += g[pos + i];
        }
        pos += sz;
      }
    };
  return out;
}

Var Tape::add_scalars(const std::vector<Var>& xs) {
  if (xs.empty()) throw ConfigError("add_scalars: empty list");
  double total = 0.0;
  bool ng = false;
  for (Var v : xs) {
    if (val(v).size() != 1) throw ConfigError("add_scalars: non-scalar input");
    total += scalar(v);
    ng = ng || needs(v);
  }
  Vec v(1);
  v[0] = total;
  auto xs2 = std::make_shared<std::vector<Var>>(xs);
  Var out = push({1}, std::move(v), ng, nullptr);
  if (ng)
    nodes_[out.id].back = [xs2, out](Tape& t) {
      const double g0 = t.nodes_[out.id].grad[0];
      for (Var v2 : *xs2)
        if (t.needs(v2)) t.gref(v2)[0] += g0;
    };
  return out;
}

void Tape::backward(Var root) {
  if (val(root).size() != 1)
    throw ConfigError("backward: root must be a scalar");
  if (!needs(root)) return;  // nothing upstream wants gradients
  gref(root)[0] += 1.0;
  run_backward(root);
}

void Tape::backward(Var root, const double* seed) {
  if (!needs(root)) return;
  Vec& g = gref(root);
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] += seed[i];
  run_backward(root);
}

void Tape::run_backward(Var root) {
  for (std::int32_t i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
    n.back(*this);
  }
}

}  // namespace nomto::ad
