#include "nomto/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace nomto {

using ad::RowMat;
using ad::Side;
using ad::Tape;
using ad::Var;
using ad::Vec;

std::int64_t params_numel(const Params& p) {
  std::int64_t n = 0;
  for (const auto& t : p) n += t.numel();
  return n;
}

bool params_equal(const Params& a, const Params& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].shape != b[i].shape ||
        a[i].value != b[i].value)
      return false;
  }
  return true;
}

std::vector<Var> bind_params(Tape& t, const Params& p, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(p.size());
  for (const auto& pt : p)
    vars.push_back(t.leaf(pt.shape, pt.value.data(), trainable));
  return vars;
}

Adam::Adam(const Params& params, double lr_, double beta1, double beta2,
           double eps)
    : lr(lr_), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.push_back(Vec::Zero(p.numel()));
    v_.push_back(Vec::Zero(p.numel()));
  }
}

void Adam::step(Params& params, const std::vector<Vec>& grads) {
  if (grads.size() != params.size() || params.size() != m_.size())
    throw ConfigError("adam: gradient list does not match parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const Vec& g = grads[i];
    if (g.size() != p.numel())
      throw ConfigError("adam: gradient shape mismatch at " + p.name);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.square();
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      const double mhat = m_[i][j] / c1;
      const double vhat = v_[i][j] / c2;
      p.value[static_cast<std::size_t>(j)] -=
          lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

namespace {

// Frequency index set for one axis: the half-spectrum axis keeps modes
// non-negative frequencies, full axes also keep the mirrored negatives.
std::vector<std::int64_t> mode_indices(std::int64_t n, std::int64_t modes,
                                       bool half) {
  std::vector<std::int64_t> ks;
  if (modes < 1) throw ConfigError("spectral plan needs modes >= 1");
  if (half) {
    if (2 * modes > n)
      throw ConfigError("spectral plan: modes exceed the half spectrum");
    for (std::int64_t k = 0; k < modes; ++k) ks.push_back(k);
  } else {
    if (2 * modes - 1 > n)
      throw ConfigError("spectral plan: modes exceed the axis length");
    for (std::int64_t k = 0; k < modes; ++k) ks.push_back(k);
    for (std::int64_t k = modes - 1; k >= 1; --k) ks.push_back(n - k);
  }
  return ks;
}

SpectralStage make_stage(std::int64_t n, std::int64_t modes, bool half,
                         Side side, bool fold_doubling) {
  const auto ks = mode_indices(n, modes, half);
  const auto k = static_cast<std::int64_t>(ks.size());
  SpectralStage st;
  st.side = side;
  st.n = n;
  st.k = k;
  // Analysis contracts with (C - iS)/n; synthesis with (C + iS), the final
  // stage additionally weighting each kept half-spectrum frequency by 2
  // (except k = 0) to stand in for its conjugate mirror.
  if (side == Side::Right) {
    st.c_an.resize(n, k);
    st.s_an.resize(n, k);
    st.c_syn.resize(k, n);
    st.s_syn.resize(k, n);
  } else {
    st.c_an.resize(k, n);
    st.s_an.resize(k, n);
    st.c_syn.resize(n, k);
    st.s_syn.resize(n, k);
  }
  for (std::int64_t p = 0; p < k; ++p) {
    const double w = fold_doubling && ks[p] != 0 ? 2.0 : 1.0;
    for (std::int64_t j = 0; j < n; ++j) {
      const double th = 2.0 * M_PI * static_cast<double>(j) *
                        static_cast<double>(ks[p]) / static_cast<double>(n);
      const double c = std::cos(th), s = std::sin(th);
      if (side == Side::Right) {
        st.c_an(j, p) = c / static_cast<double>(n);
        st.s_an(j, p) = s / static_cast<double>(n);
        st.c_syn(p, j) = w * c;
        st.s_syn(p, j) = w * s;
      } else {
        st.c_an(p, j) = c / static_cast<double>(n);
        st.s_an(p, j) = s / static_cast<double>(n);
        st.c_syn(j, p) = w * c;
        st.s_syn(j, p) = w * s;
      }
    }
  }
  return st;
}

}  // namespace

SpectralPlan make_spectral_plan(const Grid& grid, std::int64_t modes) {
  SpectralPlan plan;
  plan.dims = grid_shape(grid);
  plan.npoints = shape_numel(plan.dims);
  if (std::holds_alternative<Grid1D>(grid)) {
    plan.stages.push_back(
        make_stage(plan.dims[0], modes, true, Side::Right, true));
  } else {
    const auto& g = std::get<Grid3D>(grid);
    plan.stages.push_back(make_stage(g.nt, modes, true, Side::Right, true));
    plan.stages.push_back(make_stage(g.ny, modes, false, Side::Left, false));
    plan.stages.push_back(make_stage(g.nx, modes, false, Side::Left, false));
  }
  plan.k_total = 1;
  for (const auto& st : plan.stages) plan.k_total *= st.k;
  return plan;
}

Var spectral_conv(Tape& t, Var x, const SpectralPlan& plan,
                  std::int64_t channels, std::int64_t batch, Var wre,
                  Var wim) {
  const std::int64_t cb = channels * batch;
  Var cur = x;
  if (plan.stages.size() == 1) {
    const auto& st = plan.stages[0];
    cur = t.dft_analysis(cur, true, &st.c_an, &st.s_an, st.side,
                         {1, cb, st.n});
    cur = t.mode_mix(cur, wre, wim, channels, channels, st.k, batch);
    cur = t.dft_synthesis(cur, &st.c_syn, &st.s_syn, st.side, {1, cb, st.k},
                          true);
    return cur;
  }
  const auto& st_t = plan.stages[0];
  const auto& st_y = plan.stages[1];
  const auto& st_x = plan.stages[2];
  const std::int64_t nx = st_x.n, ny = st_y.n;
  const std::int64_t kx = st_x.k, ky = st_y.k, kt = st_t.k;
  cur = t.dft_analysis(cur, true, &st_t.c_an, &st_t.s_an, Side::Right,
                       {1, cb * nx * ny, st_t.n});
  cur = t.dft_analysis(cur, false, &st_y.c_an, &st_y.s_an, Side::Left,
                       {cb * nx, ny, kt});
  cur = t.dft_analysis(cur, false, &st_x.c_an, &st_x.s_an, Side::Left,
                       {cb, nx, ky * kt});
  cur = t.mode_mix(cur, wre, wim, channels, channels, plan.k_total, batch);
  cur = t.dft_synthesis(cur, &st_x.c_syn, &st_x.s_syn, Side::Left,
                        {cb, kx, ky * kt}, false);
  cur = t.dft_synthesis(cur, &st_y.c_syn, &st_y.s_syn, Side::Left,
                        {cb * nx, ky, kt}, false);
  cur = t.dft_synthesis(cur, &st_t.c_syn, &st_t.s_syn, Side::Right,
                        {1, cb * nx * ny, kt}, true);
  return cur;
}

std::int64_t coord_dims(const Grid& g) {
  return std::holds_alternative<Grid1D>(g) ? 1 : 3;
}

std::vector<double> coord_rows(const Grid& g) {
  if (const auto* g1 = std::get_if<Grid1D>(&g)) {
    std::vector<double> out(g1->n);
    const auto pts = g1->points();
    const double span = g1->hi - g1->lo;
    for (std::int64_t i = 0; i < g1->n; ++i) out[i] = (pts[i] - g1->lo) / span;
    return out;
  }
  const auto& g3 = std::get<Grid3D>(g);
  const std::int64_t n = g3.nx * g3.ny * g3.nt;
  std::vector<double> out(3 * n);
  const auto xs = g3.xs(), ys = g3.ys(), ts = g3.ts();
  const double tspan = ts.back() > 0.0 ? ts.back() : 1.0;
  std::int64_t ix = 0;
  for (std::int64_t i = 0; i < g3.nx; ++i)
    for (std::int64_t j = 0; j < g3.ny; ++j)
      for (std::int64_t k = 0; k < g3.nt; ++k, ++ix) {
        out[ix] = (xs[i] + g3.lx / 2.0) / g3.lx;
        out[n + ix] = (ys[j] + g3.ly / 2.0) / g3.ly;
        out[2 * n + ix] = ts[k] / tspan;
      }
  return out;
}

NetSpec spectral_preset(std::int64_t arity, const Grid& grid) {
  NetSpec s;
  s.variant = "spectral";
  s.arity = arity;
  s.layers = 3;
  s.width = 32;
  s.modes = std::holds_alternative<Grid1D>(grid) ? 16 : 4;
  s.head_hidden = 64;
  return s;
}

NetSpec convolutional_preset(std::int64_t arity, const Grid& grid) {
  NetSpec s;
  s.variant = "convolutional";
  s.arity = arity;
  s.layers = 4;
  s.width = 32;
  s.res_blocks = 4;
  s.kernel = std::holds_alternative<Grid1D>(grid) ? 5 : 3;
  return s;
}

OperatorNet::OperatorNet(NetSpec spec, Grid grid)
    : spec_(std::move(spec)), grid_(std::move(grid)) {
  if (spec_.variant != "spectral" && spec_.variant != "convolutional")
    throw ConfigError("unknown net variant: " + spec_.variant);
  if (spec_.arity < 1 || spec_.layers < 1 || spec_.width < 1)
    throw ConfigError("net spec: arity, layers and width must be positive");
  npoints_ = shape_numel(grid_shape(grid_));
  if (spec_.variant == "spectral")
    plan_ = make_spectral_plan(grid_, spec_.modes);
}

Params OperatorNet::init_params(std::uint64_t seed) const {
  Rng rng(seed);
  Params p;
  const std::int64_t ic = in_channels(), w = spec_.width;
  auto dense = [&](const std::string& name, std::int64_t rows,
                   std::int64_t cols) {
    ParamTensor t{name, {rows, cols}, std::vector<double>(rows * cols)};
    const double s = std::sqrt(2.0 / static_cast<double>(cols));
    for (auto& v : t.value) v = rng.normal(0.0, s);
    p.push_back(std::move(t));
  };
  auto zeros = [&](const std::string& name, std::int64_t n) {
    p.push_back(ParamTensor{name, {n}, std::vector<double>(n, 0.0)});
  };

  dense("lift_w", w, ic);
  zeros("lift_b", w);
  if (spec_.variant == "spectral") {
    const std::int64_t k = plan_.k_total;
    const double s = 1.0 / static_cast<double>(w * w);
    for (std::int64_t l = 0; l < spec_.layers; ++l) {
      for (const char* part : {"wre", "wim"}) {
        ParamTensor t{"fourier" + std::to_string(l) + "_" + part,
                      {k * w * w},
                      std::vector<double>(k * w * w)};
        for (auto& v : t.value) v = rng.uniform(0.0, s);
        p.push_back(std::move(t));
      }
      dense("pw" + std::to_string(l) + "_w", w, w);
      zeros("pw" + std::to_string(l) + "_b", w);
    }
    dense("head1_w", spec_.head_hidden, w);
    zeros("head1_b", spec_.head_hidden);
    dense("head2_w", 1, spec_.head_hidden);
    zeros("head2_b", 1);
  } else {
    const bool three_d = std::holds_alternative<Grid3D>(grid_);
    const std::int64_t kvol = three_d ? 27 : spec_.kernel;
    auto conv = [&](const std::string& name) {
      std::vector<std::int64_t> shape =
          three_d ? std::vector<std::int64_t>{w, w, 3, 3, 3}
                  : std::vector<std::int64_t>{w, w, spec_.kernel};
      ParamTensor t{name, shape, std::vector<double>(w * w * kvol)};
      const double s = std::sqrt(2.0 / static_cast<double>(w * kvol));
      for (auto& v : t.value) v = rng.normal(0.0, s);
      p.push_back(std::move(t));
    };
    for (std::int64_t l = 0; l < spec_.layers; ++l) {
      const std::string lp = "conv" + std::to_string(l);
      conv(lp + "_k");
      zeros(lp + "_b", w);
      for (std::int64_t r = 0; r < spec_.res_blocks; ++r) {
        const std::string rp = lp + "_res" + std::to_string(r);
        conv(rp + "a_k");
        zeros(rp + "a_b", w);
        conv(rp + "b_k");
        zeros(rp + "b_b", w);
      }
    }
    dense("head_w", 1, w);
    zeros("head_b", 1);
  }
  return p;
}

Var OperatorNet::forward(Tape& t, const std::vector<Var>& params, Var x,
                         std::int64_t batch) const {
  const std::int64_t n = t.val(x).size();
  if (n != in_channels() * batch * npoints_)
    throw ConfigError("net forward: input size does not match grid");
  std::size_t pi = 0;
  auto next = [&]() {
    if (pi >= params.size())
      throw ConfigError("net forward: too few parameter tensors");
    return params[pi++];
  };

  // next() calls stay hoisted into locals: nesting them in argument lists
  // would leave their order unspecified.
  Var lift_w = next(), lift_b = next();
  Var h = t.add_col_bias(t.matmul(lift_w, x), lift_b);
  if (spec_.variant == "spectral") {
    for (std::int64_t l = 0; l < spec_.layers; ++l) {
      Var wre = next(), wim = next(), pw_w = next(), pw_b = next();
      Var sp = spectral_conv(t, h, plan_, spec_.width, batch, wre, wim);
      Var pw = t.matmul(pw_w, h);
      h = t.add2_bias_gelu(pw, sp, pw_b);
    }
    Var h1_w = next(), h1_b = next();
    h = t.gelu(t.add_col_bias(t.matmul(h1_w, h), h1_b));
    Var h2_w = next(), h2_b = next();
    h = t.add_col_bias(t.matmul(h2_w, h), h2_b);
  } else {
    if (batch != 1)
      throw ConfigError("convolutional net forward is single-sample");
    const bool three_d = std::holds_alternative<Grid3D>(grid_);
    const std::int64_t w = spec_.width;
    auto conv = [&](Var in, Var k) {
      if (three_d) {
        const auto& g3 = std::get<Grid3D>(grid_);
        return t.conv3d(in, k, w, w, g3.nx, g3.ny, g3.nt);
      }
      return t.conv1d(in, k, w, w, spec_.kernel);
    };
    const double slope = 0.1;
    for (std::int64_t l = 0; l < spec_.layers; ++l) {
      Var ck = next(), cb = next();
      h = t.leaky_relu(t.add_col_bias(conv(h, ck), cb), slope);
      for (std::int64_t r = 0; r < spec_.res_blocks; ++r) {
        Var ak = next(), ab = next(), bk = next(), bb = next();
        Var z = t.leaky_relu(t.add_col_bias(conv(h, ak), ab), slope);
        z = t.add_col_bias(conv(z, bk), bb);
        h = t.leaky_relu(t.add(h, z), slope);
      }
    }
    Var hw = next(), hb = next();
    h = t.add_col_bias(t.matmul(hw, h), hb);
  }
  if (pi != params.size())
    throw ConfigError("net forward: too many parameter tensors");
  return h;
}

void save_params(const std::string& path, const Params& p,
                 const std::string& meta_json) {
  nlohmann::json header;
  header["meta"] = nlohmann::json::parse(meta_json.empty() ? "{}" : meta_json);
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& t : p)
    tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  const std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write model file: " + path);
  const char magic[8] = {'N', 'O', 'M', 'T', 'O', 'N', 'N', '1'};
  f.write(magic, sizeof magic);
  const auto hlen = static_cast<std::uint64_t>(hs.size());
  f.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& t : p)
    f.write(reinterpret_cast<const char*>(t.value.data()),
            static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  if (!f) throw IoError("short write to model file: " + path);
}

std::pair<Params, std::string> load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read model file: " + path);
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, "NOMTONN1", 8) != 0)
    throw IoError("not a model file: " + path);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (!f || hlen > (1u << 20)) throw IoError("corrupt model header: " + path);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw IoError("corrupt model header: " + path);
  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  if (header.is_discarded() || !header.contains("tensors"))
    throw IoError("corrupt model header: " + path);

  Params p;
  for (const auto& tj : header["tensors"]) {
    ParamTensor t;
    t.name = tj.at("name").get<std::string>();
    t.shape = tj.at("shape").get<std::vector<std::int64_t>>();
    t.value.resize(static_cast<std::size_t>(shape_numel(t.shape)));
    f.read(reinterpret_cast<char*>(t.value.data()),
           static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    if (!f) throw IoError("truncated model file: " + path);
    p.push_back(std::move(t));
  }
  return {std::move(p), header["meta"].dump()};
}

std::string net_spec_to_json(const NetSpec& s) {
  nlohmann::json j{{"variant", s.variant},
                   {"arity", s.arity},
                   {"layers", s.layers},
                   {"width", s.width},
                   {"modes", s.modes},
                   {"head_hidden", s.head_hidden},
                   {"res_blocks", s.res_blocks},
                   {"kernel", s.kernel}};
  return j.dump();
}

NetSpec net_spec_from_json(const std::string& json) {
  nlohmann::json j = nlohmann::json::parse(json);
  NetSpec s;
  s.variant = j.at("variant").get<std::string>();
  s.arity = j.at("arity").get<std::int64_t>();
  s.layers = j.at("layers").get<std::int64_t>();
  s.width = j.at("width").get<std::int64_t>();
  s.modes = j.at("modes").get<std::int64_t>();
  s.head_hidden = j.at("head_hidden").get<std::int64_t>();
  s.res_blocks = j.at("res_blocks").get<std::int64_t>();
  s.kernel = j.at("kernel").get<std::int64_t>();
  return s;
}

}  // namespace nomto
