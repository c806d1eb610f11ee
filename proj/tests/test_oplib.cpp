#include <doctest.h>

#include <cmath>

#include "nomto/funcgen.hpp"
#include "nomto/oplib.hpp"

using namespace nomto;

namespace {

DiscretizedFunction field_of(const Grid1D& g, double (*fn)(double)) {
  DiscretizedFunction f{Grid{g}};
  const auto pts = g.points();
  for (std::int64_t i = 0; i < g.n; ++i) f.values[i] = fn(pts[i]);
  return f;
}

}  // namespace

TEST_CASE("registry knows every op with the right arity") {
  CHECK(op_by_name("mul").arity == 2);
  CHECK(op_by_name("div").arity == 2);
  CHECK(op_by_name("sin").arity == 1);
  CHECK(op_by_name("ddt").is_derivative);
  CHECK(op_by_name("ddt").derivative_order == 1);
  CHECK(op_by_name("ddx").axis == Axis::X);
  CHECK_FALSE(op_by_name("square").is_derivative);
  CHECK_THROWS_AS(op_by_name("tanh"), ConfigError);
}

TEST_CASE("library presets carry the exact ordered op lists") {
  const auto& sr = library_preset("sr_benchmark");
  CHECK(sr.ops == std::vector<std::string>{"id", "const", "square", "sin",
                                           "cos", "ln", "sqrt", "mul", "div"});
  const auto& ds = library_preset("derivatives_special");
  CHECK(ds.ops == std::vector<std::string>{"id", "ddt", "ddt", "sin", "airy",
                                           "gamma", "mul", "div"});
  CHECK(library_preset("heat").ops == std::vector<std::string>{"ddx", "ddy"});
  CHECK(library_preset("burgers").ops ==
        std::vector<std::string>{"id", "id", "mul", "mul", "ddx", "ddy"});
  CHECK_THROWS_AS(library_preset("nope"), ConfigError);
}

TEST_CASE("projection matches tanh and clips at the limit") {
  ProjectionSpec proj;
  CHECK(proj.project(2.0) == doctest::Approx(std::tanh(2.0)).epsilon(1e-9));
  CHECK(proj.project(1e9) == proj.project(1000.0));
  CHECK(proj.project(-1e9) == proj.project(-1000.0));
  CHECK(proj.unproject(proj.project(3.7)) == doctest::Approx(3.7).epsilon(1e-6));
  CHECK(proj.unproject(1.0) == 1000.0);
  CHECK(proj.unproject(-1.0) == -1000.0);
  CHECK(proj.unproject(5.0) == 1000.0);  // cropped first
  CHECK(proj.crop(0.3) == 0.3);
  CHECK(proj.crop(2.0) == proj.crop_hi());
}

TEST_CASE("round trip is near-identity across the representable range") {
  ProjectionSpec proj;
  for (double v : {-4.2, -1.0, -1e-4, 0.0, 1e-3, 0.5, 2.0, 9.9})
    CHECK(proj.unproject(proj.project(v)) == doctest::Approx(v).epsilon(1e-6));
  // tanh saturates hard past ~10, so the round trip gets coarser out there.
  for (double v : {-15.0, 15.0})
    CHECK(proj.unproject(proj.project(v)) == doctest::Approx(v).epsilon(1e-3));
}

TEST_CASE("redefined point semantics keep every op total") {
  CHECK(eval_point_unary(OpKind::Sqrt, -4.0) == 0.0);
  CHECK(eval_point_unary(OpKind::Sqrt, 0.0) == 0.0);
  CHECK(eval_point_unary(OpKind::Sqrt, 9.0) == 3.0);
  CHECK(eval_point_unary(OpKind::Ln, -1.0) == 0.0);  // ln|x|
  CHECK(eval_point_unary(OpKind::Ln, 0.0) == -1000.0);
  CHECK(eval_point_unary(OpKind::Ln, std::exp(2.0)) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(eval_point_binary(OpKind::Div, 1.0, 0.5) == 2.0);
  CHECK(eval_point_binary(OpKind::Div, 1.0, 0.0) == 1000.0);
  CHECK(eval_point_binary(OpKind::Div, -3.0, 0.0) == -1000.0);
  CHECK(eval_point_binary(OpKind::Div, 0.0, 0.0) == 0.0);
  CHECK(eval_point_unary(OpKind::Gamma, -1.0) == 1000.0);  // pole saturates
  CHECK(eval_point_unary(OpKind::Gamma, 200.0) == 1000.0);  // overflow
  CHECK(eval_point_unary(OpKind::Gamma, 0.5) ==
        doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
  CHECK(eval_point_unary(OpKind::Airy, 0.0) ==
        doctest::Approx(0.35502805388781723926).epsilon(1e-12));
  CHECK(eval_point_unary(OpKind::Const, 123.0) == 1.0);
  CHECK(eval_point_unary(OpKind::Square, -7.0) == 49.0);
}

TEST_CASE("node transfer saturates at the clip limit") {
  CHECK(saturate_node(5.0) == 5.0);
  CHECK(saturate_node(123456.0) == 1000.0);
  CHECK(saturate_node(-123456.0) == -1000.0);
  CHECK(saturate_node(std::nan("")) == 0.0);
  CHECK(saturate_node(INFINITY) == 1000.0);
}

TEST_CASE("first derivative is exact on quadratics, including the ends") {
  const Grid1D g = make_grid_1d(-10.0, 10.0, 100);
  const auto f = field_of(g, [](double t) { return t * t; });
  const auto d = numeric_derivative(f, Axis::T, 1);
  const auto pts = g.points();
  for (std::int64_t i = 0; i < g.n; ++i)
    CHECK(d.values[i] == doctest::Approx(2.0 * pts[i]).epsilon(1e-10));
}

TEST_CASE("second derivative of t^2 is 2 everywhere") {
  const Grid1D g = make_grid_1d(-5.0, 5.0, 64);
  const auto f = field_of(g, [](double t) { return t * t; });
  const auto d2 = numeric_derivative(f, Axis::T, 2);
  for (std::int64_t i = 0; i < g.n; ++i)
    CHECK(d2.values[i] == doctest::Approx(2.0).epsilon(1e-9));
  const auto f1 = field_of(g, [](double t) { return t; });
  const auto z = numeric_derivative(f1, Axis::T, 2);
  for (std::int64_t i = 0; i < g.n; ++i)
    CHECK(z.values[i] == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
}

TEST_CASE("halving the spacing quarters the interior error") {
  for (int order : {1, 2}) {
    double errors[2];
    int idx = 0;
    for (std::int64_t n : {101, 201}) {  // h, h/2
      const Grid1D g = make_grid_1d(-3.0, 3.0, n);
      const auto f = field_of(g, [](double t) { return std::sin(t); });
      const auto d = numeric_derivative(f, Axis::T, order);
      const auto pts = g.points();
      double err = 0.0;
      for (std::int64_t i = 2; i < g.n - 2; ++i) {
        const double truth =
            order == 1 ? std::cos(pts[i]) : -std::sin(pts[i]);
        err = std::max(err, std::abs(d.values[i] - truth));
      }
      errors[idx++] = err;
    }
    const double ratio = errors[0] / errors[1];
    CHECK(ratio > 3.5);
    CHECK(ratio < 4.5);
  }
}

TEST_CASE("derivatives on 3-d grids act along the named axis") {
  const Grid3D g = make_grid_3d(20, 22, 24, 20.0, 20.0, 0.1);
  DiscretizedFunction f{Grid{g}};
  const auto xs = g.xs();
  const auto ys = g.ys();
  const auto ts = g.ts();
  for (std::int64_t i = 0; i < g.nx; ++i)
    for (std::int64_t j = 0; j < g.ny; ++j)
      for (std::int64_t k = 0; k < g.nt; ++k)
        f.values.at(i, j, k) = 2.0 * xs[i] + 3.0 * ys[j] * ys[j] + ts[k];
  const auto dx = numeric_derivative(f, Axis::X, 1);
  const auto dy = numeric_derivative(f, Axis::Y, 1);
  const auto dt = numeric_derivative(f, Axis::T, 1);
  for (std::int64_t i = 0; i < g.nx; ++i)
    for (std::int64_t j = 0; j < g.ny; ++j)
      for (std::int64_t k = 0; k < g.nt; ++k) {
        CHECK(dx.values.at(i, j, k) == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(dy.values.at(i, j, k) ==
              doctest::Approx(6.0 * ys[j]).scale(10.0).epsilon(1e-9));
        CHECK(dt.values.at(i, j, k) == doctest::Approx(1.0).epsilon(1e-9));
      }
}

TEST_CASE("derivative input validation") {
  const Grid1D tiny = make_grid_1d(0.0, 1.0, 2);
  DiscretizedFunction f{Grid{tiny}};
  CHECK_THROWS_AS(numeric_derivative(f, Axis::T, 1), ConfigError);
  const Grid1D g = make_grid_1d(0.0, 1.0, 10);
  DiscretizedFunction h{Grid{g}};
  CHECK_THROWS_AS(numeric_derivative(h, Axis::X, 1), ConfigError);
  CHECK_THROWS_AS(numeric_derivative(h, Axis::T, 3), ConfigError);
}

TEST_CASE("undefined points poison the stencil neighbourhood") {
  const Grid1D g = make_grid_1d(0.0, 1.0, 20);
  auto f = field_of(g, [](double t) { return t; });
  f.defined[10] = 0;
  const auto d = numeric_derivative(f, Axis::T, 1);
  CHECK(d.defined[8] == 1);
  CHECK(d.defined[9] == 0);
  CHECK(d.defined[10] == 0);
  CHECK(d.defined[11] == 0);
  CHECK(d.defined[12] == 1);
}

TEST_CASE("exact unary evaluation maps fields point-wise") {
  const Grid1D g = make_grid_1d(-10.0, 10.0, 100);
  const auto f = field_of(g, [](double t) { return t; });
  const auto s = eval_exact_unary(op_by_name("square"), f);
  const auto pts = g.points();
  for (std::int64_t i = 0; i < g.n; ++i)
    CHECK(s.values[i] == pts[i] * pts[i]);
  const auto d = eval_exact_unary(op_by_name("ddt"), s);
  for (std::int64_t i = 0; i < g.n; ++i)
    CHECK(d.values[i] == doctest::Approx(2.0 * pts[i]).epsilon(1e-9));
  CHECK_THROWS_AS(eval_exact_unary(op_by_name("mul"), f), ConfigError);
}

TEST_CASE("exact binary evaluation with the redefined division") {
  const Grid1D g = make_grid_1d(-1.0, 1.0, 3);  // points -1, 0, 1
  auto a = field_of(g, [](double) { return 1.0; });
  auto b = field_of(g, [](double t) { return t; });
  const auto q = eval_exact_binary(op_by_name("div"), a, b);
  CHECK(q.values[0] == -1.0);
  CHECK(q.values[1] == 1000.0);
  CHECK(q.values[2] == 1.0);
  const auto p = eval_exact_binary(op_by_name("mul"), b, b);
  CHECK(p.values[0] == 1.0);
  CHECK(p.values[1] == 0.0);
  CHECK_THROWS_AS(eval_exact_binary(op_by_name("sin"), a, b), ConfigError);
}

TEST_CASE("training pairs live in projected space") {
  ProjectionSpec proj;
  const Grid1D g = make_grid_1d(-5.0, 5.0, 100);
  const auto f = field_of(g, [](double t) { return t; });  // max |value| 5
  const auto pair = make_training_pair(op_by_name("square"), {f}, proj);
  REQUIRE(pair.inputs.size() == 1);
  const auto pts = g.points();
  for (std::int64_t i = 0; i < g.n; ++i) {
    CHECK(pair.inputs[0][i] == pts[i]);  // inputs stay raw
    CHECK(pair.target[i] ==
          doctest::Approx(std::tanh(pts[i] * pts[i])).epsilon(1e-12));
    CHECK(pair.target[i] >= 0.0);
    CHECK(pair.target[i] <= std::tanh(25.0));
  }
  CHECK_THROWS_AS(make_training_pair(op_by_name("mul"), {f}, proj),
                  ConfigError);
}
