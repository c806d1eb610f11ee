#include "nomto/grid.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

namespace nomto {

std::string axis_name(Axis a) {
  switch (a) {
    case Axis::T: return "t";
    case Axis::X: return "x";
    case Axis::Y: return "y";
  }
  throw ConfigError("bad axis");
}

Axis axis_from_name(const std::string& s) {
  if (s == "t") return Axis::T;
  if (s == "x") return Axis::X;
  if (s == "y") return Axis::Y;
  throw ConfigError("unknown axis name: " + s);
}

std::vector<double> Grid1D::points() const {
  std::vector<double> p(n);
  const double h = spacing();
  for (std::int64_t i = 0; i < n; ++i) p[i] = lo + h * static_cast<double>(i);
  p.back() = hi;
  return p;
}

namespace {
std::vector<double> cell_centers(double extent, std::int64_t n) {
  std::vector<double> p(n);
  const double h = extent / static_cast<double>(n);
  for (std::int64_t i = 0; i < n; ++i)
    p[i] = -extent / 2.0 + h * (static_cast<double>(i) + 0.5);
  return p;
}
}  // namespace

std::vector<double> Grid3D::xs() const { return cell_centers(lx, nx); }
std::vector<double> Grid3D::ys() const { return cell_centers(ly, ny); }

std::vector<double> Grid3D::ts() const {
  std::vector<double> p(nt);
  for (std::int64_t i = 0; i < nt; ++i) p[i] = dt_save * static_cast<double>(i);
  return p;
}

Grid1D make_grid_1d(double lo, double hi, std::int64_t n) {
  if (n < 2) throw ConfigError("grid needs at least 2 points");
  if (!(lo < hi)) throw ConfigError("grid interval must have lo < hi");
  return Grid1D{lo, hi, n};
}

Grid3D make_grid_3d(std::int64_t nx, std::int64_t ny, std::int64_t nt,
                    double lx, double ly, double dt_save) {
  if (nx < 2 || ny < 2 || nt < 2)
    throw ConfigError("grid needs at least 2 points per axis");
  if (!(lx > 0.0) || !(ly > 0.0) || !(dt_save > 0.0))
    throw ConfigError("grid extents and frame spacing must be positive");
  return Grid3D{nx, ny, nt, lx, ly, dt_save};
}

std::vector<std::int64_t> grid_shape(const Grid& g) {
  if (const auto* g1 = std::get_if<Grid1D>(&g)) return {g1->n};
  const auto& g3 = std::get<Grid3D>(g);
  return {g3.nx, g3.ny, g3.nt};
}

double grid_spacing(const Grid& g, Axis axis) {
  if (const auto* g1 = std::get_if<Grid1D>(&g)) {
    if (axis != Axis::T)
      throw ConfigError("1-d grids only have a t axis");
    return g1->spacing();
  }
  const auto& g3 = std::get<Grid3D>(g);
  switch (axis) {
    case Axis::X: return g3.dx();
    case Axis::Y: return g3.dy();
    case Axis::T: return g3.dt_save;
  }
  throw ConfigError("bad axis");
}

bool grid_equal(const Grid& a, const Grid& b) {
  if (a.index() != b.index()) return false;
  if (const auto* a1 = std::get_if<Grid1D>(&a))
    return *a1 == std::get<Grid1D>(b);
  return std::get<Grid3D>(a) == std::get<Grid3D>(b);
}

std::string grid_signature(const Grid& g) {
  char buf[160];
  if (const auto* g1 = std::get_if<Grid1D>(&g)) {
    std::snprintf(buf, sizeof buf, "g1d_n%lld_%.9g_%.9g",
                  static_cast<long long>(g1->n), g1->lo, g1->hi);
  } else {
    const auto& g3 = std::get<Grid3D>(g);
    std::snprintf(buf, sizeof buf, "g3d_%lldx%lldx%lld_%.9g_%.9g_%.9g",
                  static_cast<long long>(g3.nx), static_cast<long long>(g3.ny),
                  static_cast<long long>(g3.nt), g3.lx, g3.ly, g3.dt_save);
  }
  return buf;
}

std::string grid_to_json(const Grid& g) {
  nlohmann::json j;
  if (const auto* g1 = std::get_if<Grid1D>(&g)) {
    j = {{"kind", "1d"}, {"lo", g1->lo}, {"hi", g1->hi}, {"n", g1->n}};
  } else {
    const auto& g3 = std::get<Grid3D>(g);
    j = {{"kind", "3d"}, {"nx", g3.nx},     {"ny", g3.ny},
         {"nt", g3.nt},  {"lx", g3.lx},     {"ly", g3.ly},
         {"dt_save", g3.dt_save}};
  }
  return j.dump();
}

Grid grid_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_object() || !j.contains("kind"))
    throw IoError("grid json: not a grid object");
  const std::string kind = j["kind"];
  try {
    if (kind == "1d")
      return Grid1D{j.at("lo").get<double>(), j.at("hi").get<double>(),
                    j.at("n").get<std::int64_t>()};
    if (kind == "3d")
      return Grid3D{j.at("nx").get<std::int64_t>(),
                    j.at("ny").get<std::int64_t>(),
                    j.at("nt").get<std::int64_t>(),
                    j.at("lx").get<double>(),
                    j.at("ly").get<double>(),
                    j.at("dt_save").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("grid json: ") + e.what());
  }
  throw IoError("grid json: unknown kind " + kind);
}

DiscretizedFunction::DiscretizedFunction(const Grid& g)
    : grid(g), values(grid_shape(g)), defined(grid_shape(g), true) {}

DiscretizedFunction::DiscretizedFunction(const Grid& g, NdArray v)
    : grid(g), values(std::move(v)), defined(grid_shape(g), true) {
  if (values.shape() != grid_shape(grid))
    throw ConfigError("field shape does not match grid");
}

}  // namespace nomto
