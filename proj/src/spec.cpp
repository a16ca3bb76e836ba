#include "warpgeo/spec.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace warpgeo {

using Json = nlohmann::ordered_json;

const ChartedManifold& RunSpec::manifold(const std::string& name) const {
  if (auto it = manifolds.find(name); it != manifolds.end()) return it->second;
  if (auto it = warped_products.find(name); it != warped_products.end()) return it->second.charted();
  throw Error(ErrorCode::UndefinedName, "no manifold named '" + name + "'");
}

const SmoothMap& RunSpec::smooth_map(const std::string& name) const {
  if (auto it = maps.find(name); it != maps.end()) return it->second;
  if (auto it = product_maps.find(name); it != product_maps.end()) return it->second.map;
  throw Error(ErrorCode::UndefinedName, "no map named '" + name + "'");
}

const ProductMap& RunSpec::product_map(const std::string& name) const {
  if (auto it = product_maps.find(name); it != product_maps.end()) return it->second;
  throw Error(ErrorCode::UndefinedName, "no product map named '" + name + "'");
}

bool RunSpec::has_manifold(const std::string& name) const {
  return manifolds.count(name) != 0 || warped_products.count(name) != 0;
}

bool RunSpec::has_map(const std::string& name) const {
  return maps.count(name) != 0 || product_maps.count(name) != 0;
}

const std::vector<std::string>& task_kinds() {
  static const std::vector<std::string> kinds = {
      "christoffel",       "curvature",          "conformality",         "umbilicity",
      "totally_geodesic",  "clairaut",           "dilation_equality",    "conformal_identities",
      "ricci_decomposition", "geodesic",         "soliton",              "bochner",
      "split_operators"};
  return kinds;
}

namespace {

enum class Subject { Manifold, Map, ProductMap };

Subject subject_of(const std::string& kind) {
  if (kind == "christoffel" || kind == "curvature" || kind == "geodesic" || kind == "soliton" ||
      kind == "bochner") {
    return Subject::Manifold;
  }
  if (kind == "clairaut" || kind == "dilation_equality" || kind == "conformal_identities" ||
      kind == "ricci_decomposition") {
    return Subject::ProductMap;
  }
  return Subject::Map;
}

class Loader {
 public:
  explicit Loader(std::string origin) : origin_(std::move(origin)) {}

  RunSpec load(std::string_view text) {
    Json root;
    try {
      root = Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
      throw syntax_error(text, e);
    }
    if (!root.is_object()) fail(ErrorCode::SpecSyntax, "", "top level must be an object");
    static const std::set<std::string> allowed = {"seed", "manifolds", "warped_products", "maps",
                                                  "tasks"};
    for (const auto& [key, value] : root.items()) {
      if (allowed.count(key) == 0) fail(ErrorCode::SpecSemantic, key, "unknown top-level key");
    }
    if (root.contains("seed")) {
      const Json& s = root["seed"];
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
        fail(ErrorCode::SpecSemantic, "seed", "must be a non-negative integer");
      }
      spec_.seed = s.get<std::uint64_t>();
    }
    for_each(root, "manifolds", [&](const Json& m, const std::string& path) { manifold(m, path); });
    for_each(root, "warped_products",
             [&](const Json& w, const std::string& path) { warped(w, path); });
    for_each(root, "maps", [&](const Json& m, const std::string& path) { map(m, path); });
    std::size_t index = 0;
    for_each(root, "tasks", [&](const Json& t, const std::string& path) { task(t, path, index++); });
    return std::move(spec_);
  }

 private:
  [[noreturn]] void fail(ErrorCode code, const std::string& path, const std::string& msg) const {
    throw Error(code, origin_ + (path.empty() ? "" : ": " + path) + ": " + msg);
  }

  Error syntax_error(std::string_view text, const Json::parse_error& e) const {
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string what = e.what();
    if (auto pos = what.find("parse error"); pos != std::string::npos) what = what.substr(pos);
    return Error(ErrorCode::SpecSyntax, origin_ + ":" + std::to_string(line) + ":" +
                                            std::to_string(column) + ": " + what);
  }

  template <typename F>
  void for_each(const Json& root, const char* key, F&& fn) {
    if (!root.contains(key)) return;
    const Json& list = root[key];
    if (!list.is_array()) fail(ErrorCode::SpecSemantic, key, "must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = std::string(key) + "[" + std::to_string(i) + "]";
      if (!list[i].is_object()) fail(ErrorCode::SpecSemantic, path, "must be an object");
      fn(list[i], path);
    }
  }

  const Json& require(const Json& obj, const char* key, const std::string& path) const {
    if (!obj.contains(key)) fail(ErrorCode::SpecSemantic, path, std::string("missing '") + key + "'");
    return obj[key];
  }

  std::string string_at(const Json& obj, const char* key, const std::string& path) const {
    const Json& v = require(obj, key, path);
    if (!v.is_string()) fail(ErrorCode::SpecSemantic, path + "." + key, "must be a string");
    return v.get<std::string>();
  }

  double number(const Json& v, const std::string& path) const {
    if (!v.is_number()) fail(ErrorCode::SpecSemantic, path, "must be a number");
    return v.get<double>();
  }

  std::optional<double> positive_opt(const Json& obj, const char* key,
                                     const std::string& path) const {
    if (!obj.contains(key)) return std::nullopt;
    const double v = number(obj[key], path + "." + key);
    if (!(v > 0.0)) fail(ErrorCode::SpecSemantic, path + "." + key, "must be positive");
    return v;
  }

  // Metric entries and components may be written as numbers or expressions.
  std::string expr_text(const Json& v, const std::string& path) const {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
      return buf;
    }
    fail(ErrorCode::SpecSemantic, path, "must be an expression string or a number");
  }

  std::vector<std::string> strings(const Json& v, const std::string& path) const {
    if (!v.is_array()) fail(ErrorCode::SpecSemantic, path, "must be an array");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(expr_text(v[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  Vector numbers(const Json& v, const std::string& path) const {
    if (!v.is_array()) fail(ErrorCode::SpecSemantic, path, "must be an array of numbers");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      out[static_cast<Eigen::Index>(i)] = number(v[i], path + "[" + std::to_string(i) + "]");
    }
    return out;
  }

  // Re-raise a library error with the spec location prepended.
  template <typename F>
  auto located(const std::string& path, F&& fn) const -> decltype(fn()) {
    try {
      return fn();
    } catch (const Error& e) {
      if (std::string_view(e.what()).starts_with(origin_ + ":")) throw;
      throw Error(e.code(), origin_ + ": " + path + ": " + e.what());
    }
  }

  Expr expression(const Json& v, const std::string& path,
                  const std::vector<std::string>& symbols) const {
    const std::string text = expr_text(v, path);
    return located(path, [&] { return parse(text, symbols); });
  }

  void claim(const std::string& name, const std::string& path) {
    if (name.empty()) fail(ErrorCode::SpecSemantic, path, "empty name");
    if (!names_.insert(name).second) fail(ErrorCode::DuplicateName, path, "duplicate name '" + name + "'");
  }

  const ChartedManifold& manifold_ref(const std::string& name, const std::string& path) const {
    if (!spec_.has_manifold(name)) fail(ErrorCode::UndefinedName, path, "undefined manifold '" + name + "'");
    return spec_.manifold(name);
  }

  void manifold(const Json& m, const std::string& path) {
    const std::string name = string_at(m, "name", path);
    claim(name, path);
    const Json& coords_json = require(m, "coordinates", path);
    if (!coords_json.is_array() || coords_json.empty()) {
      fail(ErrorCode::SpecSemantic, path + ".coordinates", "must be a non-empty array");
    }
    std::vector<std::string> coords;
    for (const Json& c : coords_json) {
      if (!c.is_string()) fail(ErrorCode::SpecSemantic, path + ".coordinates", "names must be strings");
      coords.push_back(c.get<std::string>());
    }
    const std::vector<std::string> constraints =
        m.contains("constraints") ? strings(m["constraints"], path + ".constraints")
                                  : std::vector<std::string>{};
    Bindings params;
    if (m.contains("parameters")) {
      if (!m["parameters"].is_object()) fail(ErrorCode::SpecSemantic, path + ".parameters", "must be an object");
      for (const auto& [k, v] : m["parameters"].items()) params.set(k, number(v, path + ".parameters." + k));
    }
    const bool has_metric = m.contains("metric");
    if (has_metric == m.contains("diagonal")) {
      fail(ErrorCode::SpecSemantic, path, "exactly one of 'metric' or 'diagonal' is required");
    }
    ChartedManifold out = located(path, [&] {
      if (has_metric) {
        const Json& rows = m["metric"];
        if (!rows.is_array()) fail(ErrorCode::SpecSemantic, path + ".metric", "must be an array of rows");
        std::vector<std::vector<std::string>> grid;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          grid.push_back(strings(rows[r], path + ".metric[" + std::to_string(r) + "]"));
        }
        return ChartedManifold::from_strings(name, coords, grid, constraints, params);
      }
      return ChartedManifold::from_diagonal(name, coords, strings(m["diagonal"], path + ".diagonal"),
                                            constraints, params);
    });
    if (m.contains("box")) {
      const Json& box = m["box"];
      if (!box.is_array() || box.size() != coords.size()) {
        fail(ErrorCode::SpecSemantic, path + ".box", "needs one [lo, hi] pair per coordinate");
      }
      std::vector<Interval> intervals;
      for (std::size_t i = 0; i < box.size(); ++i) {
        const std::string ip = path + ".box[" + std::to_string(i) + "]";
        const Vector pair = numbers(box[i], ip);
        if (pair.size() != 2 || !(pair[0] < pair[1])) fail(ErrorCode::SpecSemantic, ip, "needs lo < hi");
        intervals.push_back({pair[0], pair[1]});
      }
      out.set_box(std::move(intervals));
    }
    spec_.manifolds.emplace(name, std::move(out));
  }

  void warped(const Json& w, const std::string& path) {
    const std::string name = string_at(w, "name", path);
    claim(name, path);
    const ChartedManifold& base = manifold_ref(string_at(w, "base", path), path + ".base");
    const ChartedManifold& fiber = manifold_ref(string_at(w, "fiber", path), path + ".fiber");
    const std::string warp = expr_text(require(w, "warp", path), path + ".warp");
    spec_.warped_products.emplace(
        name, located(path, [&] { return WarpedProduct::from_strings(name, base, fiber, warp); }));
  }

  void map(const Json& m, const std::string& path) {
    const std::string name = string_at(m, "name", path);
    claim(name, path);
    if (m.contains("product")) {
      const Json& parts = m["product"];
      if (!parts.is_array() || parts.size() != 2 || !parts[0].is_string() || !parts[1].is_string()) {
        fail(ErrorCode::SpecSemantic, path + ".product", "must name two factor maps");
      }
      const SmoothMap& first = plain_map(parts[0].get<std::string>(), path + ".product[0]");
      const SmoothMap& second = plain_map(parts[1].get<std::string>(), path + ".product[1]");
      const std::string f = m.contains("warp") ? expr_text(m["warp"], path + ".warp") : "1";
      const std::string rho =
          m.contains("target_warp") ? expr_text(m["target_warp"], path + ".target_warp") : "1";
      spec_.product_maps.emplace(
          name, located(path, [&] { return product_map_build(name, first, second, f, rho); }));
      return;
    }
    const ChartedManifold& source = manifold_ref(string_at(m, "source", path), path + ".source");
    const ChartedManifold& target = manifold_ref(string_at(m, "target", path), path + ".target");
    const std::vector<std::string> comps = strings(require(m, "components", path), path + ".components");
    spec_.maps.emplace(
        name, located(path, [&] { return SmoothMap::from_strings(name, source, target, comps); }));
  }

  const SmoothMap& plain_map(const std::string& name, const std::string& path) const {
    auto it = spec_.maps.find(name);
    if (it == spec_.maps.end()) fail(ErrorCode::UndefinedName, path, "undefined map '" + name + "'");
    return it->second;
  }

  std::vector<Point> sample(const ChartedManifold& m, std::size_t count, std::size_t index,
                            const std::string& path) const {
    if (!m.box()) fail(ErrorCode::SpecSemantic, path, "random sampling needs a box on '" + m.name() + "'");
    std::seed_seq seq{static_cast<std::uint32_t>(spec_.seed & 0xffffffffu),
                      static_cast<std::uint32_t>(spec_.seed >> 32),
                      static_cast<std::uint32_t>(index)};
    std::mt19937_64 rng(seq);
    std::vector<Point> out;
    for (std::size_t n = 0; n < count; ++n) {
      bool found = false;
      for (int attempt = 0; attempt < 1000 && !found; ++attempt) {
        Point p{Vector(m.dim())};
        for (int i = 0; i < m.dim(); ++i) {
          const Interval& iv = (*m.box())[static_cast<std::size_t>(i)];
          p.coords[i] = std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng);
        }
        if (m.admissible(p)) {
          out.push_back(std::move(p));
          found = true;
        }
      }
      if (!found) fail(ErrorCode::SpecSemantic, path, "no admissible point found in the box");
    }
    return out;
  }

  void check_point(const ChartedManifold& m, const Point& p, const std::string& path) const {
    if (p.coords.size() != m.dim()) {
      fail(ErrorCode::DimensionMismatch, path,
           "point has " + std::to_string(p.coords.size()) + " coordinates, '" + m.name() +
               "' has dimension " + std::to_string(m.dim()));
    }
    located(path, [&] {
      m.check_admissible(p);
      (void)metric_at(m, p);
      return 0;
    });
  }

  std::vector<Expr> expressions(const Json& v, const std::string& path,
                                const std::vector<std::string>& symbols) const {
    if (!v.is_array()) fail(ErrorCode::SpecSemantic, path, "must be an array");
    std::vector<Expr> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(expression(v[i], path + "[" + std::to_string(i) + "]", symbols));
    }
    return out;
  }

  void task(const Json& t, const std::string& path, std::size_t index) {
    TaskSpec task;
    task.kind = string_at(t, "kind", path);
    const auto& kinds = task_kinds();
    if (std::find(kinds.begin(), kinds.end(), task.kind) == kinds.end()) {
      fail(ErrorCode::SpecSemantic, path + ".kind", "unknown task kind '" + task.kind + "'");
    }
    task.id = t.contains("id") ? string_at(t, "id", path) : task.kind + "_" + std::to_string(index + 1);
    if (!task_ids_.insert(task.id).second) fail(ErrorCode::DuplicateName, path, "duplicate task id '" + task.id + "'");
    task.tolerance = positive_opt(t, "tolerance", path);

    const Subject subject = subject_of(task.kind);
    const ChartedManifold* domain = nullptr;
    const SmoothMap* phi = nullptr;
    if (subject == Subject::Manifold) {
      task.subject = string_at(t, "manifold", path);
      domain = &manifold_ref(task.subject, path + ".manifold");
    } else {
      task.subject = string_at(t, "map", path);
      if (subject == Subject::ProductMap && spec_.product_maps.count(task.subject) == 0) {
        fail(spec_.maps.count(task.subject) ? ErrorCode::SpecSemantic : ErrorCode::UndefinedName,
             path + ".map", "'" + task.subject + "' is not a product map");
      }
      if (!spec_.has_map(task.subject)) fail(ErrorCode::UndefinedName, path + ".map", "undefined map '" + task.subject + "'");
      phi = &spec_.smooth_map(task.subject);
      domain = &phi->source();
    }
    const std::vector<std::string> symbols = domain->symbol_names();

    if (task.kind == "geodesic") {
      task.points.push_back(Point{numbers(require(t, "from", path), path + ".from")});
      task.velocity = numbers(require(t, "velocity", path), path + ".velocity");
      if (task.velocity.size() != domain->dim()) fail(ErrorCode::DimensionMismatch, path + ".velocity", "wrong dimension");
      task.t_max = number(require(t, "t_max", path), path + ".t_max");
      task.step = number(require(t, "step", path), path + ".step");
      if (!(task.t_max > 0.0)) fail(ErrorCode::SpecSemantic, path + ".t_max", "must be positive");
      if (!(task.step > 0.0)) fail(ErrorCode::SpecSemantic, path + ".step", "must be positive");
      if (t.contains("map")) {
        task.map = string_at(t, "map", path);
        if (!spec_.has_map(*task.map)) fail(ErrorCode::UndefinedName, path + ".map", "undefined map '" + *task.map + "'");
        if (spec_.smooth_map(*task.map).source().dim() != domain->dim()) {
          fail(ErrorCode::DimensionMismatch, path + ".map", "map source does not match the manifold");
        }
        task.r_field = expression(require(t, "r_field", path), path + ".r_field", symbols);
      }
      task.residual_tolerance = positive_opt(t, "residual_tolerance", path);
    } else if (t.contains("points")) {
      const Json& pts = t["points"];
      if (!pts.is_array() || pts.empty()) fail(ErrorCode::SpecSemantic, path + ".points", "must be a non-empty array");
      for (std::size_t i = 0; i < pts.size(); ++i) {
        task.points.push_back(Point{numbers(pts[i], path + ".points[" + std::to_string(i) + "]")});
      }
    } else if (t.contains("sample")) {
      const Json& n = t["sample"];
      if (!n.is_number_integer() || n.get<long long>() <= 0) fail(ErrorCode::SpecSemantic, path + ".sample", "must be a positive integer");
      task.points = sample(*domain, static_cast<std::size_t>(n.get<long long>()), index, path + ".sample");
    } else {
      fail(ErrorCode::SpecSemantic, path, "needs 'points' or 'sample'");
    }
    for (std::size_t i = 0; i < task.points.size(); ++i) {
      const std::string pp = path + ".points[" + std::to_string(i) + "]";
      check_point(*domain, task.points[i], pp);
      if (phi) located(pp, [&] { return phi->image(task.points[i]); });
    }

    if (t.contains("expected")) {
      const Json& list = t["expected"];
      if (!list.is_array()) fail(ErrorCode::SpecSemantic, path + ".expected", "must be an array");
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string ep = path + ".expected[" + std::to_string(i) + "]";
        const Vector idx = numbers(require(list[i], "symbol", ep), ep + ".symbol");
        if (idx.size() != 3) fail(ErrorCode::SpecSemantic, ep + ".symbol", "needs [k, i, j]");
        ExpectedSymbol s{static_cast<int>(idx[0]), static_cast<int>(idx[1]), static_cast<int>(idx[2]),
                         expression(require(list[i], "value", ep), ep + ".value", symbols)};
        for (int v : {s.k, s.i, s.j}) {
          if (v < 1 || v > domain->dim()) fail(ErrorCode::SpecSemantic, ep + ".symbol", "index out of range");
        }
        task.expected_symbols.push_back(std::move(s));
      }
    }
    task.zero_tolerance = positive_opt(t, "zero_tolerance", path);
    task.isometry_tolerance = positive_opt(t, "isometry_tolerance", path);
    if (t.contains("expected_dilation")) {
      task.expected_dilation = expression(t["expected_dilation"], path + ".expected_dilation", symbols);
    }
    if (t.contains("expected_mean_curvature")) {
      task.expected_mean_curvature =
          expressions(t["expected_mean_curvature"], path + ".expected_mean_curvature", symbols);
      if (static_cast<int>(task.expected_mean_curvature.size()) != domain->dim()) {
        fail(ErrorCode::DimensionMismatch, path + ".expected_mean_curvature", "wrong dimension");
      }
    }
    if (t.contains("field")) {
      VectorField f{expressions(t["field"], path + ".field", symbols)};
      if (static_cast<int>(f.components.size()) != domain->dim()) {
        fail(ErrorCode::DimensionMismatch, path + ".field", "wrong dimension");
      }
      task.field = std::move(f);
    }
    if (t.contains("coefficient")) task.coefficient = number(t["coefficient"], path + ".coefficient");
    if (t.contains("scalar")) task.scalar = expression(t["scalar"], path + ".scalar", symbols);

    if ((task.kind == "soliton" || task.kind == "bochner") && !task.field) {
      fail(ErrorCode::SpecSemantic, path, "'" + task.kind + "' needs 'field'");
    }
    if (task.kind == "split_operators" && !task.scalar) {
      fail(ErrorCode::SpecSemantic, path, "'split_operators' needs 'scalar'");
    }
    spec_.tasks.push_back(std::move(task));
  }

  std::string origin_;
  RunSpec spec_;
  std::set<std::string> names_;
  std::set<std::string> task_ids_;
};

constexpr std::string_view kCatalog = R"json({
  "manifolds": [
    {"name": "euclidean2", "coordinates": ["x", "y"], "diagonal": [1, 1],
     "box": [[-2, 2], [-2, 2]]},
    {"name": "euclidean3", "coordinates": ["x", "y", "z"], "diagonal": [1, 1, 1],
     "box": [[-2, 2], [-2, 2], [-2, 2]]},
    {"name": "halfline", "coordinates": ["r"], "diagonal": [1], "constraints": ["r"],
     "box": [[0.5, 3]]},
    {"name": "circle", "coordinates": ["theta"], "diagonal": [1], "box": [[-3, 3]]},
    {"name": "radial", "coordinates": ["s"], "diagonal": [1], "constraints": ["s"]},
    {"name": "sphere", "coordinates": ["theta", "phi"], "diagonal": [1, "sin(theta)^2"],
     "constraints": ["sin(theta)"], "box": [[0.3, 2.8], [-3, 3]]},
    {"name": "hyperbolic", "coordinates": ["x", "y"], "diagonal": ["1/y^2", "1/y^2"],
     "constraints": ["y"], "box": [[-2, 2], [0.5, 3]]}
  ],
  "warped_products": [
    {"name": "polar", "base": "halfline", "fiber": "circle", "warp": "r"}
  ],
  "maps": [
    {"name": "polar_projection", "source": "polar", "target": "radial", "components": ["r"]}
  ]
})json";

}  // namespace

RunSpec load_spec_text(std::string_view text, const std::string& origin) {
  return Loader(origin).load(text);
}

RunSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileError, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::FileError, "cannot read '" + path.string() + "'");
  return load_spec_text(buf.str(), path.string());
}

std::string_view catalog_text() { return kCatalog; }

const RunSpec& catalog() {
  static const RunSpec spec = load_spec_text(kCatalog, "<catalog>");
  return spec;
}

}  // namespace warpgeo
