// warpgeo command-line front end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "warpgeo/geodesic.hpp"
#include "warpgeo/rmap.hpp"
#include "warpgeo/runner.hpp"
#include "warpgeo/spec.hpp"

namespace {

using namespace warpgeo;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitTaskFailure = 2;
constexpr int kExitIo = 3;

int exit_for(const Error& e) {
  return e.code() == ErrorCode::FileError ? kExitIo : kExitValidation;
}

void print_error(const Error& e) {
  std::cerr << "error " << static_cast<int>(e.code()) << " (" << error_code_name(e.code())
            << "): " << e.what() << '\n';
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Names are looked up in the given spec first, then in the built-in catalog.
struct Scope {
  std::optional<RunSpec> spec;

  const ChartedManifold& manifold(const std::string& name) const {
    if (spec && spec->has_manifold(name)) return spec->manifold(name);
    return catalog().manifold(name);
  }
  const SmoothMap& map(const std::string& name) const {
    if (spec && spec->has_map(name)) return spec->smooth_map(name);
    return catalog().smooth_map(name);
  }
};

Scope make_scope(const std::string& spec_path) {
  Scope s;
  if (!spec_path.empty()) s.spec = load_spec(spec_path);
  return s;
}

void print_matrix(const char* title, const Matrix& m) {
  std::cout << title << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) std::cout << "  " << format_point(m.row(i).transpose()) << '\n';
}

int cmd_validate(const std::string& path) {
  const RunSpec spec = load_spec(path);
  std::cout << "ok: " << spec.manifolds.size() << " manifolds, " << spec.warped_products.size()
            << " warped products, " << spec.maps.size() + spec.product_maps.size() << " maps, "
            << spec.tasks.size() << " tasks\n";
  return kExitOk;
}

int cmd_run(const std::string& path, const std::string& out_dir) {
  RunSpec spec;
  try {
    spec = load_spec(path);
  } catch (const Error& e) {
    print_error(e);
    return exit_for(e);
  }
  const RunResult result = execute(spec);
  try {
    write_outputs(result, out_dir);
  } catch (const Error& e) {
    print_error(e);
    return kExitIo;
  }
  std::cout << result.rows.size() << " rows, " << result.failed << " failed; report in " << out_dir
            << '\n';
  return result.exit_code() == 0 ? kExitOk : kExitTaskFailure;
}

struct GeodesicArgs {
  std::string spec;
  std::string manifold;
  std::vector<double> from;
  std::vector<double> velocity;
  double t_max = 1.0;
  double step = 1e-3;
  std::string map;
  std::string r_field;
  std::string out;
};

int cmd_geodesic(const GeodesicArgs& a) {
  const Scope scope = make_scope(a.spec);
  const ChartedManifold& m = scope.manifold(a.manifold);
  GeodesicTrace trace =
      integrate_geodesic(m, {0.0, Point{to_vector(a.from)}, to_vector(a.velocity)}, a.t_max, a.step);
  if (!a.map.empty()) {
    if (a.r_field.empty()) throw Error(ErrorCode::InvalidArgument, "--map needs --r-field");
    const SmoothMap& phi = scope.map(a.map);
    const Expr r = parse(a.r_field, m.symbol_names());
    const ClairautSeries series = clairaut_invariant(trace, phi, r);
    trace.clairaut = series.values;
    std::cerr << "clairaut drift " << format_number(series.drift) << '\n';
  }
  if (trace.exited_domain) std::cerr << "left the chart domain: " << trace.stop_reason << '\n';
  const std::string csv = trace_csv(m, trace);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(a.out, std::ios::binary);
    if (!(out << csv)) throw Error(ErrorCode::FileError, "cannot write '" + a.out + "'");
  }
  return kExitOk;
}

int cmd_curvature(const std::string& spec, const std::string& name, const std::vector<double>& at) {
  const Scope scope = make_scope(spec);
  const ChartedManifold& m = scope.manifold(name);
  const Point p{to_vector(at)};
  m.check_admissible(p);
  const CurvatureBundle c = curvature_at(m, p);
  std::cout << "manifold " << m.name() << " at (" << format_point(p.coords) << ")\n";
  print_matrix("metric", c.metric);
  std::cout << "christoffel symbols (nonzero, i <= j)\n";
  const int n = m.dim();
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j)
        if (std::abs(c.christoffel(k, i, j)) > 1e-14) {
          std::printf("  Gamma^%d_%d%d = %.17g\n", k + 1, i + 1, j + 1, c.christoffel(k, i, j));
        }
  print_matrix("ricci", c.ricci);
  std::cout << "scalar " << format_number(c.scalar) << '\n';
  std::cout << "identity residual " << format_number(tensor_identity_residuals(c).max()) << '\n';
  return kExitOk;
}

int cmd_map_report(const std::string& spec, const std::string& name, const std::vector<double>& at) {
  const Scope scope = make_scope(spec);
  const SmoothMap& phi = scope.map(name);
  const Point p{to_vector(at)};
  phi.source().check_admissible(p);
  const DistributionSplit split = distribution_split_at(phi, p);
  std::cout << "map " << phi.name() << " at (" << format_point(p.coords) << ")\n";
  std::cout << "image (" << format_point(phi.image(p).coords) << ")\n";
  std::cout << "rank " << split.rank << ", singular values (" << format_point(split.singular_values) << ")\n";
  std::cout << "vertical basis\n";
  for (const Vector& v : split.vertical_basis) std::cout << "  " << format_point(v) << '\n';
  std::cout << "horizontal basis\n";
  for (const Vector& v : split.horizontal_basis) std::cout << "  " << format_point(v) << '\n';
  if (split.rank > 0) {
    const ConformalityReport c = conformality_report_at(phi, p);
    std::cout << "dilation " << format_number(c.dilation()) << ", conformal defect "
              << format_number(c.conformal_defect) << ", isometry defect "
              << format_number(c.isometry_defect) << '\n';
  }
  if (!split.vertical_basis.empty()) {
    const FiberGeometry fg = fiber_geometry_at(phi, p);
    std::cout << "fiber mean curvature (" << format_point(fg.mean_curvature) << ")\n";
    std::cout << "umbilicity residual " << format_number(fg.umbilicity_residual) << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"warpgeo: warped products, Riemannian maps and their curvature identities"};
  app.require_subcommand(1);

  std::string spec_path;
  std::string out_dir = "warpgeo-out";
  auto* validate = app.add_subcommand("validate", "Load and check a specification file");
  validate->add_option("spec", spec_path, "Specification file")->required();

  auto* run = app.add_subcommand("run", "Run every task of a specification file");
  run->add_option("spec", spec_path, "Specification file")->required();
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();

  GeodesicArgs g;
  auto* geo = app.add_subcommand("geodesic", "Integrate one geodesic and print its trace as CSV");
  geo->add_option("--spec", g.spec, "Specification file providing the names");
  geo->add_option("--manifold", g.manifold, "Manifold or warped product name")->required();
  geo->add_option("--from", g.from, "Initial coordinates, comma separated")->required()->delimiter(',');
  geo->add_option("--velocity", g.velocity, "Initial velocity, comma separated")->required()->delimiter(',');
  geo->add_option("--t-max", g.t_max, "Integration length")->capture_default_str();
  geo->add_option("--step", g.step, "RK4 step")->capture_default_str();
  geo->add_option("--map", g.map, "Map for the Clairaut column");
  geo->add_option("--r-field", g.r_field, "Positive function r for r sin(theta)");
  geo->add_option("--out", g.out, "CSV file (default: standard output)");

  std::string name;
  std::vector<double> at;
  auto* curv = app.add_subcommand("curvature", "Print metric, Christoffel symbols and Ricci at a point");
  curv->add_option("--spec", spec_path, "Specification file providing the names");
  curv->add_option("--manifold", name, "Manifold or warped product name")->required();
  curv->add_option("--at", at, "Coordinates, comma separated")->required()->delimiter(',');

  auto* mrep = app.add_subcommand("map-report", "Print the vertical/horizontal split and diagnostics of a map");
  mrep->add_option("--spec", spec_path, "Specification file providing the names");
  mrep->add_option("--map", name, "Map name")->required();
  mrep->add_option("--at", at, "Source coordinates, comma separated")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*validate) return cmd_validate(spec_path);
    if (*run) return cmd_run(spec_path, out_dir);
    if (*geo) return cmd_geodesic(g);
    if (*curv) return cmd_curvature(spec_path, name, at);
    if (*mrep) return cmd_map_report(spec_path, name, at);
  } catch (const Error& e) {
    print_error(e);
    return exit_for(e);
  }
  return kExitValidation;
}
