#include "warpgeo/runner.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "warpgeo/soliton.hpp"

namespace warpgeo {

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_point(const Vector& coords) {
  std::string out;
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    if (i) out += ' ';
    out += format_number(coords[i]);
  }
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::string rows_csv(const std::vector<ReportRow>& rows) {
  std::string out = "task,quantity,point,value,tolerance,pass\n";
  for (const ReportRow& r : rows) {
    out += csv_field(r.task) + ',' + csv_field(r.quantity) + ',' + r.point + ',' + format_number(r.value) + ',';
    if (r.tolerance) out += format_number(*r.tolerance);
    out += ',';
    if (r.pass) out += *r.pass ? "true" : "false";
    out += '\n';
  }
  return out;
}

std::string trace_csv(const ChartedManifold& m, const GeodesicTrace& trace) {
  std::string out = "t";
  for (const std::string& c : m.coordinates()) out += ',' + c;
  for (const std::string& c : m.coordinates()) out += ",v_" + c;
  out += ",energy,clairaut\n";
  for (std::size_t i = 0; i < trace.states.size(); ++i) {
    const GeodesicState& s = trace.states[i];
    out += format_number(s.t);
    for (Eigen::Index k = 0; k < s.position.coords.size(); ++k) out += ',' + format_number(s.position.coords[k]);
    for (Eigen::Index k = 0; k < s.velocity.size(); ++k) out += ',' + format_number(s.velocity[k]);
    out += ',' + format_number(trace.energy[i]) + ',';
    if (trace.clairaut) out += format_number((*trace.clairaut)[i]);
    out += '\n';
  }
  return out;
}

namespace {

class TaskRunner {
 public:
  TaskRunner(const RunSpec& spec, RunResult& result) : spec_(spec), result_(result) {}

  void run(const TaskSpec& task) {
    task_ = &task;
    text_ << "== " << task.id << " (" << task.kind << " on " << task.subject << ")\n";
    using Handler = void (TaskRunner::*)(const Point&);
    static const std::vector<std::pair<std::string, Handler>> point_handlers = {
        {"christoffel", &TaskRunner::christoffel},
        {"curvature", &TaskRunner::curvature},
        {"conformality", &TaskRunner::conformality},
        {"umbilicity", &TaskRunner::umbilicity},
        {"totally_geodesic", &TaskRunner::totally_geodesic},
        {"clairaut", &TaskRunner::clairaut},
        {"dilation_equality", &TaskRunner::dilation_equality},
        {"conformal_identities", &TaskRunner::conformal_identities},
        {"ricci_decomposition", &TaskRunner::ricci_decomposition},
        {"soliton", &TaskRunner::soliton},
        {"bochner", &TaskRunner::bochner},
        {"split_operators", &TaskRunner::split_operators},
    };
    if (task.kind == "geodesic") {
      point_ = format_point(task.points.front().coords);
      guarded([&] { geodesic(); });
    } else {
      for (const auto& [kind, handler] : point_handlers) {
        if (kind != task.kind) continue;
        for (const Point& p : task.points) {
          point_ = format_point(p.coords);
          guarded([&] { (this->*handler)(p); });
        }
      }
    }
    text_ << '\n';
  }

  std::string text() const { return text_.str(); }

 private:
  void guarded(const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      failure(std::string(error_code_name(e.code())), e.what());
    } catch (const std::exception& e) {
      failure("exception", e.what());
    }
  }

  void failure(const std::string& code, const std::string& message) {
    ReportRow row{task_->id, "error " + code, point_, std::numeric_limits<double>::quiet_NaN(),
                  task_->tolerance.value_or(0.0), false};
    result_.rows.push_back(row);
    ++result_.failed;
    text_ << "  [" << point_ << "] FAILED " << code << ": " << message << '\n';
  }

  // Residual-type row: passes when |value| <= tolerance.
  void check(const std::string& quantity, double value, std::optional<double> tolerance) {
    ReportRow row{task_->id, quantity, point_, value, tolerance, std::nullopt};
    if (tolerance) {
      row.pass = std::abs(value) <= *tolerance;
      if (!*row.pass) ++result_.failed;
    }
    text_ << "  [" << point_ << "] " << quantity << " = " << format_number(value);
    if (tolerance) text_ << "  (tol " << format_number(*tolerance) << (*row.pass ? ", pass)" : ", FAIL)");
    text_ << '\n';
    result_.rows.push_back(std::move(row));
  }

  void info(const std::string& quantity, double value) { check(quantity, value, std::nullopt); }

  void note(const std::string& line) { text_ << "    " << line << '\n'; }

  const ChartedManifold& manifold() const { return spec_.manifold(task_->subject); }
  const SmoothMap& map() const { return spec_.smooth_map(task_->subject); }
  const ProductMap& product() const { return spec_.product_map(task_->subject); }

  static std::string symbol_name(int k, int i, int j) {
    return "Gamma^" + std::to_string(k + 1) + "_" + std::to_string(i + 1) + std::to_string(j + 1);
  }

  void christoffel(const Point& p) {
    const ChartedManifold& m = manifold();
    const Tensor3 gamma = christoffel_at(m, p);
    const int n = m.dim();
    const Bindings b = m.bindings(p);
    std::vector<bool> listed(static_cast<std::size_t>(n * n * n), false);
    const auto mark = [&](int k, int i, int j) {
      listed[static_cast<std::size_t>((k * n + i) * n + j)] = true;
      listed[static_cast<std::size_t>((k * n + j) * n + i)] = true;
    };
    if (p.coords == task_->points.front().coords) {
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
          for (int j = i; j < n; ++j)
            if (std::abs(gamma(k, i, j)) > 1e-14) note(symbol_name(k, i, j) + " = " + format_number(gamma(k, i, j)));
    }
    for (const ExpectedSymbol& s : task_->expected_symbols) {
      const double want = evaluate(s.value, b);
      check(symbol_name(s.k - 1, s.i - 1, s.j - 1) + " error", gamma(s.k - 1, s.i - 1, s.j - 1) - want,
            task_->tolerance);
      mark(s.k - 1, s.i - 1, s.j - 1);
    }
    if (!task_->expected_symbols.empty()) {
      double others = 0.0;
      for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (!listed[static_cast<std::size_t>((k * n + i) * n + j)]) others = std::max(others, std::abs(gamma(k, i, j)));
      check("max other |Gamma|", others, task_->zero_tolerance ? task_->zero_tolerance : task_->tolerance);
    }
  }

  void curvature(const Point& p) {
    const ChartedManifold& m = manifold();
    const CurvatureBundle c = curvature_at(m, p);
    const TensorIdentityResiduals r = tensor_identity_residuals(c);
    check("christoffel symmetry", r.christoffel_symmetry, task_->tolerance);
    check("riemann antisymmetry first pair", r.riemann_first_pair, task_->tolerance);
    check("riemann antisymmetry second pair", r.riemann_second_pair, task_->tolerance);
    check("riemann pair swap", r.riemann_pair_swap, task_->tolerance);
    check("first bianchi", r.first_bianchi, task_->tolerance);
    check("ricci symmetry", r.ricci_symmetry, task_->tolerance);
    check("metric compatibility", metric_compatibility_residual_at(m, p), task_->tolerance);
    info("scalar curvature", c.scalar);
  }

  void conformality(const Point& p) {
    const ConformalityReport r = conformality_report_at(map(), p);
    info("dilation", r.dilation());
    check("conformal defect", r.conformal_defect, task_->tolerance);
    if (task_->isometry_tolerance) check("isometry defect", r.isometry_defect, task_->isometry_tolerance);
    else info("isometry defect", r.isometry_defect);
    if (task_->expected_dilation) {
      const double want = evaluate(*task_->expected_dilation, map().source().bindings(p));
      check("dilation error", r.dilation() - want, task_->tolerance);
    }
  }

  void umbilicity(const Point& p) {
    const FiberGeometry fg = fiber_geometry_at(map(), p);
    check("umbilicity residual", fg.umbilicity_residual, task_->tolerance);
    note("mean curvature = (" + format_point(fg.mean_curvature) + ")");
    if (!task_->expected_mean_curvature.empty()) {
      const Bindings b = map().source().bindings(p);
      double err = 0.0;
      for (std::size_t i = 0; i < task_->expected_mean_curvature.size(); ++i) {
        err = std::max(err, std::abs(fg.mean_curvature[static_cast<Eigen::Index>(i)] -
                                     evaluate(task_->expected_mean_curvature[i], b)));
      }
      check("mean curvature error", err, task_->tolerance);
    }
  }

  void totally_geodesic(const Point& p) {
    const ONeillTensors t = oneill_tensors_at(map(), p);
    const Matrix g = metric_at(map().source(), p).g;
    double worst = 0.0;
    for (const Vector& u : t.split.vertical_basis) {
      for (const Vector& v : t.split.vertical_basis) {
        const Vector w = t.T_apply(u, v);
        worst = std::max(worst, std::sqrt(std::max(0.0, pair(g, w, w))));
      }
    }
    check("max |T| on vertical pairs", worst, task_->tolerance);
  }

  void clairaut(const Point& p) {
    const ClairautCheck c = clairaut_check_at(product(), p);
    check("clairaut residual", c.residual, task_->tolerance);
    info("first factor umbilicity", c.first_umbilicity);
    info("second factor max |T2|", c.second_geodesic);
    info("fiber mean curvature + grad ln f", c.fiber_mean_curvature);
    info("full mean curvature + grad ln f", c.full_mean_curvature);
    note("whole-map mean curvature = (" + format_point(c.mean_curvature) + ")");
  }

  void dilation_equality(const Point& p) {
    const ConformalIdentities c = conformal_identities_at(product(), p);
    info("dilation first", std::sqrt(c.dilation_squared_first));
    info("dilation second", std::sqrt(c.dilation_squared_second));
    check("dilation mismatch", c.dilation_mismatch, task_->tolerance);
  }

  void conformal_identities(const Point& p) {
    const ConformalIdentities c = conformal_identities_at(product(), p);
    info("hilbert-schmidt norm squared", c.hilbert_schmidt);
    check("rank identity residual", c.rank_identity_residual, task_->tolerance);
    check("A formula residual", c.a_formula_residual, task_->tolerance);
    if (c.scalar_first_residual) check("scalar identity first", *c.scalar_first_residual, task_->tolerance);
    if (c.scalar_second_residual) check("scalar identity second", *c.scalar_second_residual, task_->tolerance);
    if (!c.scalar_note.empty()) note(c.scalar_note);
  }

  void ricci_decomposition(const Point& p) {
    const RicciDecomposition r = ricci_decomposition_at(product(), p);
    check("mixed ricci max", r.mixed_max, task_->tolerance);
    for (const RicciItem& item : r.items) {
      info("item " + item.item + " lhs", item.lhs);
      info("item " + item.item + " computed rhs", item.rhs_computed);
      for (const RicciTerm& t : item.terms) {
        note(item.item + ": " + t.name + " = " + format_number(t.value) + (t.included ? "" : " (not summed)"));
      }
      for (const std::string& u : item.uncomputed) note(item.item + ": uncomputed " + u);
    }
  }

  void soliton(const Point& p) {
    const SolitonResidual r = soliton_residual_at(manifold(), {*task_->field, task_->coefficient}, p);
    check("soliton residual", r.max_norm, task_->tolerance);
    info("best fit coefficient", r.best_fit_coefficient);
    note(std::string("classification: ") + std::string(soliton_kind_name(r.classification)));
  }

  void bochner(const Point& p) {
    const BochnerLhs b = bochner_lhs_at(manifold(), *task_->field, p);
    check("bochner lhs", b.value, task_->tolerance);
    note("Div(L_V g) = (" + format_point(b.divergence) + ")");
  }

  void split_operators(const Point& p) {
    const SplitOperators s = split_operators_at(map(), *task_->scalar, p, task_->field);
    info("div vertical", s.div_vertical);
    info("div horizontal", s.div_horizontal);
    info("laplacian vertical", s.laplacian_vertical);
    info("laplacian horizontal", s.laplacian_horizontal);
    check("divergence split defect", s.div_vertical + s.div_horizontal - s.divergence, task_->tolerance);
    check("laplacian split defect", s.laplacian_vertical + s.laplacian_horizontal - s.laplacian,
          task_->tolerance);
  }

  void geodesic() {
    const ChartedManifold& m = manifold();
    GeodesicTrace trace =
        integrate_geodesic(m, {0.0, task_->points.front(), task_->velocity}, task_->t_max, task_->step);
    double energy_drift = 0.0;
    for (double e : trace.energy) energy_drift = std::max(energy_drift, std::abs(e - trace.energy.front()));
    info("states", static_cast<double>(trace.states.size()));
    info("exited domain", trace.exited_domain ? 1.0 : 0.0);
    if (trace.exited_domain) note("stopped: " + trace.stop_reason);
    check("energy drift", energy_drift, task_->tolerance);
    if (task_->map) {
      const SmoothMap& phi = spec_.smooth_map(*task_->map);
      const ClairautSeries series = clairaut_invariant(trace, phi, *task_->r_field);
      trace.clairaut = series.values;
      check("clairaut drift", series.drift, task_->tolerance);
      double vmax = 0.0, hmax = 0.0;
      for (const CurveState& s : accelerations_from_trace(trace)) {
        const GeodesicResiduals r = geodesic_residuals_at(phi, s);
        vmax = std::max(vmax, r.vertical_norm);
        hmax = std::max(hmax, r.horizontal_norm);
      }
      check("max vertical residual", vmax, task_->residual_tolerance);
      check("max horizontal residual", hmax, task_->residual_tolerance);
    }
    result_.traces.push_back({task_->id + ".csv", trace_csv(m, trace)});
    note("trace written to " + task_->id + ".csv");
  }

  const RunSpec& spec_;
  RunResult& result_;
  const TaskSpec* task_ = nullptr;
  std::string point_;
  std::ostringstream text_;
};

}  // namespace

RunResult execute(const RunSpec& spec) {
  RunResult result;
  TaskRunner runner(spec, result);
  for (const TaskSpec& task : spec.tasks) runner.run(task);
  std::ostringstream report;
  report << "warpgeo report\n";
  report << "seed " << spec.seed << ", " << spec.tasks.size() << " tasks, " << result.rows.size()
         << " rows, " << result.failed << " failed\n\n";
  report << runner.text();
  result.report = report.str();
  return result;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::FileError, "cannot write '" + path.string() + "'");
  out << content;
  out.flush();
  if (!out) throw Error(ErrorCode::FileError, "write to '" + path.string() + "' failed");
}

}  // namespace

void write_outputs(const RunResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::FileError, "cannot create '" + dir.string() + "': " + ec.message());
  write_file(dir / "report.txt", result.report);
  write_file(dir / "report.csv", rows_csv(result.rows));
  for (const TraceFile& t : result.traces) write_file(dir / t.file_name, t.csv);
}

}  // namespace warpgeo
