#include "warpgeo/soliton.hpp"

#include <algorithm>
#include <cmath>

namespace warpgeo {

std::string_view soliton_kind_name(SolitonKind kind) {
  switch (kind) {
    case SolitonKind::Expanding: return "expanding";
    case SolitonKind::Steady: return "steady";
    case SolitonKind::Shrinking: return "shrinking";
  }
  return "unknown";
}

SolitonKind classify_soliton(double coefficient) {
  if (coefficient > 0.0) return SolitonKind::Expanding;
  if (coefficient < 0.0) return SolitonKind::Shrinking;
  return SolitonKind::Steady;
}

SolitonResidual soliton_residual_at(const ChartedManifold& m, const SolitonConfig& cfg,
                                    const Point& p) {
  const CurvatureBundle c = curvature_at(m, p);
  const Matrix lie = lie_derivative_metric_at(m, cfg.potential, p);
  const Matrix core = 0.5 * lie + c.ricci;
  SolitonResidual out;
  out.residual = core + cfg.coefficient * c.metric;
  out.max_norm = out.residual.cwiseAbs().maxCoeff();
  out.classification = classify_soliton(cfg.coefficient);
  out.best_fit_coefficient = -(c.inverse * core).trace() / static_cast<double>(m.dim());
  return out;
}

SplitOperators split_operators_at(const SmoothMap& phi, const Expr& h, const Point& p,
                                  const std::optional<VectorField>& xi) {
  const ChartedManifold& m = phi.source();
  const DistributionSplit split = distribution_split_at(phi, p);
  const Matrix hess = covariant_hessian_at(m, h, p);
  SplitOperators out;
  for (const Vector& e : split.vertical_basis) out.laplacian_vertical += pair(hess, e, e);
  for (const Vector& e : split.horizontal_basis) out.laplacian_horizontal += pair(hess, e, e);
  out.laplacian = laplacian_at(m, h, p);
  if (xi) {
    out.div_vertical = divergence_along_frame(m, *xi, p, split.vertical_basis);
    out.div_horizontal = divergence_along_frame(m, *xi, p, split.horizontal_basis);
    out.divergence = divergence_at(m, *xi, p);
  } else {
    // g(nabla_e grad h, e) = Hess h(e, e)
    out.div_vertical = out.laplacian_vertical;
    out.div_horizontal = out.laplacian_horizontal;
    out.divergence = out.laplacian;
  }
  return out;
}

BochnerLhs bochner_lhs_at(const ChartedManifold& m, const VectorField& v, const Point& p) {
  const int n = m.dim();
  const MetricJet jet = metric_jet_at(m, p, true);
  const std::vector<Jet2> V = field_jets_at(m, v, p);
  const Tensor3 gamma = christoffel_at(m, p);

  // S = L_V g and its partials dS[l](i, j), all exact from the jets.
  Matrix S = Matrix::Zero(n, n);
  std::vector<Matrix> dS(n, Matrix::Zero(n, n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        S(i, j) += V[k].value() * jet.d1[k](i, j) + jet.g(k, j) * V[k].grad(i) +
                   jet.g(i, k) * V[k].grad(j);
        for (int l = 0; l < n; ++l) {
          dS[l](i, j) += V[k].grad(l) * jet.d1[k](i, j) + V[k].value() * jet.d2[l][k](i, j) +
                         jet.d1[l](k, j) * V[k].grad(i) + jet.g(k, j) * V[k].hess(l, i) +
                         jet.d1[l](i, k) * V[k].grad(j) + jet.g(i, k) * V[k].hess(l, j);
        }
      }
    }
  }

  BochnerLhs out;
  out.divergence = Vector::Zero(n);
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < n; ++l) {
        double nabla = dS[l](i, j);
        for (int q = 0; q < n; ++q) nabla -= gamma(q, l, i) * S(q, j) + gamma(q, l, j) * S(i, q);
        s += jet.inverse(i, l) * nabla;
      }
    }
    out.divergence[j] = s;
  }
  for (int j = 0; j < n; ++j) out.value += out.divergence[j] * V[j].value();
  return out;
}

}  // namespace warpgeo
