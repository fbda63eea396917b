#pragma once

// Gradient-domain (Poisson) blending of a patch into a destination image.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nnoodkit/errors.hpp"
#include "nnoodkit/ndimage.hpp"
#include "nnoodkit/patchkit.hpp"

namespace nnoodkit {

enum class GuidanceMode { source, mixed, interpolated };

/// Per-axis forward-difference guidance over a patch region. Component a at p holds
/// the target value of u(p + e_a) - u(p); it is zero on the last slice of axis a.
struct GuidanceField {
  std::vector<Grid<double>> components;
  GuidanceMode mode = GuidanceMode::source;
  double alpha = 1.0;
};

struct PoissonSolution {
  /// Solved values over the patch bounding box; non-footprint entries hold dest.
  Grid<double> values;
  double residual_norm = 0.0;
  std::size_t iterations = 0;
};

struct PoissonOptions {
  /// Declared bound on the relative infinity-norm residual.
  double tolerance = 1e-6;
  /// Iterations continue until the residual drops below tolerance * refine.
  double refine = 1e-4;
  /// Iteration cap as a multiple of the number of unknowns.
  std::size_t iteration_factor = 10;
};

inline std::vector<Grid<double>> forward_gradient(const NdImage& patch, std::size_t channel) {
  const Shape& shape = patch.spatial_shape();
  const auto strides = strides_of(shape);
  const auto values = patch.channel(channel);
  std::vector<Grid<double>> grads;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    Grid<double> g(shape, 0.0);
    for (std::size_t flat = 0; flat < g.size(); ++flat) {
      const std::size_t i = (flat / strides[a]) % shape[a];
      if (i + 1 < shape[a])
        g[flat] = static_cast<double>(values[flat + strides[a]]) - static_cast<double>(values[flat]);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

/// Guidance from the source patch (source), the larger-magnitude of source and
/// destination gradients with ties to source (mixed), or the convex combination
/// (1 - alpha) grad(dest) + alpha grad(src) (interpolated).
inline GuidanceField build_guidance(const NdImage& src_patch, const NdImage& dest_patch, GuidanceMode mode,
                                    double alpha = 1.0, std::size_t channel = 0) {
  if (!same_geometry(src_patch, dest_patch))
    throw ShapeError("guidance needs matching source and destination patches, got " +
                     to_string(src_patch.spatial_shape()) + " and " + to_string(dest_patch.spatial_shape()));
  if (channel >= src_patch.channels()) throw InvalidArgument("guidance channel out of range");
  if (mode == GuidanceMode::interpolated && !(alpha >= 0.0 && alpha <= 1.0))
    throw InvalidArgument("interpolation factor must lie in [0, 1]");
  GuidanceField field{forward_gradient(src_patch, channel), mode, alpha};
  if (mode == GuidanceMode::source) return field;
  const auto dest_grad = forward_gradient(dest_patch, channel);
  for (std::size_t a = 0; a < field.components.size(); ++a) {
    auto& g = field.components[a];
    const auto& gd = dest_grad[a];
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (mode == GuidanceMode::mixed) {
        if (std::abs(gd[i]) > std::abs(g[i])) g[i] = gd[i];
      } else {
        g[i] = (1.0 - alpha) * gd[i] + alpha * g[i];
      }
    }
  }
  return field;
}

namespace detail {

// Sparse five/seven-point system over the footprint unknowns.
struct PoissonSystem {
  std::vector<std::size_t> unknown_box;  // box offset of each unknown
  std::vector<double> diag;
  std::vector<std::size_t> nbr_begin;
  std::vector<std::size_t> nbr;  // unknown indices of unknown neighbours
  std::vector<double> rhs;
  double div_norm = 0.0;

  std::size_t size() const { return unknown_box.size(); }

  void multiply(const std::vector<double>& x, std::vector<double>& y) const {
    for (std::size_t i = 0; i < size(); ++i) {
      double acc = diag[i] * x[i];
      for (std::size_t k = nbr_begin[i]; k < nbr_begin[i + 1]; ++k) acc -= x[nbr[k]];
      y[i] = acc;
    }
  }
};

inline double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace detail

/// Solves the discrete Poisson equation lap(u) = div(g) on the footprint pixels whose
/// in-image neighbours all lie inside the footprint. Remaining footprint pixels are
/// Dirichlet data taken from dest; neighbours beyond the image edge are dropped.
inline PoissonSolution solve_poisson(const NdImage& dest, const PatchSpec& spec, const GuidanceField& g,
                                     std::size_t channel = 0, const PoissonOptions& opts = {}) {
  const Shape& image_shape = dest.spatial_shape();
  check_patch(spec, image_shape);
  if (channel >= dest.channels()) throw InvalidArgument("solve channel out of range");
  const std::size_t d = image_shape.size();
  if (g.components.size() != d) throw ShapeError("guidance rank does not match image rank");
  for (const auto& comp : g.components)
    if (comp.shape() != spec.extent) throw ShapeError("guidance shape does not match patch extent");

  const Shape& box = spec.extent;
  const auto box_strides = strides_of(box);
  const auto img_strides = strides_of(image_shape);
  const std::size_t box_px = numel(box);
  const auto dest_values = dest.channel(channel);

  auto dest_at_box = [&](std::size_t box_flat) {
    std::size_t off = 0;
    for (std::size_t a = 0; a < d; ++a)
      off += (spec.origin[a] + (box_flat / box_strides[a]) % box[a]) * img_strides[a];
    return static_cast<double>(dest_values[off]);
  };

  // Classify footprint pixels.
  constexpr std::size_t kNotUnknown = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(box_px, kNotUnknown);
  detail::PoissonSystem sys;
  std::size_t dirichlet = 0;
  for (std::size_t p = 0; p < box_px; ++p) {
    if (!spec.footprint[p]) continue;
    bool interior = true;
    for (std::size_t a = 0; a < d && interior; ++a) {
      const std::size_t i = (p / box_strides[a]) % box[a];
      const std::size_t gi = spec.origin[a] + i;
      if (gi > 0 && (i == 0 || !spec.footprint[p - box_strides[a]])) interior = false;
      if (gi + 1 < image_shape[a] && (i + 1 == box[a] || !spec.footprint[p + box_strides[a]])) interior = false;
    }
    if (interior) {
      index[p] = sys.unknown_box.size();
      sys.unknown_box.push_back(p);
    } else {
      ++dirichlet;
    }
  }

  PoissonSolution sol{Grid<double>(box, 0.0), 0.0, 0};
  for (std::size_t p = 0; p < box_px; ++p) sol.values[p] = dest_at_box(p);
  const std::size_t n = sys.size();
  if (n == 0) return sol;
  if (dirichlet == 0) throw InvalidArgument("patch footprint covers the whole image; no boundary data");

  sys.diag.resize(n);
  sys.rhs.resize(n);
  sys.nbr_begin.push_back(0);
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t p = sys.unknown_box[u];
    double count = 0.0;
    double b = 0.0;
    double div = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t i = (p / box_strides[a]) % box[a];
      const std::size_t gi = spec.origin[a] + i;
      const auto& comp = g.components[a];
      if (gi > 0) {
        const std::size_t q = p - box_strides[a];
        count += 1.0;
        div -= comp[q];
        if (index[q] != kNotUnknown) sys.nbr.push_back(index[q]);
        else b += sol.values[q];
      }
      if (gi + 1 < image_shape[a]) {
        const std::size_t q = p + box_strides[a];
        count += 1.0;
        div += comp[p];
        if (index[q] != kNotUnknown) sys.nbr.push_back(index[q]);
        else b += sol.values[q];
      }
    }
    sys.diag[u] = count;
    sys.rhs[u] = b - div;
    sys.div_norm = std::max(sys.div_norm, std::abs(div));
    sys.nbr_begin.push_back(sys.nbr.size());
  }

  // Jacobi-preconditioned conjugate gradient, warm-started from dest.
  const double scale = std::max(1.0, sys.div_norm);
  std::vector<double> x(n), r(n), z(n), p(n), ap(n);
  for (std::size_t u = 0; u < n; ++u) x[u] = sol.values[sys.unknown_box[u]];
  sys.multiply(x, ap);
  for (std::size_t u = 0; u < n; ++u) r[u] = sys.rhs[u] - ap[u];
  for (std::size_t u = 0; u < n; ++u) z[u] = r[u] / sys.diag[u];
  p = z;
  double rz = 0.0;
  for (std::size_t u = 0; u < n; ++u) rz += r[u] * z[u];

  const double target = opts.tolerance * opts.refine;
  const std::size_t cap = std::max<std::size_t>(1, opts.iteration_factor * n);
  double rel = detail::inf_norm(r) / scale;
  double best = rel;
  std::size_t since_best = 0;
  std::size_t it = 0;
  while (rel > target && it < cap) {
    sys.multiply(p, ap);
    double pap = 0.0;
    for (std::size_t u = 0; u < n; ++u) pap += p[u] * ap[u];
    if (!(pap > 0.0)) break;
    const double step = rz / pap;
    for (std::size_t u = 0; u < n; ++u) {
      x[u] += step * p[u];
      r[u] -= step * ap[u];
    }
    ++it;
    // Refresh the recursive residual periodically to avoid drift.
    if (it % 50 == 0) {
      sys.multiply(x, ap);
      for (std::size_t u = 0; u < n; ++u) r[u] = sys.rhs[u] - ap[u];
    }
    rel = detail::inf_norm(r) / scale;
    if (rel < best) {
      best = rel;
      since_best = 0;
    } else if (++since_best > 100 && rel <= opts.tolerance) {
      break;
    }
    for (std::size_t u = 0; u < n; ++u) z[u] = r[u] / sys.diag[u];
    double rz_next = 0.0;
    for (std::size_t u = 0; u < n; ++u) rz_next += r[u] * z[u];
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t u = 0; u < n; ++u) p[u] = z[u] + beta * p[u];
  }

  sys.multiply(x, ap);
  for (std::size_t u = 0; u < n; ++u) r[u] = sys.rhs[u] - ap[u];
  sol.residual_norm = detail::inf_norm(r) / scale;
  sol.iterations = it;
  if (!(sol.residual_norm <= opts.tolerance))
    throw SolverError("Poisson solve did not converge after " + std::to_string(it) + " iterations",
                      sol.residual_norm);
  for (std::size_t u = 0; u < n; ++u) sol.values[sys.unknown_box[u]] = x[u];
  return sol;
}

/// Blends src_patch into dest over the footprint, channel by channel. Pixels outside
/// the footprint are copied from dest unchanged.
inline NdImage seamless_clone(const NdImage& dest, const NdImage& src_patch, const PatchSpec& spec, GuidanceMode mode,
                              double alpha = 1.0, const PoissonOptions& opts = {}) {
  check_patch(spec, dest.spatial_shape());
  if (src_patch.spatial_shape() != spec.extent || src_patch.channels() != dest.channels())
    throw ShapeError("source patch does not match patch extent");
  const NdImage dest_patch = crop(dest, spec.origin, spec.extent);
  NdImage out = dest;
  for (std::size_t c = 0; c < dest.channels(); ++c) {
    const GuidanceField g = build_guidance(src_patch, dest_patch, mode, alpha, c);
    const PoissonSolution sol = solve_poisson(dest, spec, g, c, opts);
    for_each_footprint_pixel(spec, dest.spatial_shape(),
                             [&](std::size_t dst, std::size_t k) { out(c, dst) = static_cast<float>(sol.values[k]); });
  }
  return out;
}

}  // namespace nnoodkit
