#pragma once

#include "fieldflow/multi_index.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace ff {

// One bounded end of an axis. side = 0: lower end, side = 1: upper end.
struct Face {
  int axis = 0;
  int side = 0;
};

inline int face_key(const Face& f) { return f.axis * 2 + f.side; }
inline int side_sign(const Face& f) { return f.side ? 1 : -1; }

// Weight of the outward-oriented boundary volume element relative to the
// coordinate face volume (tangential axes wedged in ascending order):
// mu_bd = o_face * sqrt(det g_bd) * dx^{tangential}.
inline int face_orientation(const Face& f) {
  return (f.axis % 2 == 0) ? side_sign(f) : -side_sign(f);
}

std::string face_name(const Face& f);  // e.g. "x1lo", "x2hi" (1-based axis)
bool parse_face_name(const std::string& s, int m, Face& out);

// Uniform rectangular grid with per-axis periodic or bounded topology.
// Nodes are vertex-centered; bounded axes include both end nodes.
struct RectGrid {
  int m = 1;
  std::array<int, 3> N{1, 1, 1};
  std::array<double, 3> h{1, 1, 1};
  std::array<bool, 3> periodic{false, false, false};
  std::array<double, 3> origin{0, 0, 0};

  long total() const;
  long stride(int axis) const;
  long pack(const std::array<int, 3>& c) const;
  std::array<int, 3> unpack(long node) const;
  std::array<double, 3> coords(long node) const;
  double extent(int axis) const;  // domain length along one axis
  double cell_volume() const;     // product of spacings
  bool on_face(long node, const Face& f) const;

  std::vector<Face> boundary_faces() const;
  std::vector<int> tangential_axes(const Face& f) const;
  // The (m-1)-dimensional grid of a face (m = 0 grid for 1D volumes).
  RectGrid face_grid(const Face& f) const;
  // Volume node under a face node.
  long face_to_volume(const Face& f, long fnode) const;

  // Trapezoid quadrature weight (product over bounded axes: 1/2 at end nodes).
  double quad_weight(long node) const;

  bool same_layout(const RectGrid& o) const;
};

RectGrid build_grid(int m, std::array<int, 3> N, std::array<double, 3> h,
                    std::array<bool, 3> periodic,
                    std::array<double, 3> origin = {0, 0, 0});

// d/dx_axis of `comps` interleaved nodal values: second-order centered stencil
// inside, one-sided (-3, 4, -1)/(2h) at bounded ends, wrap-around on periodic
// axes. `in` and `out` hold total()*comps doubles and must not alias.
void partial_derivative(const RectGrid& g, int axis, const double* in,
                        double* out, int comps);

// Induced metric data on one bounded face: the tangential submatrix of g at
// face nodes, its inverse and area factor, in local tangential numbering.
struct FaceMetric {
  Face face;
  RectGrid fgrid;
  std::vector<double> gb, gbinv;  // (m-1) x (m-1) per face node, row major
  std::vector<double> sqrtgb;     // sqrt(det gb); 1 on 0-dimensional faces
  const double* gb_at(long fnode) const;
  const double* gbinv_at(long fnode) const;
  // det of the gbinv minor with rows I, cols J (tangential multi-indices)
  double inv_minor(long fnode, Mask I, Mask J) const;
};

// Riemannian metric sampled at grid nodes, with inverse, volume factor, and
// induced data on every bounded face.
struct MetricField {
  RectGrid grid;
  std::vector<double> g, ginv;  // m x m per node, row major
  std::vector<double> sqrtg;
  std::vector<FaceMetric> faces;

  int dim() const { return grid.m; }
  const double* g_at(long node) const;
  const double* ginv_at(long node) const;
  const FaceMetric& face_metric(const Face& f) const;
  // det of the ginv minor with rows I, cols J: the degree-k inner product
  // factor g^{IJ}.
  double inv_minor(long node, Mask I, Mask J) const;
  // det of the g minor with rows I, cols J (lowering degree-k indices).
  double minor(long node, Mask I, Mask J) const;
  // Components n^i of the unit outward normal at a face node.
  std::array<double, 3> outward_normal(const Face& f, long fnode) const;
  // Largest wave speed sqrt(eigenvalue of ginv) over all nodes.
  double max_wave_speed() const;
};

using MetricFn =
    std::function<void(const std::array<double, 3>& x, double* g_out)>;

// Samples fn at every node; validates symmetry and positive definiteness.
MetricField metric_field(const RectGrid& grid, const MetricFn& fn);
MetricField metric_identity(const RectGrid& grid);

}  // namespace ff
