#include "fieldflow/grid.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ff {

std::string face_name(const Face& f) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "x%d%s", f.axis + 1, f.side ? "hi" : "lo");
  return buf;
}

bool parse_face_name(const std::string& s, int m, Face& out) {
  if (s.size() < 4 || s[0] != 'x') return false;
  int axis = s[1] - '1';
  if (axis < 0 || axis >= m) return false;
  std::string tail = s.substr(2);
  if (tail == "lo") out.side = 0;
  else if (tail == "hi") out.side = 1;
  else return false;
  out.axis = axis;
  return true;
}

long RectGrid::total() const {
  long t = 1;
  for (int i = 0; i < m; ++i) t *= N[i];
  return t;
}

long RectGrid::stride(int axis) const {
  long s = 1;
  for (int i = axis + 1; i < m; ++i) s *= N[i];
  return s;
}

long RectGrid::pack(const std::array<int, 3>& c) const {
  long idx = 0;
  for (int i = 0; i < m; ++i) idx = idx * N[i] + c[i];
  return idx;
}

std::array<int, 3> RectGrid::unpack(long node) const {
  std::array<int, 3> c{0, 0, 0};
  for (int i = m - 1; i >= 0; --i) {
    c[i] = (int)(node % N[i]);
    node /= N[i];
  }
  return c;
}

std::array<double, 3> RectGrid::coords(long node) const {
  auto c = unpack(node);
  std::array<double, 3> x{0, 0, 0};
  for (int i = 0; i < m; ++i) x[i] = origin[i] + c[i] * h[i];
  return x;
}

double RectGrid::extent(int axis) const {
  return periodic[axis] ? N[axis] * h[axis] : (N[axis] - 1) * h[axis];
}

double RectGrid::cell_volume() const {
  double v = 1;
  for (int i = 0; i < m; ++i) v *= h[i];
  return v;
}

bool RectGrid::on_face(long node, const Face& f) const {
  int c = unpack(node)[f.axis];
  return f.side ? (c == N[f.axis] - 1) : (c == 0);
}

std::vector<Face> RectGrid::boundary_faces() const {
  std::vector<Face> out;
  for (int i = 0; i < m; ++i)
    if (!periodic[i]) {
      out.push_back({i, 0});
      out.push_back({i, 1});
    }
  return out;
}

std::vector<int> RectGrid::tangential_axes(const Face& f) const {
  std::vector<int> out;
  for (int i = 0; i < m; ++i)
    if (i != f.axis) out.push_back(i);
  return out;
}

RectGrid RectGrid::face_grid(const Face& f) const {
  RectGrid fg;
  fg.m = m - 1;
  int j = 0;
  for (int i = 0; i < m; ++i) {
    if (i == f.axis) continue;
    fg.N[j] = N[i];
    fg.h[j] = h[i];
    fg.periodic[j] = periodic[i];
    fg.origin[j] = origin[i];
    ++j;
  }
  return fg;
}

long RectGrid::face_to_volume(const Face& f, long fnode) const {
  RectGrid fg = face_grid(f);
  auto fc = fg.unpack(fnode);
  std::array<int, 3> c{0, 0, 0};
  int j = 0;
  for (int i = 0; i < m; ++i) {
    if (i == f.axis) c[i] = f.side ? N[i] - 1 : 0;
    else c[i] = fc[j++];
  }
  return pack(c);
}

double RectGrid::quad_weight(long node) const {
  auto c = unpack(node);
  double w = 1;
  for (int i = 0; i < m; ++i)
    if (!periodic[i] && (c[i] == 0 || c[i] == N[i] - 1)) w *= 0.5;
  return w;
}

bool RectGrid::same_layout(const RectGrid& o) const {
  if (m != o.m) return false;
  for (int i = 0; i < m; ++i)
    if (N[i] != o.N[i] || h[i] != o.h[i] || periodic[i] != o.periodic[i])
      return false;
  return true;
}

RectGrid build_grid(int m, std::array<int, 3> N, std::array<double, 3> h,
                    std::array<bool, 3> periodic, std::array<double, 3> origin) {
  if (m < 1 || m > 3) throw std::invalid_argument("grid: dimension must be 1..3");
  for (int i = 0; i < m; ++i) {
    if (N[i] < (periodic[i] ? 3 : 4))
      throw std::invalid_argument("grid: too few nodes for second-order stencils");
    if (h[i] <= 0) throw std::invalid_argument("grid: spacing must be positive");
  }
  RectGrid g;
  g.m = m;
  g.N = N;
  g.h = h;
  g.periodic = periodic;
  g.origin = origin;
  return g;
}

void partial_derivative(const RectGrid& g, int axis, const double* in,
                        double* out, int comps) {
  const long n_axis = g.N[axis];
  const long stride = g.stride(axis) * comps;
  const double inv2h = 1.0 / (2.0 * g.h[axis]);
  const long total = g.total();
  const bool wrap = g.periodic[axis];

  // Iterate over lines along `axis`: decompose node index as
  // node = outer * N[axis] * inner_count + line_pos * inner_count + inner.
  const long inner_count = g.stride(axis);
  const long outer_count = total / (n_axis * inner_count);

  for (long outer = 0; outer < outer_count; ++outer) {
    const long base_node = outer * n_axis * inner_count;
    for (long inner = 0; inner < inner_count; ++inner) {
      const double* src = in + (base_node + inner) * comps;
      double* dst = out + (base_node + inner) * comps;
      for (int c = 0; c < comps; ++c) {
        for (long p = 0; p < n_axis; ++p) {
          const long at = p * stride + c;
          double d;
          if (wrap) {
            const long up = ((p + 1) % n_axis) * stride + c;
            const long dn = ((p + n_axis - 1) % n_axis) * stride + c;
            d = (src[up] - src[dn]) * inv2h;
          } else if (p == 0) {
            d = (-3.0 * src[at] + 4.0 * src[stride + c] - src[2 * stride + c]) *
                inv2h;
          } else if (p == n_axis - 1) {
            d = (3.0 * src[at] - 4.0 * src[at - stride] +
                 src[at - 2 * stride]) *
                inv2h;
          } else {
            d = (src[at + stride] - src[at - stride]) * inv2h;
          }
          dst[p * stride + c] = d;
        }
      }
    }
  }
}

namespace {

double det_m(const double* a, int m) {
  if (m == 0) return 1;
  if (m == 1) return a[0];
  if (m == 2) return a[0] * a[3] - a[1] * a[2];
  return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
         a[2] * (a[3] * a[7] - a[4] * a[6]);
}

void invert_m(const double* a, int m, double* out) {
  double d = det_m(a, m);
  if (m == 0) return;
  if (m == 1) {
    out[0] = 1.0 / a[0];
    return;
  }
  if (m == 2) {
    out[0] = a[3] / d;
    out[1] = -a[1] / d;
    out[2] = -a[2] / d;
    out[3] = a[0] / d;
    return;
  }
  out[0] = (a[4] * a[8] - a[5] * a[7]) / d;
  out[1] = (a[2] * a[7] - a[1] * a[8]) / d;
  out[2] = (a[1] * a[5] - a[2] * a[4]) / d;
  out[3] = (a[5] * a[6] - a[3] * a[8]) / d;
  out[4] = (a[0] * a[8] - a[2] * a[6]) / d;
  out[5] = (a[2] * a[3] - a[0] * a[5]) / d;
  out[6] = (a[3] * a[7] - a[4] * a[6]) / d;
  out[7] = (a[1] * a[6] - a[0] * a[7]) / d;
  out[8] = (a[0] * a[4] - a[1] * a[3]) / d;
}

// det of the minor of the m x m matrix `a` with rows I and cols J.
double minor_det(const double* a, int m, Mask I, Mask J) {
  int ri[3], ci[3], nr, nc;
  axes_of(I, ri, nr);
  axes_of(J, ci, nc);
  if (nr != nc) throw std::invalid_argument("minor: rank mismatch");
  if (nr == 0) return 1;
  double sub[9];
  for (int r = 0; r < nr; ++r)
    for (int c = 0; c < nc; ++c) sub[r * nr + c] = a[ri[r] * m + ci[c]];
  return det_m(sub, nr);
}

bool spd_check(const double* a, int m) {
  // Symmetry plus positive leading minors (Sylvester).
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (std::abs(a[i * m + j] - a[j * m + i]) >
          1e-12 * (1 + std::abs(a[i * m + j])))
        return false;
  double lead = a[0];
  if (lead <= 0) return false;
  if (m >= 2) {
    double d2 = a[0] * a[m + 1] - a[1] * a[m];
    if (d2 <= 0) return false;
  }
  if (m >= 3 && det_m(a, 3) <= 0) return false;
  return true;
}

}  // namespace

const double* FaceMetric::gb_at(long fnode) const {
  int mb = fgrid.m;
  return &gb[fnode * mb * mb];
}

const double* FaceMetric::gbinv_at(long fnode) const {
  int mb = fgrid.m;
  return &gbinv[fnode * mb * mb];
}

double FaceMetric::inv_minor(long fnode, Mask I, Mask J) const {
  return minor_det(gbinv_at(fnode), fgrid.m, I, J);
}

const double* MetricField::g_at(long node) const {
  return &g[node * grid.m * grid.m];
}

const double* MetricField::ginv_at(long node) const {
  return &ginv[node * grid.m * grid.m];
}

const FaceMetric& MetricField::face_metric(const Face& f) const {
  for (const auto& fm : faces)
    if (fm.face.axis == f.axis && fm.face.side == f.side) return fm;
  throw std::invalid_argument("face_metric: no such bounded face");
}

double MetricField::inv_minor(long node, Mask I, Mask J) const {
  return minor_det(ginv_at(node), grid.m, I, J);
}

double MetricField::minor(long node, Mask I, Mask J) const {
  return minor_det(g_at(node), grid.m, I, J);
}

std::array<double, 3> MetricField::outward_normal(const Face& f,
                                                  long fnode) const {
  long node = grid.face_to_volume(f, fnode);
  const double* gi = ginv_at(node);
  int d = f.axis, m = grid.m;
  double gdd = gi[d * m + d];
  double s = side_sign(f) / std::sqrt(gdd);
  std::array<double, 3> n{0, 0, 0};
  for (int i = 0; i < m; ++i) n[i] = s * gi[i * m + d];
  return n;
}

double MetricField::max_wave_speed() const {
  // Largest eigenvalue of ginv: bounded by row-sum norm; for the diagnostic
  // guard use the exact value via the characteristic polynomial for m <= 2 and
  // a few Jacobi sweeps for m = 3.
  int m = grid.m;
  double cmax = 0;
  for (long node = 0; node < grid.total(); ++node) {
    const double* a = ginv_at(node);
    double lam;
    if (m == 1) {
      lam = a[0];
    } else if (m == 2) {
      double tr = a[0] + a[3], det = a[0] * a[3] - a[1] * a[2];
      double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
      lam = tr / 2 + disc;
    } else {
      double b[9];
      for (int i = 0; i < 9; ++i) b[i] = a[i];
      for (int sweep = 0; sweep < 12; ++sweep) {
        for (int p = 0; p < 3; ++p)
          for (int q = p + 1; q < 3; ++q) {
            double apq = b[p * 3 + q];
            if (std::abs(apq) < 1e-14) continue;
            double theta = 0.5 * std::atan2(2 * apq, b[q * 3 + q] - b[p * 3 + p]);
            double c = std::cos(theta), s = std::sin(theta);
            for (int i = 0; i < 3; ++i) {
              double bip = b[i * 3 + p], biq = b[i * 3 + q];
              b[i * 3 + p] = c * bip - s * biq;
              b[i * 3 + q] = s * bip + c * biq;
            }
            for (int i = 0; i < 3; ++i) {
              double bpi = b[p * 3 + i], bqi = b[q * 3 + i];
              b[p * 3 + i] = c * bpi - s * bqi;
              b[q * 3 + i] = s * bpi + c * bqi;
            }
          }
      }
      lam = std::max(b[0], std::max(b[4], b[8]));
    }
    cmax = std::max(cmax, std::sqrt(lam));
  }
  return cmax;
}

MetricField metric_field(const RectGrid& grid, const MetricFn& fn) {
  MetricField mf;
  mf.grid = grid;
  int m = grid.m;
  long total = grid.total();
  mf.g.resize(total * m * m);
  mf.ginv.resize(total * m * m);
  mf.sqrtg.resize(total);
  for (long node = 0; node < total; ++node) {
    double* gn = &mf.g[node * m * m];
    fn(grid.coords(node), gn);
    if (!spd_check(gn, m)) {
      auto x = grid.coords(node);
      char buf[128];
      std::snprintf(buf, sizeof buf,
                    "metric not symmetric positive definite at (%g, %g, %g)",
                    x[0], x[1], x[2]);
      throw std::invalid_argument(buf);
    }
    invert_m(gn, m, &mf.ginv[node * m * m]);
    mf.sqrtg[node] = std::sqrt(det_m(gn, m));
  }
  for (const Face& f : grid.boundary_faces()) {
    FaceMetric fm;
    fm.face = f;
    fm.fgrid = grid.face_grid(f);
    int mb = fm.fgrid.m;
    long ftotal = fm.fgrid.total();
    fm.gb.resize(ftotal * mb * mb);
    fm.gbinv.resize(ftotal * mb * mb);
    fm.sqrtgb.resize(ftotal);
    auto tang = grid.tangential_axes(f);
    for (long fnode = 0; fnode < ftotal; ++fnode) {
      long node = grid.face_to_volume(f, fnode);
      const double* gn = mf.g_at(node);
      double* gb = &fm.gb[fnode * mb * mb];
      for (int r = 0; r < mb; ++r)
        for (int c = 0; c < mb; ++c) gb[r * mb + c] = gn[tang[r] * m + tang[c]];
      invert_m(gb, mb, &fm.gbinv[fnode * mb * mb]);
      fm.sqrtgb[fnode] = std::sqrt(det_m(gb, mb));
    }
    mf.faces.push_back(std::move(fm));
  }
  return mf;
}

MetricField metric_identity(const RectGrid& grid) {
  int m = grid.m;
  return metric_field(grid, [m](const std::array<double, 3>&, double* g) {
    for (int i = 0; i < m * m; ++i) g[i] = 0;
    for (int i = 0; i < m; ++i) g[i * m + i] = 1;
  });
}

}  // namespace ff
