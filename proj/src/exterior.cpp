#include "fieldflow/exterior.hpp"

#include <cmath>
#include <stdexcept>

namespace ff {

namespace {

// Dense inverse for small fiber metrics (n <= 4 in practice).
std::vector<double> small_inverse(const std::vector<double>& a, int n) {
  std::vector<double> lu(a), inv(n * n, 0.0);
  std::vector<int> piv(n);
  for (int i = 0; i < n; ++i) piv[i] = i;
  for (int col = 0; col < n; ++col) {
    int best = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(lu[r * n + col]) > std::abs(lu[best * n + col])) best = r;
    if (std::abs(lu[best * n + col]) < 1e-300)
      throw std::runtime_error("fiber metric is singular");
    if (best != col) {
      for (int c = 0; c < n; ++c) std::swap(lu[best * n + c], lu[col * n + c]);
      std::swap(piv[best], piv[col]);
    }
    for (int r = col + 1; r < n; ++r) {
      double f = lu[r * n + col] / lu[col * n + col];
      lu[r * n + col] = f;
      for (int c = col + 1; c < n; ++c) lu[r * n + c] -= f * lu[col * n + c];
    }
  }
  for (int rhs = 0; rhs < n; ++rhs) {
    std::vector<double> y(n, 0.0);
    for (int r = 0; r < n; ++r) {
      double v = (piv[r] == rhs) ? 1.0 : 0.0;
      for (int c = 0; c < r; ++c) v -= lu[r * n + c] * y[c];
      y[r] = v;
    }
    for (int r = n - 1; r >= 0; --r) {
      double v = y[r];
      for (int c = r + 1; c < n; ++c) v -= lu[r * n + c] * inv[c * n + rhs];
      inv[r * n + rhs] = v / lu[r * n + r];
    }
  }
  return inv;
}

}  // namespace

FormField hodge_star(const FormField& w, const MetricField& gm) {
  int m = w.grid.m, k = w.k, n = w.n;
  const SlotTable& st = slots(m);
  FormField out(w.grid, m - k, n);
  int so = out.nslots(), si = w.nslots();
  for (long node = 0; node < w.grid.total(); ++node) {
    double sg = gm.sqrtg[node];
    for (int lo = 0; lo < so; ++lo) {
      Mask L = st.mask_of(m - k, lo);
      Mask Lc = mask_complement(L, m);
      double sig = interior_sign(Lc, m) * sg;
      for (int ji = 0; ji < si; ++ji) {
        Mask J = st.mask_of(k, ji);
        double factor = sig * gm.inv_minor(node, Lc, J);
        if (factor == 0) continue;
        for (int a = 0; a < n; ++a)
          out.at(node, lo, a) += factor * w.at(node, ji, a);
      }
    }
  }
  return out;
}

FaceField hodge_star_face(const FaceField& w, const MetricField& gm) {
  const FaceMetric& fm = gm.face_metric(w.face);
  int mb = w.fgrid.m, k = w.k, n = w.n;
  const SlotTable& st = slots(mb);
  FaceField out(w.face, w.fgrid, mb - k, n);
  int so = out.nslots(), si = w.nslots();
  for (long fnode = 0; fnode < w.fgrid.total(); ++fnode) {
    double sg = fm.sqrtgb[fnode];
    for (int lo = 0; lo < so; ++lo) {
      Mask L = st.mask_of(mb - k, lo);
      Mask Lc = mask_complement(L, mb);
      double sig = interior_sign(Lc, mb) * sg;
      for (int ji = 0; ji < si; ++ji) {
        Mask J = st.mask_of(k, ji);
        double factor = sig * fm.inv_minor(fnode, Lc, J);
        if (factor == 0) continue;
        for (int a = 0; a < n; ++a)
          out.at(fnode, lo, a) += factor * w.at(fnode, ji, a);
      }
    }
  }
  return out;
}

FormField musical(const FormField& w, const MetricField& gm,
                  const std::vector<double>& fiber_metric, MusicalSlot which,
                  MusicalDir dir) {
  int m = w.grid.m, k = w.k, n = w.n;
  FormField out(w.grid, k, n);
  if (which == MusicalSlot::fiber) {
    std::vector<double> mat = fiber_metric;
    if (dir == MusicalDir::sharp) mat = small_inverse(fiber_metric, n);
    int s = w.nslots();
    for (long node = 0; node < w.grid.total(); ++node)
      for (int sl = 0; sl < s; ++sl)
        for (int a = 0; a < n; ++a) {
          double acc = 0;
          for (int b = 0; b < n; ++b) acc += mat[a * n + b] * w.at(node, sl, b);
          out.at(node, sl, a) = acc;
        }
    return out;
  }
  const SlotTable& st = slots(m);
  int s = w.nslots();
  for (long node = 0; node < w.grid.total(); ++node)
    for (int si = 0; si < s; ++si) {
      Mask I = st.mask_of(k, si);
      for (int sj = 0; sj < s; ++sj) {
        Mask J = st.mask_of(k, sj);
        double factor = dir == MusicalDir::sharp ? gm.inv_minor(node, I, J)
                                                 : gm.minor(node, I, J);
        if (factor == 0) continue;
        for (int a = 0; a < n; ++a)
          out.at(node, si, a) += factor * w.at(node, sj, a);
      }
    }
  return out;
}

Density contract_equal(const FormField& chi, const FormField& phi) {
  if (chi.k != phi.k || chi.n != phi.n || !chi.grid.same_layout(phi.grid))
    throw std::invalid_argument("contract_equal: shape mismatch");
  Density rho(chi.grid);
  long count = (long)chi.data.size();
  long per_node = chi.nslots() * chi.n;
  for (long i = 0; i < count; ++i) rho.v[i / per_node] += chi.data[i] * phi.data[i];
  return rho;
}

FaceDensity contract_equal_face(const FaceField& chi, const FaceField& phi) {
  if (chi.k != phi.k || chi.n != phi.n)
    throw std::invalid_argument("contract_equal_face: shape mismatch");
  FaceDensity rho(chi.face, chi.fgrid);
  long per_node = chi.nslots() * chi.n;
  for (long i = 0; i < (long)chi.data.size(); ++i)
    rho.v[i / per_node] += chi.data[i] * phi.data[i];
  return rho;
}

FormField contract_mixed(const FormField& chi, const FormField& phi) {
  int m = chi.grid.m, k = phi.k, n = phi.n;
  if (chi.k != k + 1 || chi.n != n || !chi.grid.same_layout(phi.grid))
    throw std::invalid_argument("contract_mixed: shape mismatch");
  const SlotTable& st = slots(m);
  FormField out(chi.grid, 1, 1);
  int sk = phi.nslots();
  for (long node = 0; node < chi.grid.total(); ++node)
    for (int j = 0; j < m; ++j) {
      double acc = 0;
      for (int ks = 0; ks < sk; ++ks) {
        Mask K = st.mask_of(k, ks);
        if (K & (1u << j)) continue;
        int sgn = merge_sign_axis(j, K);
        int up = st.slot_of(k + 1, K | (1u << j));
        for (int a = 0; a < n; ++a)
          acc += sgn * chi.at(node, up, a) * phi.at(node, ks, a);
      }
      out.at(node, j, 0) = acc;
    }
  return out;
}

FormField wedge_fiber(const FormField& w, const FormField& eta) {
  int m = w.grid.m, p = w.k, q = eta.k, n = w.n;
  if (eta.n != n || p + q > m || !w.grid.same_layout(eta.grid))
    throw std::invalid_argument("wedge_fiber: shape mismatch");
  const SlotTable& st = slots(m);
  FormField out(w.grid, p + q, 1);
  int so = out.nslots();
  for (long node = 0; node < w.grid.total(); ++node)
    for (int lo = 0; lo < so; ++lo) {
      Mask L = st.mask_of(p + q, lo);
      double acc = 0;
      // Enumerate sub-masks I of L with |I| = p.
      for (Mask I = L;; I = (I - 1) & L) {
        if (mask_size(I) == p) {
          Mask J = L & ~I;
          int sgn = merge_sign(I, J);
          int si = st.slot_of(p, I), sj = st.slot_of(q, J);
          for (int a = 0; a < n; ++a)
            acc += sgn * w.at(node, si, a) * eta.at(node, sj, a);
        }
        if (I == 0) break;
      }
      out.at(node, lo, 0) = acc;
    }
  return out;
}

Density wedge_top(const FormField& w, const FormField& eta) {
  if (w.k + eta.k != w.grid.m)
    throw std::invalid_argument("wedge_top: degrees must sum to m");
  FormField top = wedge_fiber(w, eta);
  Density rho(w.grid);
  for (long node = 0; node < w.grid.total(); ++node) rho.v[node] = top.at(node, 0, 0);
  return rho;
}

FaceDensity wedge_top_face(const FaceField& w, const FaceField& eta) {
  int mb = w.fgrid.m, p = w.k, q = eta.k, n = w.n;
  if (eta.n != n || p + q != mb)
    throw std::invalid_argument("wedge_top_face: degrees must sum to face dim");
  const SlotTable& st = slots(mb);
  FaceDensity rho(w.face, w.fgrid);
  Mask L = full_mask(mb);
  for (long fnode = 0; fnode < w.fgrid.total(); ++fnode) {
    double acc = 0;
    for (Mask I = L;; I = (I - 1) & L) {
      if (mask_size(I) == p) {
        Mask J = L & ~I;
        int sgn = merge_sign(I, J);
        int si = st.slot_of(p, I), sj = st.slot_of(q, J);
        for (int a = 0; a < n; ++a)
          acc += sgn * w.at(fnode, si, a) * eta.at(fnode, sj, a);
      }
      if (I == 0) break;
    }
    rho.v[fnode] = acc;
  }
  return rho;
}

FormField phi_iso(const FormField& chi) {
  int m = chi.grid.m, k = chi.k, n = chi.n;
  const SlotTable& st = slots(m);
  FormField out(chi.grid, m - k, n);
  int so = out.nslots();
  for (long node = 0; node < chi.grid.total(); ++node)
    for (int lo = 0; lo < so; ++lo) {
      Mask L = st.mask_of(m - k, lo);
      Mask Lc = mask_complement(L, m);
      int sgn = interior_sign(Lc, m);
      int src = st.slot_of(k, Lc);
      for (int a = 0; a < n; ++a)
        out.at(node, lo, a) = sgn * chi.at(node, src, a);
    }
  return out;
}

FormField phi_iso_inv(const FormField& beta) {
  int m = beta.grid.m, k = m - beta.k, n = beta.n;
  const SlotTable& st = slots(m);
  FormField out(beta.grid, k, n);
  int so = out.nslots();
  for (long node = 0; node < beta.grid.total(); ++node)
    for (int jo = 0; jo < so; ++jo) {
      Mask J = st.mask_of(k, jo);
      int sgn = interior_sign(J, m);
      int src = st.slot_of(m - k, mask_complement(J, m));
      for (int a = 0; a < n; ++a)
        out.at(node, jo, a) = sgn * beta.at(node, src, a);
    }
  return out;
}

FaceField phi_iso_face(const FaceField& chi) {
  int mb = chi.fgrid.m, k = chi.k, n = chi.n;
  const SlotTable& st = slots(mb);
  FaceField out(chi.face, chi.fgrid, mb - k, n);
  int so = out.nslots();
  for (long fnode = 0; fnode < chi.fgrid.total(); ++fnode)
    for (int lo = 0; lo < so; ++lo) {
      Mask L = st.mask_of(mb - k, lo);
      Mask Lc = mask_complement(L, mb);
      int sgn = interior_sign(Lc, mb);
      int src = st.slot_of(k, Lc);
      for (int a = 0; a < n; ++a)
        out.at(fnode, lo, a) = sgn * chi.at(fnode, src, a);
    }
  return out;
}

FaceField phi_iso_face_inv(const FaceField& beta) {
  int mb = beta.fgrid.m, k = mb - beta.k, n = beta.n;
  const SlotTable& st = slots(mb);
  FaceField out(beta.face, beta.fgrid, k, n);
  int so = out.nslots();
  for (long fnode = 0; fnode < beta.fgrid.total(); ++fnode)
    for (int jo = 0; jo < so; ++jo) {
      Mask J = st.mask_of(k, jo);
      int sgn = interior_sign(J, mb);
      int src = st.slot_of(mb - k, mask_complement(J, mb));
      for (int a = 0; a < n; ++a)
        out.at(fnode, jo, a) = sgn * beta.at(fnode, src, a);
    }
  return out;
}

DualField to_dagger(const DualField& d) {
  if (d.rep == Rep::dagger) return d;
  DualField out;
  out.rep = Rep::dagger;
  out.k = d.k;
  out.interior = phi_iso(d.interior);
  for (const auto& bf : d.boundary) out.boundary.push_back(phi_iso_face(bf));
  return out;
}

DualField to_star(const DualField& d) {
  if (d.rep == Rep::star) return d;
  DualField out;
  out.rep = Rep::star;
  out.k = d.k;
  out.interior = phi_iso_inv(d.interior);
  for (const auto& bf : d.boundary) out.boundary.push_back(phi_iso_face_inv(bf));
  return out;
}

FaceField boundary_pullback(const FormField& w, const Face& f) {
  int m = w.grid.m, k = w.k, n = w.n;
  RectGrid fg = w.grid.face_grid(f);
  FaceField out(f, fg, k > fg.m ? -1 : k, n);
  if (k > fg.m) return out;  // no tangential components of this degree
  const SlotTable& stb = slots(fg.m);
  const SlotTable& st = slots(m);
  auto tang = w.grid.tangential_axes(f);
  int so = out.nslots();
  for (long fnode = 0; fnode < fg.total(); ++fnode) {
    long node = w.grid.face_to_volume(f, fnode);
    for (int sl = 0; sl < so; ++sl) {
      Mask Ib = stb.mask_of(k, sl);
      Mask I = 0;
      for (int t = 0; t < fg.m; ++t)
        if (Ib & (1u << t)) I |= (1u << tang[t]);
      int src = st.slot_of(k, I);
      for (int a = 0; a < n; ++a) out.at(fnode, sl, a) = w.at(node, src, a);
    }
  }
  return out;
}

double integrate(const Density& rho) {
  double acc = 0;
  double vol = rho.grid.cell_volume();
  for (long node = 0; node < rho.grid.total(); ++node)
    acc += rho.grid.quad_weight(node) * rho.v[node];
  return acc * vol;
}

double integrate_face(const FaceDensity& rho, bool oriented) {
  double acc = 0;
  double vol = rho.fgrid.m == 0 ? 1.0 : rho.fgrid.cell_volume();
  for (long fnode = 0; fnode < rho.fgrid.total(); ++fnode)
    acc += rho.fgrid.quad_weight(fnode) * rho.v[fnode];
  if (oriented) acc *= face_orientation(rho.face);
  return acc * vol;
}

double pairing(const DualField& d, const FormField& phi) {
  double acc = 0;
  if (d.rep == Rep::star) {
    acc += integrate(contract_equal(d.interior, phi));
    for (const auto& bf : d.boundary) {
      if (bf.data.empty()) continue;
      FaceField pb = boundary_pullback(phi, bf.face);
      acc += integrate_face(contract_equal_face(bf, pb), true);
    }
  } else {
    acc += integrate(wedge_top(phi, d.interior));
    for (const auto& bf : d.boundary) {
      if (bf.data.empty()) continue;
      FaceField pb = boundary_pullback(phi, bf.face);
      acc += integrate_face(wedge_top_face(pb, bf), true);
    }
  }
  return acc;
}

}  // namespace ff
