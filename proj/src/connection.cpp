#include "fieldflow/connection.hpp"

#include <cmath>
#include <stdexcept>

namespace ff {

bool LieAlgebra::abelian() const {
  for (double x : f)
    if (x != 0) return false;
  return true;
}

double LieAlgebra::validate() const {
  double worst = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        worst = std::max(worst, std::abs(f_at(a, b, c) + f_at(a, c, b)));
        // Jacobi: sum_e f^e_{bc} f^a_{ed} cyclic in (b, c, d) = 0.
        for (int d = 0; d < n; ++d) {
          double jac = 0;
          for (int e = 0; e < n; ++e)
            jac += f_at(e, b, c) * f_at(a, e, d) + f_at(e, c, d) * f_at(a, e, b) +
                   f_at(e, d, b) * f_at(a, e, c);
          worst = std::max(worst, std::abs(jac));
        }
        // ad-invariance: K(ad_a b, c) + K(b, ad_a c) = 0.
        double inv = 0;
        for (int e = 0; e < n; ++e)
          inv += K[e * n + c] * f_at(e, a, b) + K[b * n + e] * f_at(e, a, c);
        worst = std::max(worst, std::abs(inv));
      }
  return worst;
}

LieAlgebra lie_u1() {
  LieAlgebra la;
  la.name = "u1";
  la.n = 1;
  la.f = {0.0};
  la.K = {-1.0};
  return la;
}

LieAlgebra lie_abelian(int n) {
  LieAlgebra la;
  la.name = "abelian";
  la.n = n;
  la.f.assign((size_t)n * n * n, 0.0);
  la.K.assign((size_t)n * n, 0.0);
  for (int i = 0; i < n; ++i) la.K[i * n + i] = -1.0;
  return la;
}

LieAlgebra lie_su2() {
  LieAlgebra la;
  la.name = "su2";
  la.n = 3;
  la.f.assign(27, 0.0);
  const double s = 1.0 / std::sqrt(2.0);
  // f^a_{bc} = epsilon_{abc} / sqrt(2); this normalization makes the Killing
  // form exactly minus the identity.
  int eps[6][4] = {{0, 1, 2, 1}, {1, 2, 0, 1}, {2, 0, 1, 1},
                   {0, 2, 1, -1}, {2, 1, 0, -1}, {1, 0, 2, -1}};
  for (auto& e : eps) la.f[(e[0] * 3 + e[1]) * 3 + e[2]] = e[3] * s;
  la.K.assign(9, 0.0);
  for (int i = 0; i < 3; ++i) la.K[i * 3 + i] = -1.0;
  return la;
}

double Representation::validate_invariance() const {
  double worst = 0;
  for (int c = 0; c < nlie; ++c)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) {
        double s = 0;
        for (int q = 0; q < p; ++q)
          s += kappa[i * p + q] * rho_at(c, q, j) + kappa[q * p + j] * rho_at(c, q, i);
        worst = std::max(worst, std::abs(s));
      }
  return worst;
}

Representation rep_trivial(int p, int nlie) {
  Representation r;
  r.p = p;
  r.nlie = nlie;
  r.rho.assign((size_t)nlie * p * p, 0.0);
  r.kappa.assign((size_t)p * p, 0.0);
  for (int i = 0; i < p; ++i) r.kappa[i * p + i] = 1.0;
  r.zero = true;
  return r;
}

Representation rep_adjoint(const LieAlgebra& la) {
  Representation r;
  r.p = la.n;
  r.nlie = la.n;
  r.rho.assign((size_t)la.n * la.n * la.n, 0.0);
  for (int c = 0; c < la.n; ++c)
    for (int i = 0; i < la.n; ++i)
      for (int j = 0; j < la.n; ++j) r.rho[(c * la.n + i) * la.n + j] = la.f_at(i, c, j);
  r.kappa.assign((size_t)la.n * la.n, 0.0);
  for (int i = 0; i < la.n; ++i) r.kappa[i * la.n + i] = 1.0;
  r.zero = false;
  return r;
}

ConnectionField connection_zero(const RectGrid& g, int n) {
  ConnectionField c;
  c.grid = g;
  c.n = n;
  c.zero = true;
  return c;
}

ConnectionField induced_adjoint(const FormField& A, const LieAlgebra& la) {
  if (A.k != 1 || A.n != la.n)
    throw std::invalid_argument("induced_adjoint: A must be a Lie-valued 1-form");
  ConnectionField c;
  c.grid = A.grid;
  c.n = la.n;
  c.zero = la.abelian();
  if (c.zero) return c;
  int m = A.grid.m, n = la.n;
  c.gamma.assign((size_t)A.grid.total() * m * n * n, 0.0);
  for (long node = 0; node < A.grid.total(); ++node)
    for (int i = 0; i < m; ++i)
      for (int a = 0; a < n; ++a)
        for (int cc = 0; cc < n; ++cc) {
          double acc = 0;
          for (int b = 0; b < n; ++b) acc += la.f_at(a, b, cc) * A.at(node, i, b);
          c.gamma[((node * m + i) * n + a) * n + cc] = acc;
        }
  return c;
}

ConnectionField induced_rep(const FormField& A, const Representation& rep) {
  if (A.k != 1 || A.n != rep.nlie)
    throw std::invalid_argument("induced_rep: A must be a Lie-valued 1-form");
  ConnectionField c;
  c.grid = A.grid;
  c.n = rep.p;
  c.zero = rep.zero;
  if (c.zero) return c;
  int m = A.grid.m, p = rep.p;
  c.gamma.assign((size_t)A.grid.total() * m * p * p, 0.0);
  for (long node = 0; node < A.grid.total(); ++node)
    for (int i = 0; i < m; ++i)
      for (int a = 0; a < p; ++a)
        for (int q = 0; q < p; ++q) {
          double acc = 0;
          for (int cc = 0; cc < rep.nlie; ++cc)
            acc += rep.rho_at(cc, a, q) * A.at(node, i, cc);
          c.gamma[((node * m + i) * p + a) * p + q] = acc;
        }
  return c;
}

namespace {

// All m axis derivatives of every component of a field.
std::vector<std::vector<double>> all_derivatives(const FormField& w) {
  int comps = w.nslots() * w.n;
  std::vector<std::vector<double>> d(w.grid.m);
  for (int axis = 0; axis < w.grid.m; ++axis) {
    d[axis].resize(w.data.size());
    partial_derivative(w.grid, axis, w.data.data(), d[axis].data(), comps);
  }
  return d;
}

}  // namespace

FormField cov_ext_deriv(const ConnectionField& conn, const FormField& phi) {
  int m = phi.grid.m, k = phi.k, n = phi.n;
  if (k >= m) throw std::invalid_argument("cov_ext_deriv: degree too high");
  const SlotTable& st = slots(m);
  FormField out(phi.grid, k + 1, n);
  auto d = all_derivatives(phi);
  int so = out.nslots(), si = phi.nslots();
  for (long node = 0; node < phi.grid.total(); ++node)
    for (int lo = 0; lo < so; ++lo) {
      Mask L = st.mask_of(k + 1, lo);
      for (int i = 0; i < m; ++i) {
        if (!(L & (1u << i))) continue;
        Mask K = L & ~(1u << i);
        int sgn = merge_sign_axis(i, K);
        int src = st.slot_of(k, K);
        long base = (node * si + src) * n;
        for (int a = 0; a < n; ++a) {
          double term = d[i][base + a];
          if (!conn.zero)
            for (int b = 0; b < n; ++b)
              term += conn.at(node, i, a, b) * phi.data[base + b];
          out.at(node, lo, a) += sgn * term;
        }
      }
    }
  return out;
}

FormField dual_cov_ext_deriv(const ConnectionField& conn, const FormField& eta) {
  int m = eta.grid.m, k = eta.k, n = eta.n;
  if (k >= m) throw std::invalid_argument("dual_cov_ext_deriv: degree too high");
  const SlotTable& st = slots(m);
  FormField out(eta.grid, k + 1, n);
  auto d = all_derivatives(eta);
  int so = out.nslots(), si = eta.nslots();
  for (long node = 0; node < eta.grid.total(); ++node)
    for (int lo = 0; lo < so; ++lo) {
      Mask L = st.mask_of(k + 1, lo);
      for (int i = 0; i < m; ++i) {
        if (!(L & (1u << i))) continue;
        Mask K = L & ~(1u << i);
        int sgn = merge_sign_axis(i, K);
        int src = st.slot_of(k, K);
        long base = (node * si + src) * n;
        for (int a = 0; a < n; ++a) {
          double term = d[i][base + a];
          if (!conn.zero)
            for (int b = 0; b < n; ++b)
              term -= conn.at(node, i, b, a) * eta.data[base + b];
          out.at(node, lo, a) += sgn * term;
        }
      }
    }
  return out;
}

FaceField trace_on_face(const FormField& chi, const Face& f) {
  int m = chi.grid.m, q = chi.k, n = chi.n;
  if (q < 1) throw std::invalid_argument("trace_on_face: degree must be >= 1");
  RectGrid fg = chi.grid.face_grid(f);
  FaceField out(f, fg, q - 1 > fg.m ? -1 : q - 1, n);
  if (q - 1 > fg.m) return out;
  const SlotTable& st = slots(m);
  const SlotTable& stb = slots(fg.m);
  auto tang = chi.grid.tangential_axes(f);
  int d = f.axis;
  int axis_sign = (d % 2 == 0) ? 1 : -1;
  int so = out.nslots();
  for (long fnode = 0; fnode < fg.total(); ++fnode) {
    long node = chi.grid.face_to_volume(f, fnode);
    for (int sl = 0; sl < so; ++sl) {
      Mask Ib = stb.mask_of(q - 1, sl);
      Mask I = 0;
      for (int t = 0; t < fg.m; ++t)
        if (Ib & (1u << t)) I |= (1u << tang[t]);
      int sgn = merge_sign_axis(d, I) * axis_sign;
      int src = st.slot_of(q, I | (1u << d));
      for (int a = 0; a < n; ++a) out.at(fnode, sl, a) = sgn * chi.at(node, src, a);
    }
  }
  return out;
}

FormField cov_divergence(const ConnectionField& conn, const FormField& chi) {
  int m = chi.grid.m, q = chi.k, n = chi.n;
  if (q < 1) throw std::invalid_argument("cov_divergence: degree must be >= 1");
  const SlotTable& st = slots(m);
  FormField out(chi.grid, q - 1, n);
  auto d = all_derivatives(chi);
  int so = out.nslots(), si = chi.nslots();
  int parity = ((q - 1) % 2 == 0) ? 1 : -1;  // (-1)^{output degree}
  for (long node = 0; node < chi.grid.total(); ++node)
    for (int io = 0; io < so; ++io) {
      Mask I = st.mask_of(q - 1, io);
      double acc;
      for (int a = 0; a < n; ++a) {
        acc = 0;
        for (int j = 0; j < m; ++j) {
          if (I & (1u << j)) continue;
          int sgn = merge_sign_axis(j, I);
          int src = st.slot_of(q, I | (1u << j));
          long base = (node * si + src) * n;
          double term = d[j][base + a];
          if (!conn.zero)
            for (int b = 0; b < n; ++b)
              term -= conn.at(node, j, b, a) * chi.data[base + b];
          acc += sgn * term;
        }
        out.at(node, io, a) = parity * acc;
      }
    }
  return out;
}

FormField curvature(const FormField& A, const LieAlgebra& la) {
  if (A.k != 1 || A.n != la.n)
    throw std::invalid_argument("curvature: A must be a Lie-valued 1-form");
  int m = A.grid.m, n = la.n;
  if (m < 2)
    throw std::invalid_argument("curvature: gauge sector needs dimension >= 2");
  const SlotTable& st = slots(m);
  FormField B(A.grid, 2, n);
  auto d = all_derivatives(A);
  bool ab = la.abelian();
  int so = B.nslots();
  for (long node = 0; node < A.grid.total(); ++node)
    for (int sl = 0; sl < so; ++sl) {
      Mask L = st.mask_of(2, sl);
      int ij[3], cnt;
      axes_of(L, ij, cnt);
      int i = ij[0], j = ij[1];
      long bi = (node * m + i) * n, bj = (node * m + j) * n;
      for (int a = 0; a < n; ++a) {
        double v = d[i][bj + a] - d[j][bi + a];
        if (!ab)
          for (int b = 0; b < n; ++b)
            for (int c = 0; c < n; ++c)
              v += la.f_at(a, b, c) * A.data[bi + b] * A.data[bj + c];
        B.at(node, sl, a) = v;
      }
    }
  return B;
}

FormField codifferential(const ConnectionField& conn, const MetricField& gm,
                         const FormField& w) {
  int m = w.grid.m, k = w.k;
  if (k < 1) throw std::invalid_argument("codifferential: degree must be >= 1");
  FormField s1 = hodge_star(w, gm);
  FormField ds = cov_ext_deriv(conn, s1);
  FormField s2 = hodge_star(ds, gm);
  int sign = ((m * (k + 1) + 1) % 2 == 0) ? 1 : -1;
  s2 *= (double)sign;
  return s2;
}

FormField rep_action(const Representation& rep, const FormField& xi,
                     const FormField& phi) {
  if (xi.n != rep.nlie || phi.n != rep.p || phi.k != 0)
    throw std::invalid_argument("rep_action: shape mismatch");
  FormField out(xi.grid, xi.k, rep.p);
  if (rep.zero) return out;
  int s = xi.nslots();
  for (long node = 0; node < xi.grid.total(); ++node)
    for (int sl = 0; sl < s; ++sl)
      for (int i = 0; i < rep.p; ++i) {
        double acc = 0;
        for (int c = 0; c < rep.nlie; ++c)
          for (int q = 0; q < rep.p; ++q)
            acc += rep.rho_at(c, i, q) * xi.at(node, sl, c) * phi.at(node, 0, q);
        out.at(node, sl, i) = acc;
      }
  return out;
}

FormField rep_action_adjoint(const Representation& rep, const FormField& eta,
                             const FormField& phi) {
  if (eta.n != rep.p || phi.n != rep.p || phi.k != 0)
    throw std::invalid_argument("rep_action_adjoint: shape mismatch");
  FormField out(eta.grid, eta.k, rep.nlie);
  if (rep.zero) return out;
  int s = eta.nslots();
  for (long node = 0; node < eta.grid.total(); ++node)
    for (int sl = 0; sl < s; ++sl)
      for (int c = 0; c < rep.nlie; ++c) {
        double acc = 0;
        for (int i = 0; i < rep.p; ++i)
          for (int q = 0; q < rep.p; ++q)
            acc += eta.at(node, sl, i) * rep.rho_at(c, i, q) * phi.at(node, 0, q);
        out.at(node, sl, c) = acc;
      }
  return out;
}

}  // namespace ff
