#include "fieldflow/lagrangian.hpp"

#include "fieldflow/exterior.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ff {

namespace {

constexpr double kFdStep = 1e-5;

std::vector<double> small_inverse(const std::vector<double>& a, int n) {
  std::vector<double> inv(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> w(a);
  for (int i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::fabs(w[col * n + col]);
    for (int r = col + 1; r < n; ++r) {
      double v = std::fabs(w[r * n + col]);
      if (v > best) { best = v; piv = r; }
    }
    if (best == 0.0) throw std::invalid_argument("fiber metric is singular");
    if (piv != col) {
      for (int c = 0; c < n; ++c) {
        std::swap(w[piv * n + c], w[col * n + c]);
        std::swap(inv[piv * n + c], inv[col * n + c]);
      }
    }
    double d = w[col * n + col];
    for (int c = 0; c < n; ++c) { w[col * n + c] /= d; inv[col * n + c] /= d; }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      double f = w[r * n + col];
      if (f == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        w[r * n + c] -= f * w[col * n + c];
        inv[r * n + c] -= f * inv[col * n + c];
      }
    }
  }
  return inv;
}

double quad_form(const std::vector<double>& q, const double* u, const double* v,
                 int n) {
  double s = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) s += q[a * n + b] * u[a] * v[b];
  return s;
}

}  // namespace

NodeGeom node_geom(const MetricField& gm, long node) {
  NodeGeom geo;
  geo.metric = &gm;
  geo.node = node;
  geo.m = gm.grid.m;
  geo.g = gm.g_at(node);
  geo.ginv = gm.ginv_at(node);
  geo.sqrtg = gm.sqrtg[node];
  return geo;
}

void Potential::gradient(const double* phi, int n, double* out) const {
  fd_gradient(phi, n, out);
}

void Potential::fd_gradient(const double* phi, int n, double* out) const {
  std::vector<double> p(phi, phi + n);
  for (int i = 0; i < n; ++i) {
    double keep = p[i];
    p[i] = keep + kFdStep;
    double vp = value(p.data(), n);
    p[i] = keep - kFdStep;
    double vm = value(p.data(), n);
    p[i] = keep;
    out[i] = (vp - vm) / (2 * kFdStep);
  }
}

QuadraticPotential::QuadraticPotential(double mass, std::vector<double> kappa,
                                       int n)
    : mass_(mass), kappa_(std::move(kappa)) {
  if (kappa_.size() != static_cast<size_t>(n) * n)
    throw std::invalid_argument("potential: kappa size mismatch");
}

double QuadraticPotential::value(const double* phi, int n) const {
  return mass_ * quad_form(kappa_, phi, phi, n);
}

void QuadraticPotential::gradient(const double* phi, int n, double* out) const {
  for (int a = 0; a < n; ++a) {
    double s = 0;
    for (int b = 0; b < n; ++b) s += kappa_[a * n + b] * phi[b];
    out[a] = 2 * mass_ * s;
  }
}

QuarticPotential::QuarticPotential(double lambda, double mu,
                                   std::vector<double> kappa, int n)
    : lambda_(lambda), mu_(mu), kappa_(std::move(kappa)) {
  if (kappa_.size() != static_cast<size_t>(n) * n)
    throw std::invalid_argument("potential: kappa size mismatch");
}

double QuarticPotential::value(const double* phi, int n) const {
  double q = quad_form(kappa_, phi, phi, n);
  return lambda_ * q * q - mu_ * q;
}

void QuarticPotential::gradient(const double* phi, int n, double* out) const {
  double q = quad_form(kappa_, phi, phi, n);
  double c = 4 * lambda_ * q - 2 * mu_;
  for (int a = 0; a < n; ++a) {
    double s = 0;
    for (int b = 0; b < n; ++b) s += kappa_[a * n + b] * phi[b];
    out[a] = c * s;
  }
}

void LagrangianDensity::d_phi(const NodeGeom& geo, const double* phi,
                              const double* nu, const double* zeta,
                              double* out) const {
  fd_d_phi(geo, phi, nu, zeta, out);
}

void LagrangianDensity::d_nu(const NodeGeom& geo, const double* phi,
                             const double* nu, const double* zeta,
                             double* out) const {
  fd_d_nu(geo, phi, nu, zeta, out);
}

void LagrangianDensity::d_zeta(const NodeGeom& geo, const double* phi,
                               const double* nu, const double* zeta,
                               double* out) const {
  fd_d_zeta(geo, phi, nu, zeta, out);
}

void LagrangianDensity::fd_d_phi(const NodeGeom& geo, const double* phi,
                                 const double* nu, const double* zeta,
                                 double* out) const {
  int nc = phi_comps(geo.m);
  std::vector<double> p(phi, phi + nc);
  for (int i = 0; i < nc; ++i) {
    double keep = p[i];
    p[i] = keep + kFdStep;
    double vp = eval(geo, p.data(), nu, zeta);
    p[i] = keep - kFdStep;
    double vm = eval(geo, p.data(), nu, zeta);
    p[i] = keep;
    out[i] = (vp - vm) / (2 * kFdStep);
  }
}

void LagrangianDensity::fd_d_nu(const NodeGeom& geo, const double* phi,
                                const double* nu, const double* zeta,
                                double* out) const {
  int nc = phi_comps(geo.m);
  std::vector<double> p(nu, nu + nc);
  for (int i = 0; i < nc; ++i) {
    double keep = p[i];
    p[i] = keep + kFdStep;
    double vp = eval(geo, phi, p.data(), zeta);
    p[i] = keep - kFdStep;
    double vm = eval(geo, phi, p.data(), zeta);
    p[i] = keep;
    out[i] = (vp - vm) / (2 * kFdStep);
  }
}

void LagrangianDensity::fd_d_zeta(const NodeGeom& geo, const double* phi,
                                  const double* nu, const double* zeta,
                                  double* out) const {
  int nc = zeta_comps(geo.m);
  std::vector<double> p(zeta, zeta + nc);
  for (int i = 0; i < nc; ++i) {
    double keep = p[i];
    p[i] = keep + kFdStep;
    double vp = eval(geo, phi, nu, p.data());
    p[i] = keep - kFdStep;
    double vm = eval(geo, phi, nu, p.data());
    p[i] = keep;
    out[i] = (vp - vm) / (2 * kFdStep);
  }
}

FormField LagrangianDensity::dagger_flux(const MetricField& gm,
                                         const FormField& phi,
                                         const FormField& nu,
                                         const FormField& zeta) const {
  return phi_iso(flux_dual_field(*this, gm, phi, nu, zeta));
}

MatterDensity::MatterDensity(int n_, std::vector<double> kappa,
                             std::shared_ptr<const Potential> V)
    : LagrangianDensity(0, n_), kappa_(std::move(kappa)), V_(std::move(V)) {
  if (kappa_.size() != static_cast<size_t>(n) * n)
    throw std::invalid_argument("matter density: kappa size mismatch");
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (std::fabs(kappa_[a * n + b] - kappa_[b * n + a]) > 1e-14)
        throw std::invalid_argument("matter density: kappa not symmetric");
  kappa_inv_ = small_inverse(kappa_, n);
  if (!V_) V_ = std::make_shared<ZeroPotential>();
}

double MatterDensity::eval(const NodeGeom& geo, const double* phi,
                           const double* nu, const double* zeta) const {
  int m = geo.m;
  double kin = 0.5 * quad_form(kappa_, nu, nu, n);
  double grad = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double gij = geo.ginv[i * m + j];
      if (gij == 0.0) continue;
      grad += gij * quad_form(kappa_, zeta + i * n, zeta + j * n, n);
    }
  return geo.sqrtg * (kin - 0.5 * grad - V_->value(phi, n));
}

void MatterDensity::d_phi(const NodeGeom& geo, const double* phi, const double*,
                          const double*, double* out) const {
  V_->gradient(phi, n, out);
  for (int a = 0; a < n; ++a) out[a] *= -geo.sqrtg;
}

void MatterDensity::d_nu(const NodeGeom& geo, const double*, const double* nu,
                         const double*, double* out) const {
  for (int a = 0; a < n; ++a) {
    double s = 0;
    for (int b = 0; b < n; ++b) s += kappa_[a * n + b] * nu[b];
    out[a] = geo.sqrtg * s;
  }
}

void MatterDensity::d_zeta(const NodeGeom& geo, const double*, const double*,
                           const double* zeta, double* out) const {
  int m = geo.m;
  for (int i = 0; i < m; ++i)
    for (int a = 0; a < n; ++a) {
      double s = 0;
      for (int j = 0; j < m; ++j) {
        double gij = geo.ginv[i * m + j];
        if (gij == 0.0) continue;
        for (int b = 0; b < n; ++b) s += gij * kappa_[a * n + b] * zeta[j * n + b];
      }
      out[i * n + a] = -geo.sqrtg * s;
    }
}

void MatterDensity::nu_from_alpha(const NodeGeom& geo, const double*,
                                  const double* alpha, double* out) const {
  for (int a = 0; a < n; ++a) {
    double s = 0;
    for (int b = 0; b < n; ++b) s += kappa_inv_[a * n + b] * alpha[b];
    out[a] = s / geo.sqrtg;
  }
}

FormField MatterDensity::dagger_flux(const MetricField& gm, const FormField&,
                                     const FormField&,
                                     const FormField& zeta) const {
  FormField th =
      hodge_star(musical(zeta, gm, kappa_, MusicalSlot::fiber, MusicalDir::flat),
                 gm);
  th *= -1.0;
  return th;
}

YangMillsDensity::YangMillsDensity(const LieAlgebra& la)
    : LagrangianDensity(1, la.n) {
  pos_.assign(static_cast<size_t>(n) * n, 0.0);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) pos_[a * n + b] = -la.K[a * n + b];
  pos_inv_ = small_inverse(pos_, n);
}

double YangMillsDensity::eval(const NodeGeom& geo, const double*,
                              const double* nu, const double* zeta) const {
  int m = geo.m;
  double kin = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double gij = geo.ginv[i * m + j];
      if (gij == 0.0) continue;
      kin += gij * quad_form(pos_, nu + i * n, nu + j * n, n);
    }
  const SlotTable& st = slots(m);
  int ns = st.count(2);
  double mag = 0;
  for (int si = 0; si < ns; ++si) {
    Mask I = st.mask_of(2, si);
    for (int sj = 0; sj < ns; ++sj) {
      Mask J = st.mask_of(2, sj);
      double gIJ = geo.inv_minor(I, J);
      if (gIJ == 0.0) continue;
      mag += gIJ * quad_form(pos_, zeta + si * n, zeta + sj * n, n);
    }
  }
  return geo.sqrtg * 0.5 * (kin - mag);
}

void YangMillsDensity::d_phi(const NodeGeom& geo, const double*, const double*,
                             const double*, double* out) const {
  int nc = phi_comps(geo.m);
  for (int i = 0; i < nc; ++i) out[i] = 0;
}

void YangMillsDensity::d_nu(const NodeGeom& geo, const double*,
                            const double* nu, const double*,
                            double* out) const {
  int m = geo.m;
  for (int i = 0; i < m; ++i)
    for (int a = 0; a < n; ++a) {
      double s = 0;
      for (int j = 0; j < m; ++j) {
        double gij = geo.ginv[i * m + j];
        if (gij == 0.0) continue;
        for (int b = 0; b < n; ++b) s += gij * pos_[a * n + b] * nu[j * n + b];
      }
      out[i * n + a] = geo.sqrtg * s;
    }
}

void YangMillsDensity::d_zeta(const NodeGeom& geo, const double*, const double*,
                              const double* zeta, double* out) const {
  int m = geo.m;
  const SlotTable& st = slots(m);
  int ns = st.count(2);
  for (int si = 0; si < ns; ++si) {
    Mask I = st.mask_of(2, si);
    for (int a = 0; a < n; ++a) {
      double s = 0;
      for (int sj = 0; sj < ns; ++sj) {
        Mask J = st.mask_of(2, sj);
        double gIJ = geo.inv_minor(I, J);
        if (gIJ == 0.0) continue;
        for (int b = 0; b < n; ++b) s += gIJ * pos_[a * n + b] * zeta[sj * n + b];
      }
      out[si * n + a] = -geo.sqrtg * s;
    }
  }
}

void YangMillsDensity::nu_from_alpha(const NodeGeom& geo, const double*,
                                     const double* alpha, double* out) const {
  // alpha^i_a = sqrtg g^{ij} pos_ab nu^b_j; invert with g_{ij} and pos^{-1}.
  int m = geo.m;
  for (int i = 0; i < m; ++i)
    for (int a = 0; a < n; ++a) {
      double s = 0;
      for (int j = 0; j < m; ++j) {
        double gij = geo.g[i * m + j];
        if (gij == 0.0) continue;
        for (int b = 0; b < n; ++b)
          s += gij * pos_inv_[a * n + b] * alpha[j * n + b];
      }
      out[i * n + a] = s / geo.sqrtg;
    }
}

FormField YangMillsDensity::dagger_flux(const MetricField& gm, const FormField&,
                                        const FormField&,
                                        const FormField& zeta) const {
  FormField th =
      hodge_star(musical(zeta, gm, pos_, MusicalSlot::fiber, MusicalDir::flat),
                 gm);
  th *= -1.0;
  return th;
}

namespace {

template <typename Fn>
void per_node(const LagrangianDensity& L, const MetricField& gm,
              const FormField& phi, const FormField& nu, const FormField& zeta,
              Fn&& fn) {
  const RectGrid& g = gm.grid;
  if (phi.k != L.k || nu.k != L.k || zeta.k != L.k + 1 || phi.n != L.n ||
      nu.n != L.n || zeta.n != L.n)
    throw std::invalid_argument("density evaluation: field shape mismatch");
  long total = g.total();
  for (long node = 0; node < total; ++node) {
    NodeGeom geo = node_geom(gm, node);
    fn(geo, phi.node_ptr(node), nu.node_ptr(node), zeta.node_ptr(node));
  }
}

}  // namespace

Density lagrangian_field(const LagrangianDensity& L, const MetricField& gm,
                         const FormField& phi, const FormField& nu,
                         const FormField& zeta) {
  Density out(gm.grid);
  per_node(L, gm, phi, nu, zeta,
           [&](const NodeGeom& geo, const double* p, const double* v,
               const double* z) { out.v[geo.node] = L.eval(geo, p, v, z); });
  return out;
}

FormField momentum_field(const LagrangianDensity& L, const MetricField& gm,
                         const FormField& phi, const FormField& nu,
                         const FormField& zeta) {
  FormField out(gm.grid, L.k, L.n);
  per_node(L, gm, phi, nu, zeta,
           [&](const NodeGeom& geo, const double* p, const double* v,
               const double* z) { L.d_nu(geo, p, v, z, out.node_ptr(geo.node)); });
  return out;
}

FormField flux_dual_field(const LagrangianDensity& L, const MetricField& gm,
                          const FormField& phi, const FormField& nu,
                          const FormField& zeta) {
  FormField out(gm.grid, L.k + 1, L.n);
  per_node(L, gm, phi, nu, zeta,
           [&](const NodeGeom& geo, const double* p, const double* v,
               const double* z) { L.d_zeta(geo, p, v, z, out.node_ptr(geo.node)); });
  return out;
}

FormField config_gradient_field(const LagrangianDensity& L, const MetricField& gm,
                                const FormField& phi, const FormField& nu,
                                const FormField& zeta) {
  FormField out(gm.grid, L.k, L.n);
  per_node(L, gm, phi, nu, zeta,
           [&](const NodeGeom& geo, const double* p, const double* v,
               const double* z) { L.d_phi(geo, p, v, z, out.node_ptr(geo.node)); });
  return out;
}

FormField velocity_from_momentum(const LagrangianDensity& L, const MetricField& gm,
                                 const FormField& phi, const FormField& alpha) {
  if (alpha.k != L.k || alpha.n != L.n)
    throw std::invalid_argument("velocity_from_momentum: shape mismatch");
  FormField out(gm.grid, L.k, L.n);
  long total = gm.grid.total();
  for (long node = 0; node < total; ++node) {
    NodeGeom geo = node_geom(gm, node);
    L.nu_from_alpha(geo, phi.node_ptr(node), alpha.node_ptr(node),
                    out.node_ptr(node));
  }
  return out;
}

Density energy_density_field(const LagrangianDensity& L, const MetricField& gm,
                             const FormField& phi, const FormField& nu,
                             const FormField& zeta) {
  Density out(gm.grid);
  int nc = L.phi_comps(gm.grid.m);
  std::vector<double> mom(nc);
  per_node(L, gm, phi, nu, zeta,
           [&](const NodeGeom& geo, const double* p, const double* v,
               const double* z) {
             L.d_nu(geo, p, v, z, mom.data());
             double s = 0;
             for (int i = 0; i < nc; ++i) s += mom[i] * v[i];
             out.v[geo.node] = s - L.eval(geo, p, v, z);
           });
  return out;
}

}  // namespace ff
