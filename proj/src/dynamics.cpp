#include "fieldflow/dynamics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>

namespace ff {

namespace {

FormField current_field(const RectGrid& g, int k, int n, const CurrentFn& cur,
                        double t) {
  FormField out(g, k, n);
  if (cur.zero) return out;
  long total = g.total();
  for (long node = 0; node < total; ++node) {
    auto x = g.coords(node);
    cur.fn(x, t, out.node_ptr(node));
  }
  return out;
}

void scale_by_sqrtg(FormField& f, const MetricField& gm) {
  long total = f.grid.total();
  int per = f.nslots() * f.n;
  for (long node = 0; node < total; ++node) {
    double s = gm.sqrtg[node];
    double* p = f.node_ptr(node);
    for (int c = 0; c < per; ++c) p[c] *= s;
  }
}

std::vector<double> invert_small(const std::vector<double>& a, int n) {
  std::vector<double> inv(static_cast<size_t>(n) * n, 0.0), w(a);
  for (int i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::fabs(w[col * n + col]);
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(w[r * n + col]) > best) {
        best = std::fabs(w[r * n + col]);
        piv = r;
      }
    if (best == 0.0) throw std::invalid_argument("singular fiber pairing");
    if (piv != col)
      for (int c = 0; c < n; ++c) {
        std::swap(w[piv * n + c], w[col * n + c]);
        std::swap(inv[piv * n + c], inv[col * n + c]);
      }
    double d = w[col * n + col];
    for (int c = 0; c < n; ++c) {
      w[col * n + c] /= d;
      inv[col * n + c] /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      double fmul = w[r * n + col];
      if (fmul == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        w[r * n + c] -= fmul * w[col * n + c];
        inv[r * n + c] -= fmul * inv[col * n + c];
      }
    }
  }
  return inv;
}

Mask local_to_global(Mask local, const std::vector<int>& tang) {
  Mask out = 0;
  while (local) {
    int b = std::countr_zero(local);
    local &= local - 1;
    out |= Mask(1) << tang[b];
  }
  return out;
}

// Shared sector geometry for assembly.
struct SectorEval {
  ConnectionField conn;
  FormField zeta;  // covariant differential of the configuration
  FormField vel;   // velocity from the Legendre inverse
};

SectorEval matter_eval(const Model& model, const State& s) {
  const MatterSector& sec = *model.matter;
  SectorEval e;
  e.conn = model.charged() ? induced_rep(s.A, sec.rep)
                           : connection_zero(model.grid, sec.density->n);
  e.zeta = cov_ext_deriv(e.conn, s.phi);
  e.vel = velocity_from_momentum(*sec.density, model.metric, s.phi, s.alpha);
  return e;
}

SectorEval gauge_eval(const Model& model, const State& s) {
  const GaugeSector& sec = *model.gauge;
  SectorEval e;
  e.conn = induced_adjoint(s.A, sec.lie);
  e.zeta = curvature(s.A, sec.lie);
  e.vel = velocity_from_momentum(*sec.density, model.metric, s.A, s.sigma);
  return e;
}

}  // namespace

State initial_state(const Model& model) {
  State s;
  if (model.matter) {
    int n = model.matter->density->n;
    s.phi = FormField(model.grid, 0, n);
    s.alpha = FormField(model.grid, 0, n);
  }
  if (model.gauge) {
    int n = model.gauge->density->n;
    s.A = FormField(model.grid, 1, n);
    s.sigma = FormField(model.grid, 1, n);
  }
  return s;
}

Scheme parse_scheme(const std::string& s) {
  if (s == "leapfrog") return Scheme::leapfrog;
  if (s == "rk4") return Scheme::rk4;
  throw std::invalid_argument("unknown scheme: " + s);
}

Rep parse_rep(const std::string& s) {
  if (s == "star") return Rep::star;
  if (s == "dagger") return Rep::dagger;
  throw std::invalid_argument("unknown representation: " + s);
}

double apply_boundary_currents(const MetricField& gm, const LagrangianDensity& L,
                               const SectorForces& forces, double t, Rep rep,
                               FormField& flux) {
  const RectGrid& g = gm.grid;
  int m = g.m, k = L.k, n = L.n;
  auto faces = g.boundary_faces();
  for (const auto& kv : forces.boundary) {
    bool ok = false;
    for (const auto& f : faces)
      if (face_key(f) == kv.first) ok = true;
    if (!ok)
      throw std::invalid_argument(
          "boundary current prescribed on an axis without a bounded face");
  }
  if (rep == Rep::star) {
    if (flux.k != k + 1 || flux.n != n)
      throw std::invalid_argument("apply_boundary_currents: flux shape");
  } else {
    if (flux.k != m - k - 1 || flux.n != n)
      throw std::invalid_argument("apply_boundary_currents: flux shape");
  }
  const SlotTable& stv = slots(m);
  const SlotTable& stf = slots(m - 1);
  const std::vector<double>& fib = L.fiber_metric();
  int nfs = slot_count(m - 1, k);
  double residual = 0;
  if (nfs == 0) return residual;
  std::vector<double> cvals(static_cast<size_t>(nfs) * n, 0.0);
  std::vector<double> oval(n);
  for (const Face& f : faces) {
    int d = f.axis;
    int ss = side_sign(f);
    const FaceMetric& fm = gm.face_metric(f);
    auto tang = g.tangential_axes(f);
    const CurrentFn* cur = nullptr;
    auto it = forces.boundary.find(face_key(f));
    if (it != forces.boundary.end() && !it->second.zero) cur = &it->second;
    long ftotal = fm.fgrid.total();
    for (long fnode = 0; fnode < ftotal; ++fnode) {
      long vnode = g.face_to_volume(f, fnode);
      if (cur) {
        auto x = g.coords(vnode);
        cur->fn(x, t, cvals.data());
      }
      double sg = fm.sqrtgb[fnode];
      for (int sl = 0; sl < nfs; ++sl) {
        Mask il = stf.mask_of(k, sl);
        Mask gi = local_to_global(il, tang);
        for (int a = 0; a < n; ++a) oval[a] = 0;
        if (cur) {
          for (int sl2 = 0; sl2 < nfs; ++sl2) {
            double gij = fm.inv_minor(fnode, il, stf.mask_of(k, sl2));
            if (gij == 0.0) continue;
            for (int a = 0; a < n; ++a)
              for (int b = 0; b < n; ++b)
                oval[a] += gij * fib[a * n + b] * cvals[sl2 * n + b];
          }
        }
        double pref = -double(merge_sign_axis(d, gi) * ss) * sg;
        Mask ju = gi | (Mask(1) << d);
        if (rep == Rep::star) {
          int slot = stv.slot_of(k + 1, ju);
          for (int a = 0; a < n; ++a) {
            double nv = pref * oval[a];
            residual = std::max(residual, std::fabs(flux.at(vnode, slot, a) - nv));
            flux.at(vnode, slot, a) = nv;
          }
        } else {
          Mask lm = mask_complement(ju, m);
          int slot = stv.slot_of(m - k - 1, lm);
          double sgn = interior_sign(ju, m);
          for (int a = 0; a < n; ++a) {
            double nv = sgn * pref * oval[a];
            residual = std::max(residual, std::fabs(flux.at(vnode, slot, a) - nv));
            flux.at(vnode, slot, a) = nv;
          }
        }
      }
    }
  }
  return residual;
}

std::optional<FormField> interior_force_star(const MetricField& gm,
                                             const LagrangianDensity& L,
                                             const SectorForces& forces,
                                             double t) {
  if (forces.interior.zero) return std::nullopt;
  FormField cur = current_field(gm.grid, L.k, L.n, forces.interior, t);
  FormField flat =
      musical(cur, gm, L.fiber_metric(), MusicalSlot::fiber, MusicalDir::flat);
  FormField F =
      musical(flat, gm, L.fiber_metric(), MusicalSlot::base, MusicalDir::sharp);
  scale_by_sqrtg(F, gm);
  return F;
}

namespace {

// Dagger-representation interior force: star of the fiber-lowered current.
std::optional<FormField> interior_force_dagger(const MetricField& gm,
                                               const LagrangianDensity& L,
                                               const SectorForces& forces,
                                               double t) {
  if (forces.interior.zero) return std::nullopt;
  FormField cur = current_field(gm.grid, L.k, L.n, forces.interior, t);
  return hodge_star(
      musical(cur, gm, L.fiber_metric(), MusicalSlot::fiber, MusicalDir::flat),
      gm);
}

}  // namespace

FormField matter_rhs(const Model& model, const State& s, Rep rep, double t,
                     AssembleReport* report) {
  if (!model.matter) throw std::logic_error("matter_rhs: no matter sector");
  const MatterSector& sec = *model.matter;
  const LagrangianDensity& L = *sec.density;
  const MetricField& gm = model.metric;
  SectorEval e = matter_eval(model, s);
  double sign = (L.k % 2 == 0) ? -1.0 : 1.0;  // -(-1)^k
  double res = 0;
  FormField rhs;
  if (rep == Rep::star) {
    FormField chi = flux_dual_field(L, gm, s.phi, e.vel, e.zeta);
    res = apply_boundary_currents(gm, L, sec.forces, t, rep, chi);
    rhs = config_gradient_field(L, gm, s.phi, e.vel, e.zeta);
    rhs.axpy(sign, cov_divergence(e.conn, chi));
    if (auto F = interior_force_star(gm, L, sec.forces, t)) rhs += *F;
  } else {
    FormField theta = L.dagger_flux(gm, s.phi, e.vel, e.zeta);
    res = apply_boundary_currents(gm, L, sec.forces, t, rep, theta);
    FormField rhsd = phi_iso(config_gradient_field(L, gm, s.phi, e.vel, e.zeta));
    rhsd.axpy(sign, dual_cov_ext_deriv(e.conn, theta));
    if (auto F = interior_force_dagger(gm, L, sec.forces, t)) rhsd += *F;
    rhs = phi_iso_inv(rhsd);
  }
  if (report)
    report->boundary_residual = std::max(report->boundary_residual, res);
  return rhs;
}

FormField gauge_rhs(const Model& model, const State& s, Rep rep, double t,
                    AssembleReport* report) {
  if (!model.gauge) throw std::logic_error("gauge_rhs: no gauge sector");
  const GaugeSector& sec = *model.gauge;
  const LagrangianDensity& L = *sec.density;
  const MetricField& gm = model.metric;
  SectorEval e = gauge_eval(model, s);
  bool coupled = model.charged();
  double sign = (L.k % 2 == 0) ? -1.0 : 1.0;
  double res = 0;
  FormField rhs;
  if (rep == Rep::star) {
    FormField chihat = flux_dual_field(L, gm, s.A, e.vel, e.zeta);
    res = apply_boundary_currents(gm, L, sec.forces, t, rep, chihat);
    rhs = config_gradient_field(L, gm, s.A, e.vel, e.zeta);
    rhs.axpy(sign, cov_divergence(e.conn, chihat));
    if (coupled) {
      SectorEval me = matter_eval(model, s);
      FormField chimat = flux_dual_field(*model.matter->density, gm, s.phi,
                                         me.vel, me.zeta);
      rhs += rep_action_adjoint(model.matter->rep, chimat, s.phi);
    }
    if (auto F = interior_force_star(gm, L, sec.forces, t)) rhs += *F;
  } else {
    FormField theta = L.dagger_flux(gm, s.A, e.vel, e.zeta);
    res = apply_boundary_currents(gm, L, sec.forces, t, rep, theta);
    FormField rhsd = phi_iso(config_gradient_field(L, gm, s.A, e.vel, e.zeta));
    rhsd.axpy(sign, dual_cov_ext_deriv(e.conn, theta));
    if (coupled) {
      SectorEval me = matter_eval(model, s);
      FormField thetamat =
          model.matter->density->dagger_flux(gm, s.phi, me.vel, me.zeta);
      rhsd += rep_action_adjoint(model.matter->rep, thetamat, s.phi);
    }
    if (auto F = interior_force_dagger(gm, L, sec.forces, t)) rhsd += *F;
    rhs = phi_iso_inv(rhsd);
  }
  if (report)
    report->boundary_residual = std::max(report->boundary_residual, res);
  return rhs;
}

namespace {

void add_scaled(State& s, double c, const State& d) {
  if (!s.phi.data.empty()) {
    s.phi.axpy(c, d.phi);
    s.alpha.axpy(c, d.alpha);
  }
  if (!s.A.data.empty()) {
    s.A.axpy(c, d.A);
    s.sigma.axpy(c, d.sigma);
  }
}

}  // namespace

void step(const Model& model, State& s, double dt, Scheme scheme, Rep rep,
          AssembleReport* report) {
  const MetricField& gm = model.metric;
  auto drift = [&](double hdt) {
    if (model.matter) {
      FormField nu =
          velocity_from_momentum(*model.matter->density, gm, s.phi, s.alpha);
      s.phi.axpy(hdt, nu);
    }
    if (model.gauge) {
      FormField eps =
          velocity_from_momentum(*model.gauge->density, gm, s.A, s.sigma);
      s.A.axpy(hdt, eps);
    }
  };
  if (scheme == Scheme::leapfrog) {
    drift(dt / 2);
    double tm = s.t + dt / 2;
    FormField ka, ks;
    if (model.matter) ka = matter_rhs(model, s, rep, tm, report);
    if (model.gauge) ks = gauge_rhs(model, s, rep, tm, report);
    if (model.matter) s.alpha.axpy(dt, ka);
    if (model.gauge) s.sigma.axpy(dt, ks);
    drift(dt / 2);
    s.t += dt;
    return;
  }
  auto deriv = [&](const State& y, double ty) {
    State dy = y;
    if (model.matter) {
      dy.phi = velocity_from_momentum(*model.matter->density, gm, y.phi, y.alpha);
      dy.alpha = matter_rhs(model, y, rep, ty, report);
    }
    if (model.gauge) {
      dy.A = velocity_from_momentum(*model.gauge->density, gm, y.A, y.sigma);
      dy.sigma = gauge_rhs(model, y, rep, ty, report);
    }
    return dy;
  };
  State k1 = deriv(s, s.t);
  State y2 = s;
  add_scaled(y2, dt / 2, k1);
  State k2 = deriv(y2, s.t + dt / 2);
  State y3 = s;
  add_scaled(y3, dt / 2, k2);
  State k3 = deriv(y3, s.t + dt / 2);
  State y4 = s;
  add_scaled(y4, dt, k3);
  State k4 = deriv(y4, s.t + dt);
  add_scaled(s, dt / 6, k1);
  add_scaled(s, dt / 3, k2);
  add_scaled(s, dt / 3, k3);
  add_scaled(s, dt / 6, k4);
  s.t += dt;
}

double max_stable_dt(const Model& model, double cfl) {
  double hmin = std::numeric_limits<double>::max();
  for (int i = 0; i < model.grid.m; ++i) hmin = std::min(hmin, model.grid.h[i]);
  double c = model.metric.max_wave_speed();
  if (c <= 0) throw NumericalGuard("degenerate metric: zero wave speed");
  return cfl * hmin / c;
}

double l2_norm(const FormField& f) {
  const RectGrid& g = f.grid;
  double vol = g.cell_volume();
  int per = f.nslots() * f.n;
  double acc = 0;
  long total = g.total();
  for (long node = 0; node < total; ++node) {
    double w = g.quad_weight(node);
    const double* p = f.node_ptr(node);
    double s = 0;
    for (int c = 0; c < per; ++c) s += p[c] * p[c];
    acc += w * s;
  }
  return std::sqrt(acc * vol);
}

double l2_norm(const Density& d) {
  const RectGrid& g = d.grid;
  double vol = g.cell_volume();
  double acc = 0;
  long total = g.total();
  for (long node = 0; node < total; ++node)
    acc += g.quad_weight(node) * d.v[node] * d.v[node];
  return std::sqrt(acc * vol);
}

double DiagRow::nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

namespace {

double face_power(const MetricField& gm, const LagrangianDensity& L,
                  const SectorForces& forces, double t, const Face& f,
                  const FormField& vel) {
  auto it = forces.boundary.find(face_key(f));
  if (it == forces.boundary.end() || it->second.zero) return 0.0;
  const RectGrid& g = gm.grid;
  int m = g.m, k = L.k, n = L.n;
  int nfs = slot_count(m - 1, k);
  if (nfs == 0) return 0.0;
  const FaceMetric& fm = gm.face_metric(f);
  const SlotTable& stf = slots(m - 1);
  const std::vector<double>& fib = L.fiber_metric();
  FaceField pv = boundary_pullback(vel, f);
  FaceDensity rho(f, fm.fgrid);
  std::vector<double> cvals(static_cast<size_t>(nfs) * n, 0.0);
  long ftotal = fm.fgrid.total();
  for (long fnode = 0; fnode < ftotal; ++fnode) {
    long vnode = g.face_to_volume(f, fnode);
    auto x = g.coords(vnode);
    it->second.fn(x, t, cvals.data());
    double acc = 0;
    for (int sl = 0; sl < nfs; ++sl) {
      for (int sl2 = 0; sl2 < nfs; ++sl2) {
        double gij = fm.inv_minor(fnode, stf.mask_of(k, sl), stf.mask_of(k, sl2));
        if (gij == 0.0) continue;
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b)
            acc += gij * fib[a * n + b] * cvals[sl2 * n + b] * pv.at(fnode, sl, a);
      }
    }
    rho.v[fnode] = fm.sqrtgb[fnode] * acc;
  }
  return integrate_face(rho, /*oriented=*/false);
}

void add_density(Density& dst, const Density& src) {
  for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

// divergence of a degree-1, fiber-1 field: sum_j d_j X^j
Density vector_divergence(const RectGrid& g, const FormField& x) {
  Density out(g);
  int m = g.m;
  std::vector<double> der(x.data.size());
  for (int axis = 0; axis < m; ++axis) {
    partial_derivative(g, axis, x.data.data(), der.data(), m);
    long total = g.total();
    for (long node = 0; node < total; ++node)
      out.v[node] += der[node * m + axis];
  }
  return out;
}

}  // namespace

DiagnosticsSeries::DiagnosticsSeries(const Model& model, long probe_node,
                                     int probe_slot, int probe_comp)
    : model_(&model),
      faces_(model.grid.boundary_faces()),
      probe_node_(probe_node),
      probe_slot_(probe_slot),
      probe_comp_(probe_comp) {}

void DiagnosticsSeries::push(const State& s) {
  const Model& M = *model_;
  const MetricField& gm = M.metric;
  const RectGrid& g = M.grid;
  DiagRow row;
  row.t = s.t;
  row.p_face.assign(faces_.size(), 0.0);
  Window w;
  w.t = s.t;
  w.energy = Density(g);
  w.fluxvec = FormField(g, 1, 1);
  w.source = Density(g);

  FormField chimat;  // physical matter flux dual, reused for the cross power
  SectorEval me, ge;
  if (M.matter) {
    const LagrangianDensity& L = *M.matter->density;
    me = matter_eval(M, s);
    Density ed = energy_density_field(L, gm, s.phi, me.vel, me.zeta);
    row.e_matter = integrate(ed);
    add_density(w.energy, ed);
    chimat = flux_dual_field(L, gm, s.phi, me.vel, me.zeta);
    w.fluxvec += contract_mixed(chimat, me.vel);
    if (auto F = interior_force_star(gm, L, M.matter->forces, s.t)) {
      Density src = contract_equal(*F, me.vel);
      row.p_interior += integrate(src);
      add_density(w.source, src);
    }
    FormField scratch = chimat;
    row.bc_res = std::max(
        row.bc_res, apply_boundary_currents(gm, L, M.matter->forces, s.t,
                                            Rep::star, scratch));
    for (size_t i = 0; i < faces_.size(); ++i)
      row.p_face[i] +=
          face_power(gm, L, M.matter->forces, s.t, faces_[i], me.vel);
    row.probe = s.phi.at(probe_node_, probe_slot_, probe_comp_);
  }
  if (M.gauge) {
    const LagrangianDensity& L = *M.gauge->density;
    int n = L.n;
    ge = gauge_eval(M, s);
    Density ed = energy_density_field(L, gm, s.A, ge.vel, ge.zeta);
    row.e_gauge = integrate(ed);
    add_density(w.energy, ed);
    FormField chihat = flux_dual_field(L, gm, s.A, ge.vel, ge.zeta);
    w.fluxvec += contract_mixed(chihat, ge.vel);
    if (auto F = interior_force_star(gm, L, M.gauge->forces, s.t)) {
      Density src = contract_equal(*F, ge.vel);
      row.p_interior += integrate(src);
      add_density(w.source, src);
    }
    FormField scratch = chihat;
    row.bc_res = std::max(
        row.bc_res, apply_boundary_currents(gm, L, M.gauge->forces, s.t,
                                            Rep::star, scratch));
    for (size_t i = 0; i < faces_.size(); ++i)
      row.p_face[i] +=
          face_power(gm, L, M.gauge->forces, s.t, faces_[i], ge.vel);
    if (!M.matter) row.probe = s.A.at(probe_node_, probe_slot_, probe_comp_);

    // charge and field-strength bookkeeping
    FormField E = ge.vel;
    E *= -1.0;
    w.rho = codifferential(ge.conn, gm, E);
    row.charge_norm = l2_norm(w.rho);
    FormField jd = current_field(g, 1, n, M.gauge->forces.interior, s.t);
    if (M.charged()) {
      FormField zflat = musical(me.zeta, gm, M.matter->density->fiber_metric(),
                                MusicalSlot::fiber, MusicalDir::flat);
      FormField jm = rep_action_adjoint(M.matter->rep, zflat, s.phi);
      std::vector<double> kinv = invert_small(M.gauge->lie.K, n);
      long total = g.total();
      int ns = jm.nslots();
      for (long node = 0; node < total; ++node)
        for (int sl = 0; sl < ns; ++sl)
          for (int a = 0; a < n; ++a) {
            double acc = 0;
            for (int b = 0; b < n; ++b)
              acc += kinv[a * n + b] * jm.at(node, sl, b);
            jd.at(node, sl, a) -= acc;
          }
    }
    w.d_current = codifferential(ge.conn, gm, jd);
    w.curv = ge.zeta;
    w.d_a_e = cov_ext_deriv(ge.conn, E);
    row.bianchi_dab = (g.m >= 3) ? l2_norm(cov_ext_deriv(ge.conn, ge.zeta)) : 0.0;
    w.has_gauge = true;
  }
  if (M.charged()) {
    double p1 = integrate(contract_equal(
        rep_action_adjoint(M.matter->rep, chimat, s.phi), ge.vel));
    double p2 = integrate(contract_equal(
        chimat, rep_action(M.matter->rep, ge.vel, s.phi)));
    row.cross_power = std::fabs(p1 - p2);
  }
  row.e_total = row.e_matter + row.e_gauge;
  for (double p : row.p_face) row.p_boundary += p;
  rows_.push_back(std::move(row));
  win_.push_back(std::move(w));
  if (win_.size() > 3) win_.pop_front();
  if (win_.size() == 3) finalize(rows_.size() - 2);
}

void DiagnosticsSeries::finalize(size_t center) {
  const Window& w0 = win_[0];
  const Window& w1 = win_[1];
  const Window& w2 = win_[2];
  const RectGrid& g = model_->grid;
  double dt2 = w2.t - w0.t;
  DiagRow& row = rows_[center];
  row.balance_res =
      std::fabs((rows_[center + 1].e_total - rows_[center - 1].e_total) / dt2 -
                row.p_interior - row.p_boundary);
  Density r = vector_divergence(g, w1.fluxvec);
  long total = g.total();
  for (long node = 0; node < total; ++node)
    r.v[node] += (w2.energy.v[node] - w0.energy.v[node]) / dt2 -
                 w1.source.v[node];
  row.local_balance_res = l2_norm(r);
  if (w1.has_gauge) {
    FormField rr = w2.rho;
    rr -= w0.rho;
    rr *= 1.0 / dt2;
    rr += w1.d_current;
    row.charge_res = l2_norm(rr);
    FormField rb = w2.curv;
    rb -= w0.curv;
    rb *= 1.0 / dt2;
    rb += w1.d_a_e;
    row.bianchi_rate_res = l2_norm(rb);
  }
}

namespace {

double max_finite(const std::vector<DiagRow>& rows,
                  double (*get)(const DiagRow&)) {
  double mx = 0;
  for (const auto& r : rows) {
    double v = get(r);
    if (std::isfinite(v)) mx = std::max(mx, v);
  }
  return mx;
}

}  // namespace

double DiagnosticsSeries::max_balance_residual() const {
  return max_finite(rows_, [](const DiagRow& r) { return r.balance_res; });
}
double DiagnosticsSeries::max_local_balance_residual() const {
  return max_finite(rows_, [](const DiagRow& r) { return r.local_balance_res; });
}
double DiagnosticsSeries::max_charge_residual() const {
  return max_finite(rows_, [](const DiagRow& r) { return r.charge_res; });
}
double DiagnosticsSeries::max_bianchi() const {
  double a = max_finite(rows_, [](const DiagRow& r) { return r.bianchi_dab; });
  double b =
      max_finite(rows_, [](const DiagRow& r) { return r.bianchi_rate_res; });
  return std::max(a, b);
}
double DiagnosticsSeries::max_cross_power() const {
  return max_finite(rows_, [](const DiagRow& r) { return r.cross_power; });
}
double DiagnosticsSeries::max_energy() const {
  return max_finite(rows_, [](const DiagRow& r) { return std::fabs(r.e_total); });
}

namespace {

Model forceless_copy(const Model& model) {
  Model m2 = model;
  if (m2.matter) m2.matter->forces = SectorForces{};
  if (m2.gauge) m2.gauge->forces = SectorForces{};
  return m2;
}

struct SampleRef {
  int sector;  // 0 matter, 1 gauge
  long node;
  int slot, comp;
};

std::vector<SampleRef> draw_samples(const Model& model, int nsamples,
                                    std::mt19937& rng) {
  std::vector<SampleRef> out;
  std::vector<int> sectors;
  if (model.matter) sectors.push_back(0);
  if (model.gauge) sectors.push_back(1);
  if (sectors.empty()) throw std::logic_error("model has no sectors");
  long total = model.grid.total();
  for (int i = 0; i < nsamples; ++i) {
    SampleRef sr;
    sr.sector = sectors[i % sectors.size()];
    sr.node = std::uniform_int_distribution<long>(0, total - 1)(rng);
    int k = sr.sector == 0 ? 0 : 1;
    int n = sr.sector == 0 ? model.matter->density->n : model.gauge->density->n;
    sr.slot =
        std::uniform_int_distribution<int>(0, slot_count(model.grid.m, k) - 1)(rng);
    sr.comp = std::uniform_int_distribution<int>(0, n - 1)(rng);
    out.push_back(sr);
  }
  return out;
}

// Spatial part of the action: quadrature sum of both sector densities with
// velocities held fixed.
double spatial_action(const Model& model, const State& s, const FormField* nu0,
                      const FormField* eps0) {
  double acc = 0;
  if (model.matter) {
    SectorEval e = matter_eval(model, s);
    acc += integrate(lagrangian_field(*model.matter->density, model.metric,
                                      s.phi, *nu0, e.zeta));
  }
  if (model.gauge) {
    FormField beta = curvature(s.A, model.gauge->lie);
    acc += integrate(lagrangian_field(*model.gauge->density, model.metric, s.A,
                                      *eps0, beta));
  }
  return acc;
}

}  // namespace

double interior_gradient_check(const Model& model, const State& s, double t,
                               double fd_step, int nsamples, unsigned seed) {
  Model m2 = forceless_copy(model);
  const RectGrid& g = model.grid;
  FormField nu0, eps0;
  if (model.matter)
    nu0 = velocity_from_momentum(*model.matter->density, model.metric, s.phi,
                                 s.alpha);
  if (model.gauge)
    eps0 = velocity_from_momentum(*model.gauge->density, model.metric, s.A,
                                  s.sigma);
  FormField rm, rg;
  if (model.matter) rm = matter_rhs(m2, s, Rep::star, t);
  if (model.gauge) rg = gauge_rhs(m2, s, Rep::star, t);
  double scale = std::max(model.matter ? max_abs(rm) : 0.0,
                          model.gauge ? max_abs(rg) : 0.0);
  if (scale == 0) scale = 1;
  std::mt19937 rng(seed);
  auto samples = draw_samples(model, nsamples, rng);
  double hm = g.cell_volume();
  double worst = 0;
  State y = s;
  for (const auto& sr : samples) {
    FormField& cfg = sr.sector == 0 ? y.phi : y.A;
    double keep = cfg.at(sr.node, sr.slot, sr.comp);
    double w = g.quad_weight(sr.node);
    cfg.at(sr.node, sr.slot, sr.comp) = keep + fd_step;
    double lp = spatial_action(m2, y, &nu0, &eps0);
    cfg.at(sr.node, sr.slot, sr.comp) = keep - fd_step;
    double lm = spatial_action(m2, y, &nu0, &eps0);
    cfg.at(sr.node, sr.slot, sr.comp) = keep;
    double fd = (lp - lm) / (2 * fd_step * w * hm);
    double ref = (sr.sector == 0 ? rm : rg).at(sr.node, sr.slot, sr.comp);
    worst = std::max(worst, std::fabs(fd - ref));
  }
  return worst / scale;
}

double action_gradient_check(const Model& model, const State& s0, double dt,
                             int steps, double fd_step, int nsamples,
                             unsigned seed) {
  if (steps < 3) throw std::invalid_argument("action check needs >= 3 steps");
  const MetricField& gm = model.metric;
  const RectGrid& g = model.grid;
  std::mt19937 rng(seed);

  // Midpoint configurations of a leapfrog run satisfy the discrete equations;
  // perturb them so both sides of the identity are nonzero.
  std::vector<State> q(steps + 1);
  {
    State cur = s0;
    auto drift = [&](double hdt) {
      if (model.matter) {
        FormField nu =
            velocity_from_momentum(*model.matter->density, gm, cur.phi, cur.alpha);
        cur.phi.axpy(hdt, nu);
      }
      if (model.gauge) {
        FormField eps =
            velocity_from_momentum(*model.gauge->density, gm, cur.A, cur.sigma);
        cur.A.axpy(hdt, eps);
      }
    };
    for (int i = 0; i < steps; ++i) {
      drift(dt / 2);
      q[i] = cur;
      q[i].t = s0.t + i * dt + dt / 2;
      double tm = q[i].t;
      FormField ka, ks;
      if (model.matter) ka = matter_rhs(model, cur, Rep::star, tm);
      if (model.gauge) ks = gauge_rhs(model, cur, Rep::star, tm);
      if (model.matter) cur.alpha.axpy(dt, ka);
      if (model.gauge) cur.sigma.axpy(dt, ks);
      drift(dt / 2);
      cur.t += dt;
    }
    drift(dt / 2);
    q[steps] = cur;
    q[steps].t = s0.t + steps * dt + dt / 2;
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (auto& st : q) {
      if (model.matter)
        for (double& v : st.phi.data) v += u(rng);
      if (model.gauge)
        for (double& v : st.A.data) v += u(rng);
    }
  }

  // One summand of the discrete action: dt * [ L(q_i, (q_{i+1}-q_i)/dt) +
  // interior force pairing at the kick time ].
  auto action_term = [&](int i) {
    double acc = 0;
    double ti = q[i].t;
    if (model.matter) {
      FormField nu = q[i + 1].phi;
      nu -= q[i].phi;
      nu *= 1.0 / dt;
      State tmp = q[i];
      SectorEval e = matter_eval(model, tmp);
      acc += integrate(lagrangian_field(*model.matter->density, gm, q[i].phi,
                                        nu, e.zeta));
      if (auto F = interior_force_star(gm, *model.matter->density,
                                       model.matter->forces, ti))
        acc += integrate(contract_equal(*F, q[i].phi));
    }
    if (model.gauge) {
      FormField eps = q[i + 1].A;
      eps -= q[i].A;
      eps *= 1.0 / dt;
      FormField beta = curvature(q[i].A, model.gauge->lie);
      acc += integrate(lagrangian_field(*model.gauge->density, gm, q[i].A, eps,
                                        beta));
      if (auto F = interior_force_star(gm, *model.gauge->density,
                                       model.gauge->forces, ti))
        acc += integrate(contract_equal(*F, q[i].A));
    }
    return dt * acc;
  };

  // Momentum between q_i and q_{i+1}.
  auto momentum_between = [&](int i, int sector) {
    if (sector == 0) {
      FormField nu = q[i + 1].phi;
      nu -= q[i].phi;
      nu *= 1.0 / dt;
      State tmp = q[i];
      SectorEval e = matter_eval(model, tmp);
      return momentum_field(*model.matter->density, gm, q[i].phi, nu, e.zeta);
    }
    FormField eps = q[i + 1].A;
    eps -= q[i].A;
    eps *= 1.0 / dt;
    FormField beta = curvature(q[i].A, model.gauge->lie);
    return momentum_field(*model.gauge->density, gm, q[i].A, eps, beta);
  };

  auto samples = draw_samples(model, nsamples, rng);
  double hm = g.cell_volume();
  double worst = 0, scale = 0;
  for (const auto& sr : samples) {
    int j = std::uniform_int_distribution<int>(1, steps - 1)(rng);
    // implemented discrete equation residual at q_j
    FormField pj = momentum_between(j, sr.sector);
    FormField pjm = momentum_between(j - 1, sr.sector);
    State at = q[j];
    if (sr.sector == 0)
      at.alpha = pj;
    else
      at.sigma = pj;
    FormField rhs = sr.sector == 0 ? matter_rhs(model, at, Rep::star, q[j].t)
                                   : gauge_rhs(model, at, Rep::star, q[j].t);
    double d = (pj.at(sr.node, sr.slot, sr.comp) -
                pjm.at(sr.node, sr.slot, sr.comp)) /
                   dt -
               rhs.at(sr.node, sr.slot, sr.comp);
    // finite difference of the two action terms touching q_j
    FormField& cfg = sr.sector == 0 ? q[j].phi : q[j].A;
    double keep = cfg.at(sr.node, sr.slot, sr.comp);
    double w = g.quad_weight(sr.node);
    cfg.at(sr.node, sr.slot, sr.comp) = keep + fd_step;
    double sp = action_term(j - 1) + action_term(j);
    cfg.at(sr.node, sr.slot, sr.comp) = keep - fd_step;
    double sm = action_term(j - 1) + action_term(j);
    cfg.at(sr.node, sr.slot, sr.comp) = keep;
    double fd = (sp - sm) / (2 * fd_step * w * hm * dt);
    worst = std::max(worst, std::fabs(fd + d));
    scale = std::max({scale, std::fabs(fd), std::fabs(d)});
  }
  if (scale == 0) scale = 1;
  return worst / scale;
}

}  // namespace ff
