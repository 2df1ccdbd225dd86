#pragma once

#include "fieldflow/exterior.hpp"
#include "fieldflow/lagrangian.hpp"

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>

namespace ff {

// Raised when a run would be numerically unsound (stability bound violated,
// degenerate geometry).
struct NumericalGuard : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Prescribed source current evaluated at a point and time. `fn` writes the
// physics components in FormField order ([slot][fiber]); a zero entry is
// skipped entirely.
struct CurrentFn {
  std::function<void(const std::array<double, 3>& x, double t, double* out)> fn;
  bool zero = true;
};

// External currents of one sector: an interior current over the sector's
// configuration slots, and per bounded face a tangential boundary current
// over slot_count(m-1, k) face slots. Faces without an entry carry the zero
// current (natural reflecting end).
struct SectorForces {
  CurrentFn interior;
  std::map<int, CurrentFn> boundary;  // keyed by face_key
};

struct MatterSector {
  std::shared_ptr<const LagrangianDensity> density;  // degree 0
  Representation rep;  // gauge coupling; rep.zero => uncharged
  SectorForces forces;
};

struct GaugeSector {
  std::shared_ptr<const LagrangianDensity> density;  // degree 1
  LieAlgebra lie;
  SectorForces forces;
};

struct Model {
  RectGrid grid;
  MetricField metric;
  std::optional<MatterSector> matter;
  std::optional<GaugeSector> gauge;
  bool charged() const { return matter && gauge && !matter->rep.zero; }
};

// Phase-space state: configurations and their star-representation conjugate
// momenta. Fields of absent sectors stay empty.
struct State {
  double t = 0;
  FormField phi, alpha;  // matter
  FormField A, sigma;    // gauge
};

State initial_state(const Model& model);

enum class Scheme { leapfrog, rk4 };
Scheme parse_scheme(const std::string& s);
Rep parse_rep(const std::string& s);

struct AssembleReport {
  double boundary_residual = 0;  // trace-equation mismatch before enforcement
};

// Prescribes the normal-flux trace of the dual `flux` on every bounded face
// from the sector's boundary currents (zero current where none is given).
// Star representation mutates the components chi^{I u d}; the dagger
// representation mutates the isomorphic tangential components of the
// (m-k-1)-form. Returns the largest pre-override mismatch.
double apply_boundary_currents(const MetricField& gm, const LagrangianDensity& L,
                               const SectorForces& forces, double t, Rep rep,
                               FormField& flux);

// Star-representation interior force field sqrt(g) g^{IJ} fib(cur_J, .) of a
// sector; empty optional when the current is zero.
std::optional<FormField> interior_force_star(const MetricField& gm,
                                             const LagrangianDensity& L,
                                             const SectorForces& forces,
                                             double t);

// Momentum rates assembled in the requested dual representation and mapped
// back to star components. Time enters only through external currents.
FormField matter_rhs(const Model& model, const State& s, Rep rep, double t,
                     AssembleReport* report = nullptr);
FormField gauge_rhs(const Model& model, const State& s, Rep rep, double t,
                    AssembleReport* report = nullptr);

// One time step. Leapfrog drifts configurations a half step, kicks momenta
// with rates evaluated at the half-step configurations and time, then drifts
// again; rk4 is the classical four-stage scheme on the first-order system.
void step(const Model& model, State& s, double dt, Scheme scheme, Rep rep,
          AssembleReport* report = nullptr);

// Largest dt the grid supports: cfl * min(h) / max wave speed.
double max_stable_dt(const Model& model, double cfl);

// Weighted norms (trapezoid quadrature times cell volume).
double l2_norm(const FormField& f);
double l2_norm(const Density& d);

// Per-sample diagnostics. Columns that need a time derivative are filled by
// centered differences once both neighbours exist and stay NaN at the ends.
struct DiagRow {
  double t = 0;
  double e_total = 0, e_matter = 0, e_gauge = 0;
  double p_interior = 0, p_boundary = 0;
  std::vector<double> p_face;  // aligned with grid.boundary_faces()
  double balance_res = nan_value();
  double bc_res = 0;
  double local_balance_res = nan_value();
  double charge_norm = 0;
  double charge_res = nan_value();
  double bianchi_dab = 0;
  double bianchi_rate_res = nan_value();
  double cross_power = 0;
  double probe = 0;
  static double nan_value();
};

class DiagnosticsSeries {
public:
  DiagnosticsSeries(const Model& model, long probe_node = 0, int probe_slot = 0,
                    int probe_comp = 0);
  void push(const State& s);
  const std::vector<DiagRow>& rows() const { return rows_; }
  const std::vector<Face>& faces() const { return faces_; }

  // Largest finite residual over interior samples.
  double max_balance_residual() const;
  double max_local_balance_residual() const;
  double max_charge_residual() const;
  double max_bianchi() const;  // max over both Bianchi columns
  double max_cross_power() const;
  double max_energy() const;

private:
  struct Window {
    double t;
    double e_total;
    Density energy;     // total energy density
    FormField fluxvec;  // degree-1 energy flux X^j
    Density source;     // interior power density
    FormField rho;      // gauge charge 0-form
    FormField d_current;  // codifferential of (J - J_matter)
    FormField curv;       // field strength
    FormField d_a_e;      // covariant differential of E
    bool has_gauge = false;
  };
  void finalize(size_t center);

  const Model* model_;
  std::vector<Face> faces_;
  long probe_node_;
  int probe_slot_, probe_comp_;
  std::vector<DiagRow> rows_;
  std::deque<Window> win_;
};

// Largest relative deviation between the assembled momentum rate (external
// currents removed) and a central finite difference of the spatial action
// sum over `nsamples` random components. Exact bookkeeping requires fully
// periodic grids.
double interior_gradient_check(const Model& model, const State& s, double t,
                               double fd_step, int nsamples, unsigned seed);

// Same comparison for the full discrete action of a leapfrog trajectory:
// finite differences of sum_i dt L(q_i, (q_{i+1}-q_i)/dt, t_i) against the
// implemented discrete equations of motion at interior times.
double action_gradient_check(const Model& model, const State& s0, double dt,
                             int steps, double fd_step, int nsamples,
                             unsigned seed);

}  // namespace ff
