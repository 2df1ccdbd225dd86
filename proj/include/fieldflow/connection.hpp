#pragma once

#include "fieldflow/exterior.hpp"

#include <string>

namespace ff {

// Finite-dimensional Lie algebra in a fixed working basis.
// f[(a*n + b)*n + c] = f^a_{bc} (structure constants), K = invariant pairing
// (negative definite for the compact algebras used here).
struct LieAlgebra {
  std::string name;
  int n = 1;
  std::vector<double> f;
  std::vector<double> K;
  double f_at(int a, int b, int c) const { return f[(a * n + b) * n + c]; }
  bool abelian() const;
  // max violation of antisymmetry, Jacobi, and ad-invariance of K
  double validate() const;
};

LieAlgebra lie_u1();
LieAlgebra lie_su2();               // basis scaled so that K = -identity
LieAlgebra lie_abelian(int n);      // f = 0, K = -identity

// Linear fiber representation of the Lie algebra on R^p with an invariant
// fiber metric kappa: rho[(c*p + i)*p + j] = (rho_c)^i_j.
struct Representation {
  int p = 1;
  int nlie = 1;
  std::vector<double> rho;
  std::vector<double> kappa;
  bool zero = false;  // uncharged matter fast path
  double rho_at(int c, int i, int j) const { return rho[(c * p + i) * p + j]; }
  // max violation of kappa-antisymmetry of each rho_c
  double validate_invariance() const;
};

Representation rep_trivial(int p, int nlie);
Representation rep_adjoint(const LieAlgebra& la);

// Connection coefficients per node and axis acting on an n-dimensional fiber:
// gamma[((node*m + i)*n + a)*n + b] = (Gamma_i)^a_b.
struct ConnectionField {
  RectGrid grid;
  int n = 1;
  bool zero = true;
  std::vector<double> gamma;
  double at(long node, int axis, int a, int b) const {
    return gamma[((node * grid.m + axis) * n + a) * n + b];
  }
};

ConnectionField connection_zero(const RectGrid& g, int n);
// Adjoint-representation connection of a gauge potential: Gamma^a_{i,c} = f^a_{bc} A^b_i.
ConnectionField induced_adjoint(const FormField& A, const LieAlgebra& la);
// Matter connection through a representation: Gamma^p_{i,q} = (rho_c)^p_q A^c_i.
ConnectionField induced_rep(const FormField& A, const Representation& rep);

// Covariant exterior derivative on fiber-valued k-forms:
// (d phi)^a_L = sum_{i in L} merge_sign(i, L\i) (d_i phi^a_{L\i} + Gamma^a_{i,b} phi^b_{L\i}).
FormField cov_ext_deriv(const ConnectionField& conn, const FormField& phi);

// The dual connection's exterior derivative on fiber-dual forms: same with
// -Gamma^b_{i,a}.
FormField dual_cov_ext_deriv(const ConnectionField& conn, const FormField& eta);

// Boundary trace of star components of an upper degree-q element: tangential
// degree-(q-1) star data on the face, relative to the coordinate face volume:
// (tr chi)_I = merge_sign(d, I) * (-1)^d * chi^{sort(I u d)}  (d = face axis).
FaceField trace_on_face(const FormField& chi, const Face& f);

// Covariant divergence of star components (the integration-by-parts adjoint of
// cov_ext_deriv): (div chi)_a^I =
//   (-1)^{|I|} sum_{j not in I} merge_sign(j, I) (d_j chi_a^{sort(I u j)} - Gamma^b_{j,a} chi_b^{sort(I u j)}).
// Equals (-1)^{|I|} times dual_cov_ext_deriv of the trace, reassembled.
FormField cov_divergence(const ConnectionField& conn, const FormField& chi);

// Curvature 2-form of a gauge potential:
// B^a_{ij} = d_i A^a_j - d_j A^a_i + f^a_{bc} A^b_i A^c_j  (i < j).
FormField curvature(const FormField& A, const LieAlgebra& la);

// Codifferential on k-forms: (-1)^{m(k+1)+1} star d^nabla star.
FormField codifferential(const ConnectionField& conn, const MetricField& gm,
                         const FormField& w);

// Pointwise representation action on matter 0-forms: for a Lie-algebra-valued
// j-form xi, out^p_I = (rho_c)^p_q xi^c_I phi^q.
FormField rep_action(const Representation& rep, const FormField& xi,
                     const FormField& phi);

// Its pointwise adjoint on star components: for matter-dual eta (degree-j
// slots), out_c^I = eta_p^I (rho_c phi)^p.
FormField rep_action_adjoint(const Representation& rep, const FormField& eta,
                             const FormField& phi);

}  // namespace ff
