#pragma once

#include "fieldflow/fields.hpp"

namespace ff {

// Hodge star of a degree-k form: (*w)_L = sqrt(g) sigma(Lc) g^{Lc,J} w_J,
// applied per fiber component. Satisfies a ^ *b = <a,b>_g mu_g and
// ** = (-1)^{k(m-k)}.
FormField hodge_star(const FormField& w, const MetricField& gm);

// Hodge star of tangential forms on one bounded face, with the induced face
// metric and the coordinate orientation of the face (ascending tangential
// axes). Multiply by face_orientation(f) for the outward-oriented star.
FaceField hodge_star_face(const FaceField& w, const MetricField& gm);

enum class MusicalSlot { base, fiber };
enum class MusicalDir { sharp, flat };

// Index raising/lowering. Base: all k base indices via minors of g / ginv.
// Fiber: the single fiber index via a constant fiber metric (row-major n x n).
FormField musical(const FormField& w, const MetricField& gm,
                  const std::vector<double>& fiber_metric, MusicalSlot which,
                  MusicalDir dir);

// Equal-degree contraction of star components with a form: chi_a^I phi^a_I.
Density contract_equal(const FormField& chi, const FormField& phi);
FaceDensity contract_equal_face(const FaceField& chi, const FaceField& phi);

// Mixed contraction of an upper degree-(k+1) star element with a degree-k
// form: the vector-density components X^j = sum_{K not containing j}
// merge_sign(j, K) chi_a^{sort(K u j)} phi^a_K, returned as a degree-1,
// fiber-1 field.
FormField contract_mixed(const FormField& chi, const FormField& phi);

// Graded wedge of a fiber-valued p-form with a fiber-dual q-form, contracting
// the fiber index: (w ^ eta)_L = sum_{I u J = L} merge_sign(I, J) w^a_I eta_{J,a}.
FormField wedge_fiber(const FormField& w, const FormField& eta);
Density wedge_top(const FormField& w, const FormField& eta);  // p + q = m
FaceDensity wedge_top_face(const FaceField& w, const FaceField& eta);

// The interior-product isomorphism between the two dual representations:
// star components chi_a^J  ->  (m-k)-form (Phi chi)_{L,a} = sigma(Lc) chi_a^{Lc},
// inverse (Phi^{-1} beta)_a^J = sigma(J) beta_{Jc,a}.
FormField phi_iso(const FormField& chi);
FormField phi_iso_inv(const FormField& beta);
FaceField phi_iso_face(const FaceField& chi);
FaceField phi_iso_face_inv(const FaceField& beta);
DualField to_dagger(const DualField& d);
DualField to_star(const DualField& d);

// iota^*: restriction of a form to a face, keeping tangential components
// (local face-axis numbering).
FaceField boundary_pullback(const FormField& w, const Face& f);

// Quadrature: trapezoid weights times cell volume.
double integrate(const Density& rho);
// Face quadrature; `oriented` additionally weights by face_orientation.
double integrate_face(const FaceDensity& rho, bool oriented);

// Full duality pairing of a restricted dual with a form: interior integral
// plus outward-oriented face integrals, in the dual's own representation.
double pairing(const DualField& d, const FormField& phi);

}  // namespace ff
