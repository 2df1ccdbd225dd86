#pragma once

#include "fieldflow/grid.hpp"

#include <iosfwd>
#include <vector>

namespace ff {

// Bundle-valued degree-k form sampled at grid nodes: components phi^a_I over
// the canonical multi-index slots. The same storage carries star-representation
// dual densities (components chi_a^I relative to d^m x), so linear algebra is
// shared. Layout: data[(node * nslots + slot) * n + a].
struct FormField {
  RectGrid grid;
  int k = 0, n = 1;
  std::vector<double> data;

  FormField() = default;
  FormField(const RectGrid& g, int k_, int n_);

  int nslots() const { return slot_count(grid.m, k); }
  long size() const { return (long)data.size(); }
  double& at(long node, int slot, int a) {
    return data[(node * nslots() + slot) * n + a];
  }
  double at(long node, int slot, int a) const {
    return data[(node * nslots() + slot) * n + a];
  }
  double* node_ptr(long node) { return &data[node * nslots() * n]; }
  const double* node_ptr(long node) const { return &data[node * nslots() * n]; }

  void fill(double v);
  FormField& operator+=(const FormField& o);
  FormField& operator-=(const FormField& o);
  FormField& operator*=(double s);
  void axpy(double s, const FormField& o);  // this += s * o
};

double max_abs(const FormField& f);
double max_abs_diff(const FormField& a, const FormField& b);

// Degree-k form living on one boundary face, components over tangential
// multi-index slots in local face-axis numbering.
struct FaceField {
  Face face;
  RectGrid fgrid;
  int k = 0, n = 1;
  std::vector<double> data;

  FaceField() = default;
  FaceField(const Face& f, const RectGrid& fg, int k_, int n_);

  int nslots() const { return slot_count(fgrid.m, k); }
  double& at(long fnode, int slot, int a) {
    return data[(fnode * nslots() + slot) * n + a];
  }
  double at(long fnode, int slot, int a) const {
    return data[(fnode * nslots() + slot) * n + a];
  }
  void fill(double v);
};

double max_abs_diff(const FaceField& a, const FaceField& b);

// Scalar multiple of the coordinate volume d^m x per node.
struct Density {
  RectGrid grid;
  std::vector<double> v;
  Density() = default;
  explicit Density(const RectGrid& g) : grid(g), v(g.total(), 0.0) {}
};

struct FaceDensity {
  Face face;
  RectGrid fgrid;
  std::vector<double> v;
  FaceDensity() = default;
  FaceDensity(const Face& f, const RectGrid& fg)
      : face(f), fgrid(fg), v(fg.total(), 0.0) {}
};

// The two representations of the restricted dual space.
enum class Rep { star, dagger };

// Restricted-dual element: an interior part on the volume grid plus one part
// per bounded face. Star representation: interior stores upper components
// chi_a^I over degree-k slots (relative to d^m x); each face part stores
// tangential degree-k star components. Dagger representation: interior is an
// (m-k)-form, face parts are (m-1-k)-forms, all fiber-dual.
struct DualField {
  Rep rep = Rep::star;
  int k = 0;  // degree of the forms this element pairs with
  FormField interior;
  std::vector<FaceField> boundary;
};

DualField make_dual(const RectGrid& g, Rep rep, int k, int n);

// Plain-text snapshot: one header line (m k n N...) then one line per node
// with coordinates and all components, written with %.17g.
void write_snapshot(std::ostream& os, const FormField& f);

}  // namespace ff
