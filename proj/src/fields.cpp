#include "fieldflow/fields.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace ff {

FormField::FormField(const RectGrid& g, int k_, int n_) : grid(g), k(k_), n(n_) {
  if (k < 0 || k > grid.m) throw std::invalid_argument("form degree out of range");
  if (n < 1) throw std::invalid_argument("fiber dimension must be positive");
  data.assign(grid.total() * nslots() * n, 0.0);
}

void FormField::fill(double v) {
  for (auto& x : data) x = v;
}

FormField& FormField::operator+=(const FormField& o) {
  for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
  return *this;
}

FormField& FormField::operator-=(const FormField& o) {
  for (size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
  return *this;
}

FormField& FormField::operator*=(double s) {
  for (auto& x : data) x *= s;
  return *this;
}

void FormField::axpy(double s, const FormField& o) {
  for (size_t i = 0; i < data.size(); ++i) data[i] += s * o.data[i];
}

double max_abs(const FormField& f) {
  double m = 0;
  for (double x : f.data) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const FormField& a, const FormField& b) {
  if (a.data.size() != b.data.size())
    throw std::invalid_argument("field size mismatch");
  double m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

FaceField::FaceField(const Face& f, const RectGrid& fg, int k_, int n_)
    : face(f), fgrid(fg), k(k_), n(n_) {
  // Degrees outside [0, dim] denote the zero space (no components).
  data.assign(fgrid.total() * nslots() * n, 0.0);
}

void FaceField::fill(double v) {
  for (auto& x : data) x = v;
}

double max_abs_diff(const FaceField& a, const FaceField& b) {
  if (a.data.size() != b.data.size())
    throw std::invalid_argument("face field size mismatch");
  double m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

DualField make_dual(const RectGrid& g, Rep rep, int k, int n) {
  DualField d;
  d.rep = rep;
  d.k = k;
  int m = g.m;
  d.interior = FormField(g, rep == Rep::star ? k : m - k, n);
  for (const Face& f : g.boundary_faces()) {
    int fk = rep == Rep::star ? k : m - 1 - k;
    d.boundary.emplace_back(f, g.face_grid(f), fk, n);
  }
  return d;
}

void write_snapshot(std::ostream& os, const FormField& f) {
  char buf[64];
  os << f.grid.m << ' ' << f.k << ' ' << f.n;
  for (int i = 0; i < f.grid.m; ++i) os << ' ' << f.grid.N[i];
  os << '\n';
  for (long node = 0; node < f.grid.total(); ++node) {
    auto x = f.grid.coords(node);
    for (int i = 0; i < f.grid.m; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", x[i]);
      os << buf << ' ';
    }
    const double* p = f.node_ptr(node);
    int count = f.nslots() * f.n;
    for (int c = 0; c < count; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", p[c]);
      os << buf << (c + 1 == count ? '\n' : ' ');
    }
  }
}

}  // namespace ff
