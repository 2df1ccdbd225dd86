#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ff {

// A strictly increasing tuple of axes (a multi-index) in dimension m <= 3 is
// stored as a bitmask: bit i set means axis i is present.
using Mask = unsigned;

Mask full_mask(int m);
Mask mask_complement(Mask I, int m);
int mask_size(Mask I);

// Sign of the permutation sorting the concatenation (A, B) of two disjoint
// ascending tuples; 0 if they overlap.
int merge_sign(Mask A, Mask B);

// merge_sign of a single axis prepended to an ascending tuple.
int merge_sign_axis(int axis, Mask I);

// sigma(I): the sign in  i_{e_I} dx^{1..m} = sigma(I) dx^{complement of I},
// with left interior multiplication applied axis by axis in ascending order.
int interior_sign(Mask I, int m);

// Axes contained in I, ascending. `out` must hold >= 3 ints.
void axes_of(Mask I, int* out, int& count);

// Canonical ordering of the degree-k multi-indices in dimension m
// (lexicographic in the ascending tuples) and the reverse lookup.
class SlotTable {
public:
  explicit SlotTable(int m);
  int dim() const { return m_; }
  int count(int k) const { return (int)slots_[k].size(); }
  Mask mask_of(int k, int slot) const { return slots_[k][slot]; }
  int slot_of(int k, Mask I) const { return lookup_[k][I]; }

private:
  int m_;
  std::array<std::vector<Mask>, 4> slots_;
  std::array<std::array<int8_t, 8>, 5> lookup_;
};

// Shared tables for m = 0..3 (m = 0 serves 0-dimensional boundary grids).
const SlotTable& slots(int m);

// Number of degree-k slots in dimension m: binomial(m, k).
int slot_count(int m, int k);

}  // namespace ff
