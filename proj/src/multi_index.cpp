#include "fieldflow/multi_index.hpp"

#include <bit>
#include <stdexcept>

namespace ff {

Mask full_mask(int m) { return (1u << m) - 1u; }

Mask mask_complement(Mask I, int m) { return ~I & full_mask(m); }

int mask_size(Mask I) { return std::popcount(I); }

int merge_sign(Mask A, Mask B) {
  if (A & B) return 0;
  int inversions = 0;
  for (int b = 0; b < 8; ++b)
    if (B & (1u << b)) inversions += std::popcount(A >> (b + 1));
  return (inversions % 2 == 0) ? 1 : -1;
}

int merge_sign_axis(int axis, Mask I) { return merge_sign(1u << axis, I); }

int interior_sign(Mask I, int m) { return merge_sign(I, mask_complement(I, m)); }

void axes_of(Mask I, int* out, int& count) {
  count = 0;
  for (int i = 0; i < 8; ++i)
    if (I & (1u << i)) out[count++] = i;
}

SlotTable::SlotTable(int m) : m_(m) {
  if (m < 0 || m > 3) throw std::invalid_argument("SlotTable: dimension must be 0..3");
  for (auto& row : lookup_) row.fill(-1);
  // Ascending masks enumerate each degree in lexicographic tuple order for m <= 3.
  for (Mask I = 0; I <= full_mask(m); ++I) {
    int k = mask_size(I);
    lookup_[k][I] = (int8_t)slots_[k].size();
    slots_[k].push_back(I);
  }
}

const SlotTable& slots(int m) {
  static const SlotTable t0(0), t1(1), t2(2), t3(3);
  switch (m) {
    case 0: return t0;
    case 1: return t1;
    case 2: return t2;
    case 3: return t3;
    default: throw std::invalid_argument("slots: dimension must be 0..3");
  }
}

int slot_count(int m, int k) {
  if (k < 0 || k > m) return 0;
  return slots(m).count(k);
}

}  // namespace ff
