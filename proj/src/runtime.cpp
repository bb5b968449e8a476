#include "has8/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace has8 {

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace has8
