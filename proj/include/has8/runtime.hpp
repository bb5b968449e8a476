#pragma once

namespace has8 {

// Keeps freed blocks inside the process heap instead of returning large
// tensors to the OS after every step. Training allocates and frees the same
// multi-megabyte buffers each iteration; without this every step pays for
// fresh page faults. No-op outside glibc.
void tune_allocator();

}  // namespace has8
