#pragma once

#include "rcav/kernels.hpp"

namespace rcav::kernels {

// Defined in the per-ISA translation units; only called after the CPU check.
const KernelTable& avx2_table_unchecked();
const KernelTable& neon_table_unchecked();

}  // namespace rcav::kernels
