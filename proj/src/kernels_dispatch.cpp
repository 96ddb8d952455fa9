#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"
#include "rcav/errors.hpp"

namespace rcav::kernels {

const KernelTable* avx2_table() {
#if defined(RCAV_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(RCAV_HAVE_NEON)
  return &neon_table_unchecked();
#else
  return nullptr;
#endif
}

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (auto* t = avx2_table()) out.push_back(t);
  if (auto* t = neon_table()) out.push_back(t);
  return out;
}

namespace {

const KernelTable& select() {
  const char* env = std::getenv("RCAV_KERNELS");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return scalar_table();
  if (want == "avx2") {
    if (auto* t = avx2_table()) return *t;
    throw ConfigError("RCAV_KERNELS=avx2 but AVX2+FMA is not available");
  }
  if (want == "neon") {
    if (auto* t = neon_table()) return *t;
    throw ConfigError("RCAV_KERNELS=neon but NEON is not available");
  }
  if (want != "auto") throw ConfigError("unknown RCAV_KERNELS value: " + want);
  if (auto* t = avx2_table()) return *t;
  if (auto* t = neon_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace rcav::kernels
