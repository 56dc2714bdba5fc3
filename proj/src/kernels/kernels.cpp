#include "gfn/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gfn::kernels {
namespace {

const Ops* g_active = nullptr;

const Ops& resolve() {
  if (const char* env = std::getenv("GFNLAB_KERNELS")) {
    std::string s(env);
    if (s == "scalar") return scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
    if (s == "avx2" && avx2_supported()) return avx2_ops();
#endif
    if (!s.empty()) return scalar_ops();
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) return avx2_ops();
#endif
  return scalar_ops();
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Ops& active() {
  if (!g_active) g_active = &resolve();
  return *g_active;
}

void force_backend(std::string_view name) {
  if (name == "scalar") {
    g_active = &scalar_ops();
    return;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (name == "avx2") {
    if (!avx2_supported()) throw std::runtime_error("avx2 not supported on this cpu");
    g_active = &avx2_ops();
    return;
  }
#endif
  throw std::runtime_error("unknown kernel backend: " + std::string(name));
}

}  // namespace gfn::kernels
