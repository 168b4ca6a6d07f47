#include "pk/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace pk::kernels {

namespace {

const Table& select() {
  const char* env = std::getenv("PK_KERNELS");
  const std::string_view want = env != nullptr ? env : "";
  if (want == "scalar") return scalar::table();
  if (avx2::supported()) return avx2::table();
  return scalar::table();
}

}  // namespace

const Table& active() {
  static const Table& t = select();
  return t;
}

}  // namespace pk::kernels
