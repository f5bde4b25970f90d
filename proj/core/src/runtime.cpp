#include "crossview/runtime.hpp"

#include <cblas-openblas.h>

#include <cstdlib>
#include <cstring>

namespace crossview {

namespace {
bool g_deterministic = false;
bool g_initialized = false;
}  // namespace

void init_runtime() {
  if (g_initialized) return;
  g_initialized = true;
  const char* flag = std::getenv("CROSSVIEW_DETERMINISTIC");
  g_deterministic = flag != nullptr && std::strcmp(flag, "1") == 0;
  if (g_deterministic) {
    openblas_set_num_threads(1);
  }
}

bool deterministic_mode() {
  init_runtime();
  return g_deterministic;
}

}  // namespace crossview
