#include <cstdlib>
#include <cstring>

#include "crank/kernels.hpp"

namespace crank::kern {

namespace {

struct Selection {
  const Ops* ops;
  const char* name;
};

Selection select() {
  const char* force = std::getenv("CRANK_KERNELS");
  if (force != nullptr && std::strcmp(force, "scalar") == 0) {
    return {&scalar_ops(), "scalar"};
  }
  if (const Ops* avx2 = avx2_ops()) {
    return {avx2, "avx2"};
  }
  return {&scalar_ops(), "scalar"};
}

const Selection& selection() {
  static const Selection s = select();
  return s;
}

}  // namespace

const Ops& active_ops() { return *selection().ops; }

const char* active_name() { return selection().name; }

}  // namespace crank::kern
