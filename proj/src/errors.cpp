#include "e2erl/errors.hpp"

#include <cstdio>

namespace e2erl {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace e2erl
