#include "ek/error.hpp"

namespace ek {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Validation:
    case ErrorKind::Domain:
      return 2;
    case ErrorKind::Numerical:
      return 3;
    case ErrorKind::Dependency:
      return 4;
  }
  return 1;
}

}  // namespace ek
