#include "ganfinger/error.hpp"

namespace ganfinger {

int exit_code(const std::exception& e) noexcept {
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const IntegrityError*>(&e) || dynamic_cast<const InvariantError*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const CapacityError*>(&e)) return 3;
  if (dynamic_cast<const TrainingError*>(&e)) return 4;
  return 1;
}

}  // namespace ganfinger
