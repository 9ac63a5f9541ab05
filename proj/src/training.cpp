#include "scm/training.hpp"

#include "scm/error.hpp"

namespace scm {

void TrainConfig::validate() const {
  if (iterations < 0)
    throw ConfigError("iterations: must be non-negative");
  if (batch_size == 0)
    throw ConfigError("batch_size: must be positive");
  sgd.validate();
}

} // namespace scm
