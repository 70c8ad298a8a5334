// SPDX-License-Identifier: Apache-2.0
#include "s2st/backend.hpp"

#include <stdexcept>

namespace s2st {

void DenoiserBackend::check_inputs(const Tensor& x, int t, const Condition& c) const {
  if (x.shape() != latent_shape()) {
    throw std::invalid_argument(architecture_id() + ": latent shape " + shape_to_string(x.shape()) + ", expected " +
                                shape_to_string(latent_shape()));
  }
  if (c.embedding.shape() != condition_shape()) {
    throw std::invalid_argument(architecture_id() + ": condition shape " + shape_to_string(c.embedding.shape()) +
                                ", expected " + shape_to_string(condition_shape()));
  }
  if (t < 1 || t > schedule().num_train_timesteps()) {
    throw std::invalid_argument(architecture_id() + ": timestep " + std::to_string(t) + " outside 1..T");
  }
}

}  // namespace s2st
