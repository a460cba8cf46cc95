#pragma once

#include <cstdint>

#include "cfine/config.hpp"
#include "cfine/grad_check.hpp"

namespace cfine {

/// d=8, n_v=8, n_t=6, p_d=8; everything else at the toy defaults.
ModelConfig small_gradcheck_config();

/// Central-difference check of the full training loss with respect to every
/// model parameter, on a seeded batch of two pairs from two identities.
GradCheckReport check_loss_gradients(const ModelConfig& cfg, std::uint64_t seed,
                                     GradCheckOptions opts = {});

}  // namespace cfine
