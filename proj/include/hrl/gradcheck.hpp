#pragma once

// Finite-difference verification of every registered training loss on a
// small (<= 300 parameter) instance in double precision.

#include <cstdint>
#include <string>
#include <vector>

#include "hrl/nn.hpp"

namespace hrl::gradcheck {

enum class Loss { dqn, sarsa_regression, sarsa_bce, flow_matching };

const char* to_string(Loss l);
Loss loss_from_string(const std::string& s);
std::vector<Loss> all_losses();

struct Result {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
};

// Central differences with step h, compared by nn::max_rel_error.
Result grad_check(Loss loss, std::uint64_t seed, double h = 1e-5);

}  // namespace hrl::gradcheck
