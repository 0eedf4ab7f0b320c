#pragma once

#include "fedhub/model/fact.h"
#include "fedhub/security/visibility.h"

#include <cstdint>
#include <span>
#include <vector>

namespace fedhub::kernels {

// mask[i] == 1 iff facts[i] is visible under `auth`. Evaluated in parallel with
// OpenMP for large inputs.
std::vector<std::uint8_t> visibility_mask(std::span<const Fact> facts,
                                          const security::AuthContext& auth);

// Order-preserving gather of the facts selected by `mask`.
std::vector<Fact> gather(std::span<const Fact> facts, const std::vector<std::uint8_t>& mask);

namespace serial {

std::vector<std::uint8_t> visibility_mask(std::span<const Fact> facts,
                                          const security::AuthContext& auth);

}  // namespace serial

}  // namespace fedhub::kernels
