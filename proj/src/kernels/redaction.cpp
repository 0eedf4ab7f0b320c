#include "fedhub/kernels/redaction.h"

#include <omp.h>

namespace fedhub::kernels {

namespace {
constexpr std::ptrdiff_t kParallelThreshold = 512;
}

std::vector<std::uint8_t> visibility_mask(std::span<const Fact> facts,
                                          const security::AuthContext& auth) {
  const auto n = static_cast<std::ptrdiff_t>(facts.size());
  std::vector<std::uint8_t> mask(facts.size(), 0);
#pragma omp parallel for schedule(static) if (n > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    mask[i] = security::authorize(facts[i].envelope.visibility, auth) ? 1 : 0;
  }
  return mask;
}

std::vector<Fact> gather(std::span<const Fact> facts, const std::vector<std::uint8_t>& mask) {
  std::vector<Fact> out;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (mask[i]) out.push_back(facts[i]);
  }
  return out;
}

namespace serial {

std::vector<std::uint8_t> visibility_mask(std::span<const Fact> facts,
                                          const security::AuthContext& auth) {
  std::vector<std::uint8_t> mask;
  mask.reserve(facts.size());
  for (const auto& f : facts) mask.push_back(security::authorize(f.envelope.visibility, auth));
  return mask;
}

}  // namespace serial

}  // namespace fedhub::kernels
