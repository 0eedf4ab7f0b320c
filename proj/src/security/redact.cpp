#include "fedhub/security/redact.h"

#include "fedhub/kernels/redaction.h"

namespace fedhub::security {

std::vector<Fact> redact_facts(std::span<const Fact> facts, const AuthContext& auth) {
  return kernels::gather(facts, kernels::visibility_mask(facts, auth));
}

}  // namespace fedhub::security
