#pragma once

#include "fedhub/model/fact.h"
#include "fedhub/security/visibility.h"

#include <span>
#include <vector>

namespace fedhub::security {

// Exactly the facts whose visibility authorizes under `auth`, in input order.
std::vector<Fact> redact_facts(std::span<const Fact> facts, const AuthContext& auth);

}  // namespace fedhub::security
