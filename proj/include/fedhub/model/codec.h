#pragma once

#include "fedhub/model/fact.h"

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>

namespace fedhub::codec {

using ordered_json = nlohmann::ordered_json;

// Fact-log record. Field order is fixed so that serialized lines are stable.
ordered_json fact_to_json(const Fact& f);
// Throws Error(corrupt) with a description when the record is malformed.
Fact fact_from_json(const nlohmann::ordered_json& j);

std::string fact_to_line(const Fact& f);
Fact fact_from_line(std::string_view line);

ordered_json envelope_to_json(const MetadataEnvelope& e);
MetadataEnvelope envelope_from_json(const nlohmann::ordered_json& j);

ordered_json activity_to_json(const Activity& a);
Activity activity_from_json(const nlohmann::ordered_json& j);

}  // namespace fedhub::codec
