#pragma once

#include <json.hpp>

#include "attrcloak/schema.hpp"

namespace attrcloak {

// Insertion-ordered JSON everywhere: emitted files are byte-deterministic.
using ojson = nlohmann::ordered_json;

ojson schema_to_json(const AttributeSchema& schema);
AttributeSchema schema_from_json(const ojson& arr);

}  // namespace attrcloak
