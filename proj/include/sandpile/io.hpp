#pragma once

#include <ostream>
#include <string>

#include "json.hpp"
#include "sandpile/engine.hpp"
#include "sandpile/recurrence.hpp"
#include "sandpile/topology.hpp"

namespace sandpile {

/// "site,generation,height" rows in enumeration order, LF line endings.
void write_config_csv(std::ostream& os, const HeightConfig& c, const VolumeGraph& v);
std::string config_csv(const HeightConfig& c, const VolumeGraph& v);

/// Flat array of heights in enumeration order.
nlohmann::json config_to_json(const HeightConfig& c);
HeightConfig config_from_json(const nlohmann::json& j);

/// One recurrent configuration per row, columns h0..h{n-1}, streamed
/// straight from the enumeration.
void write_recurrent_csv(std::ostream& os, const VolumeGraph& v, std::size_t cap = kDefaultEnumerationCap);

}  // namespace sandpile
