#include "sandpile/io.hpp"

#include <sstream>

namespace sandpile {

void write_config_csv(std::ostream& os, const HeightConfig& c, const VolumeGraph& v) {
  if (c.size() != v.size()) throw PreconditionError("write_config_csv: size mismatch");
  os << "site,generation,height\n";
  for (SiteId x = 0; x < c.size(); ++x) os << x << ',' << v.generation(x) << ',' << c[x] << '\n';
}

std::string config_csv(const HeightConfig& c, const VolumeGraph& v) {
  std::ostringstream os;
  write_config_csv(os, c, v);
  return os.str();
}

nlohmann::json config_to_json(const HeightConfig& c) { return c.vec(); }

HeightConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw PreconditionError("configuration JSON must be an array of heights");
  std::vector<Height> h;
  h.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_number_integer()) throw PreconditionError("configuration heights must be integers");
    const auto v = e.get<Height>();
    if (v < 1) throw PreconditionError("configuration heights must be >= 1");
    h.push_back(v);
  }
  return HeightConfig(std::move(h));
}

void write_recurrent_csv(std::ostream& os, const VolumeGraph& v, std::size_t cap) {
  for (SiteId x = 0; x < v.size(); ++x) os << (x ? "," : "") << 'h' << x;
  os << '\n';
  for_each_recurrent(v.laplacian(), [&](const HeightConfig& c) {
    for (SiteId x = 0; x < c.size(); ++x) os << (x ? "," : "") << c[x];
    os << '\n';
  }, cap);
}

}  // namespace sandpile
