#include "sandpile/rate_function.hpp"

#include <cmath>
#include <sstream>

namespace sandpile {

RateFunction RateFunction::constant(double c) {
  if (!(c > 0) || !std::isfinite(c)) throw PreconditionError("RateFunction::constant: rate must be positive");
  return RateFunction(Kind::constant, c, {});
}

RateFunction RateFunction::geometric(double r) {
  if (!(r > 0) || !std::isfinite(r)) throw PreconditionError("RateFunction::geometric: base must be positive");
  return RateFunction(Kind::geometric, r, {});
}

RateFunction RateFunction::table(std::vector<double> per_generation) {
  if (per_generation.empty()) throw PreconditionError("RateFunction::table: empty table");
  for (double v : per_generation) {
    if (!(v > 0) || !std::isfinite(v)) {
      throw PreconditionError("RateFunction::table: entries must be positive");
    }
  }
  return RateFunction(Kind::table, 0.0, std::move(per_generation));
}

double RateFunction::at_generation(std::uint32_t g) const {
  switch (kind_) {
    case Kind::constant:
      return param_;
    case Kind::geometric:
      return std::pow(param_, static_cast<double>(g));
    case Kind::table:
      return g < table_.size() ? table_[g] : 0.0;
  }
  return 0.0;
}

std::vector<double> RateFunction::on_volume(const VolumeGraph& v) const {
  std::vector<double> out(v.size());
  for (SiteId x = 0; x < v.size(); ++x) out[x] = (*this)(v, x);
  return out;
}

std::string RateFunction::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case Kind::constant:
      os << "constant(" << param_ << ")";
      break;
    case Kind::geometric:
      os << "geometric(" << param_ << ")";
      break;
    case Kind::table:
      os << "table(";
      for (std::size_t i = 0; i < table_.size(); ++i) os << (i ? "," : "") << table_[i];
      os << ")";
      break;
  }
  return os.str();
}

}  // namespace sandpile
