#include "ablah/rng.hpp"

#include <sstream>

#include "ablah/error.hpp"

namespace ablah {

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng rng_from_state(const std::string& state) {
  std::istringstream is(state);
  Rng rng;
  is >> rng;
  if (!is) throw DataError("invalid RNG state");
  return rng;
}

}  // namespace ablah
