#include "ffc/importance.hpp"

#include <cmath>

#include "ffc/error.hpp"

namespace ffc {

std::string to_string(Domain domain) { return domain == Domain::fourier ? "fourier" : "spatial"; }

Domain parse_domain(const std::string& name) {
  if (name == "fourier") return Domain::fourier;
  if (name == "spatial") return Domain::spatial;
  throw UsageError("unknown domain '" + name + "' (expected fourier or spatial)");
}

ImportanceMap::ImportanceMap(Domain d, std::size_t c, std::size_t h, std::size_t w, std::vector<double> s)
    : domain(d), channels(c), height(h), width(w), scores(std::move(s)) {
  validate();
}

void ImportanceMap::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw UsageError("importance map dimensions must be positive");
  if (scores.size() != channels * height * width) throw UsageError("importance map length does not match C*H*W");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericalError("importance score " + std::to_string(i) + " is not finite");
  }
}

}  // namespace ffc
