#include "deft/errors.hpp"

#include <sstream>

namespace deft {

namespace {

std::string divergence_message(std::size_t step, double last) {
  std::ostringstream os;
  os << "loss became non-finite at step " << step << " (last finite loss " << last << ")";
  return os.str();
}

std::string truncation_message(const std::string& field, std::size_t expected, std::size_t actual) {
  std::ostringstream os;
  os << "truncated file while reading " << field << ": expected " << expected << " bytes, got "
     << actual;
  return os.str();
}

}  // namespace

DivergenceError::DivergenceError(std::size_t step, double last_finite_loss)
    : NumericError(divergence_message(step, last_finite_loss)),
      step_(step),
      last_finite_loss_(last_finite_loss) {}

TruncatedError::TruncatedError(const std::string& field, std::size_t expected, std::size_t actual)
    : FormatError(truncation_message(field, expected, actual)),
      expected_(expected),
      actual_(actual) {}

}  // namespace deft
