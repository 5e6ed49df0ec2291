#include <iostream>

#include "egfn/errors.hpp"

namespace egfn {

void log_warning(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

}  // namespace egfn
