#pragma once

#include <stdexcept>
#include <string>

namespace spinlat {

// Invalid or inconsistent user input (CLI exit code 2).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical failure: non-convergence, degenerate kernel, integrator failure (exit code 3).
struct solver_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spinlat
