#pragma once

#include <stdexcept>
#include <string>

namespace panelfe {

// Rejected input: malformed CSV, unbalanced panel, outcome outside the
// family's support, bad schema. The CLI maps this to exit status 2.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside an operation's domain (v not in (0,1), H = 0, ...).
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Numerical failure: non-convergence, singular Hessian, nothing left to
// estimate. The CLI maps this to exit status 3.
class estimation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace panelfe
