#pragma once

#include <ostream>

namespace semidiff::selftest {

/// Fast property checks over every module; prints one line per check. Returns the number of
/// failed checks.
int run(std::ostream& out);

}  // namespace semidiff::selftest
