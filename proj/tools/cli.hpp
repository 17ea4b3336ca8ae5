#pragma once

#include <iosfwd>

namespace driftcal::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace driftcal::cli
