#pragma once

#include <iosfwd>

namespace fdaw {

// fdaw {fit|extract|simulate|serve} [flags]. Returns 0 on success, 2 on a
// usage error and 1 on a runtime error. Log verbosity comes from FDAW_LOG
// (error, info or debug); logs go to stderr.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace fdaw
