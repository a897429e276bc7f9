#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tiltdid {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitRuntime = 3;

// "lo:hi:step", inclusive of hi when it lies on the lattice.
std::vector<double> parse_delta_grid(const std::string& text);

// Entry point of the `tiltdid` executable; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tiltdid
