#pragma once

namespace durr {

// Full command-line surface; returns the process exit code
// (0 ok, 1 usage, 2 data, 3 numerical).
int cli_run(int argc, const char* const* argv);

}  // namespace durr
