#pragma once

namespace mvmr {

/// Exit codes: 0 success, 2 input/usage error, 3 numerical failure.
int run_cli(int argc, char** argv);

}  // namespace mvmr
