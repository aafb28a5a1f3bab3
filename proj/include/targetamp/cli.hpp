#pragma once

namespace targetamp {

// Entry point behind main(). Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.
int run_cli(int argc, char** argv);

}  // namespace targetamp
