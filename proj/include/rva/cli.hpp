#pragma once

#include <iosfwd>

namespace rva {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point behind the `rva` executable. Output goes to `out`, diagnostics
/// to `err`. Returns 0 on success, 1 on configuration or usage errors and 2
/// when the run itself fails (or, for `attempt`, ends Aborted).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rva
