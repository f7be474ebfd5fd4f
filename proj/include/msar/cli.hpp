#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace msar {

// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitIo = 2,
    kExitFingerprint = 3,
};

// Entry point of the `msar` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv);

// Calibration labels drawn from `seed`; the only randomness the tool uses
// besides the model's own weight seed.
std::vector<std::size_t> draw_labels(std::size_t count, std::size_t class_count, std::uint64_t seed);

} // namespace msar
