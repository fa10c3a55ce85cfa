#pragma once

#include <iosfwd>

namespace annorefine::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

// Entry point of the annorefine command line. Never throws; failures map to
// kExitUsage (bad flags or config) or kExitData (unreadable or misaligned
// data).
int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace annorefine::cli
