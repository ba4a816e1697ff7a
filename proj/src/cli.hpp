#pragma once

namespace tvase {
namespace cli {

// Exit codes: 0 success, 1 usage, 2 I/O, 3 verification failure.
int run(int argc, const char* const* argv);

} // namespace cli
} // namespace tvase
