#pragma once

namespace idc {

// Entry point shared by the idc binary and the CLI tests.
int cli_main(int argc, const char* const* argv);

}  // namespace idc
