#pragma once

namespace abkt {

// Dispatches one CLI invocation (waveform | extrema | search | train | decode
// | eval-kv). Returns the process exit status; never throws.
int run_cli(int argc, const char* const* argv);

}  // namespace abkt
