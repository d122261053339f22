#pragma once

namespace nsb {

// Configures the default spdlog logger to write to stderr at the level named
// by NSB_LOG (trace, debug, info, warn, error, off). Default: info.
void init_logging();

} // namespace nsb
