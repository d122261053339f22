#include "nsb/common/logging.hpp"

#include <cstdlib>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace nsb {

void init_logging()
{
    auto logger = spdlog::get("nsb");
    if (!logger) {
        logger = spdlog::stderr_color_mt("nsb");
    }
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("%H:%M:%S.%e %^%l%$ %v");
    spdlog::set_level(spdlog::level::info);
    if (const char* level = std::getenv("NSB_LOG")) {
        spdlog::set_level(spdlog::level::from_str(level));
    }
}

} // namespace nsb
