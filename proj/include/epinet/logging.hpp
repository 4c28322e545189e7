#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace epinet {

/// Shared logger writing to stderr. The level comes from EPINET_LOG
/// (trace, debug, info, warn, error, critical, off); default warn.
inline std::shared_ptr<spdlog::logger> logger()
{
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto lg = spdlog::get("epinet");
        if (!lg) {
            lg = spdlog::stderr_color_mt("epinet");
        }
        lg->set_level(spdlog::level::warn);
        if (const char* env = std::getenv("EPINET_LOG"); env != nullptr && *env != '\0') {
            lg->set_level(spdlog::level::from_str(env));
        }
        return lg;
    }();
    return instance;
}

}  // namespace epinet
