#include "cona/clock.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

namespace cona {

std::string format_utc(Clock::time_point t) {
    const auto secs = std::chrono::floor<std::chrono::seconds>(t);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t - secs).count();
    const std::time_t tt = std::chrono::system_clock::to_time_t(secs);
    return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(tt), ms);
}

}  // namespace cona
