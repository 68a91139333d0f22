#pragma once

#include <chrono>
#include <mutex>
#include <string>

namespace cona {

// Time source for transcript timestamps and phase timings. Scripted runs use
// LogicalClock so that every output byte is reproducible.
class Clock {
public:
    using time_point = std::chrono::system_clock::time_point;

    virtual ~Clock() = default;
    virtual time_point now() = 0;
};

class SystemClock final : public Clock {
public:
    time_point now() override { return std::chrono::system_clock::now(); }
};

// Starts at `start` and advances by `step` on every read.
class LogicalClock final : public Clock {
public:
    explicit LogicalClock(time_point start = time_point{}, std::chrono::milliseconds step = std::chrono::seconds(1))
        : next_(start), step_(step) {}

    time_point now() override {
        std::lock_guard lock(mutex_);
        auto t = next_;
        next_ += step_;
        return t;
    }

private:
    std::mutex mutex_;
    time_point next_;
    std::chrono::milliseconds step_;
};

// ISO-8601 UTC with millisecond precision, e.g. "2023-06-01T12:00:00.000Z".
std::string format_utc(Clock::time_point t);

}  // namespace cona
