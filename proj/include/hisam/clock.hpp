#ifndef HISAM_CLOCK_HPP
#define HISAM_CLOCK_HPP

#include <atomic>
#include <chrono>
#include <memory>

namespace hisam {

// Seconds-valued clock. Services take a Clock so tests can script time.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() const = 0;
};

class SystemClock final : public Clock {
public:
    double now() const override {
        using namespace std::chrono;
        return duration<double>(steady_clock::now().time_since_epoch()).count();
    }
};

class ManualClock final : public Clock {
public:
    explicit ManualClock(double start = 0.0) : t_(start) {}
    double now() const override { return t_.load(std::memory_order_relaxed); }
    void set(double t) { t_.store(t, std::memory_order_relaxed); }
    void advance(double dt) {
        t_.store(t_.load(std::memory_order_relaxed) + dt,
                 std::memory_order_relaxed);
    }

private:
    std::atomic<double> t_;
};

}  // namespace hisam

#endif
