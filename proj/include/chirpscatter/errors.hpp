#ifndef CHIRPSCATTER_ERRORS_HPP
#define CHIRPSCATTER_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace chirpscatter {

/// Signal buffer length does not match what the operation requires.
struct LengthMismatch : std::invalid_argument {
    explicit LengthMismatch(const std::string& what) : std::invalid_argument(what) {}
};

/// Requested staircase level count outside the supported {4,5,6} set.
struct UnsupportedLevels : std::invalid_argument {
    explicit UnsupportedLevels(const std::string& what) : std::invalid_argument(what) {}
};

/// Channel plans exist only for the 125 kHz and 500 kHz hopping bandwidths.
struct UnsupportedBandwidth : std::invalid_argument {
    explicit UnsupportedBandwidth(const std::string& what) : std::invalid_argument(what) {}
};

/// A TDMA slot is shorter than the frame a scheduled device would transmit.
struct ScheduleInfeasible : std::runtime_error {
    explicit ScheduleInfeasible(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace chirpscatter

#endif
