#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stull {

constexpr std::int64_t kSecondsPerDay = 86400;
constexpr std::int64_t kSecondsPerHour = 3600;

/// Hour of day (0-23) of an epoch timestamp, UTC.
constexpr std::uint8_t hour_of_day(std::int64_t t) {
    std::int64_t s = t % kSecondsPerDay;
    if (s < 0) s += kSecondsPerDay;
    return static_cast<std::uint8_t>(s / kSecondsPerHour);
}

/// One spatiotemporal record. `hour` is derived from `t` and cached.
struct GeoPoint {
    std::uint64_t id = 0;
    double x = 0.0;
    double y = 0.0;
    std::int64_t t = 0;
    std::uint8_t hour = 0;

    GeoPoint() = default;
    GeoPoint(std::uint64_t id_, double x_, double y_, std::int64_t t_)
        : id(id_), x(x_), y(y_), t(t_), hour(hour_of_day(t_)) {}

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct SpatialRect {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;

    bool valid() const { return min_x < max_x && min_y < max_y; }
    double width() const { return max_x - min_x; }
    double height() const { return max_y - min_y; }

    // half-open on both axes
    bool contains(double x, double y) const {
        return x >= min_x && x < max_x && y >= min_y && y < max_y;
    }
    bool intersects(const SpatialRect& o) const {
        return min_x < o.max_x && o.min_x < max_x && min_y < o.max_y && o.min_y < max_y;
    }

    friend bool operator==(const SpatialRect&, const SpatialRect&) = default;
};

/// [start, end) in epoch seconds.
struct TimeRange {
    std::int64_t start = 0;
    std::int64_t end = 0;

    bool valid() const { return start < end; }
    bool contains(std::int64_t t) const { return t >= start && t < end; }
    bool intersects(const TimeRange& o) const { return start < o.end && o.start < end; }
    bool covers(const TimeRange& o) const { return start <= o.start && o.end <= end; }

    friend bool operator==(const TimeRange&, const TimeRange&) = default;
};

struct Query {
    SpatialRect rect;
    TimeRange time;
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A point that cannot be indexed (outside the extent, non-finite, or before the first bin).
class InvalidPointError : public Error {
public:
    InvalidPointError(std::uint64_t id, const std::string& why)
        : Error("point " + std::to_string(id) + ": " + why), id_(id) {}
    std::uint64_t id() const { return id_; }

private:
    std::uint64_t id_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class SessionExhaustedError : public Error {
public:
    SessionExhaustedError() : Error("sampling session is exhausted") {}
};

class FormatError : public Error {
public:
    using Error::Error;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

}  // namespace stull
