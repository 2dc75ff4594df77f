#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace volenc {

/// ISO-8601 calendar date with day resolution.
class Date {
public:
    Date() = default;
    explicit Date(std::chrono::sys_days days) : days_(days) {}
    Date(int year, unsigned month, unsigned day);

    /// Parses "YYYY-MM-DD"; throws SchemaError on anything else.
    static Date parse(std::string_view text);

    std::string to_string() const;
    std::chrono::sys_days days() const { return days_; }
    bool is_weekend() const;

    /// Next Monday-to-Friday date strictly after this one.
    Date next_business_day() const;

    auto operator<=>(const Date&) const = default;

private:
    std::chrono::sys_days days_{};
};

}  // namespace volenc
