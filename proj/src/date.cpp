#include "volenc/date.hpp"

#include <charconv>
#include <cstdio>

#include "volenc/error.hpp"

namespace volenc {

Date::Date(int year, unsigned month, unsigned day) {
    const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                          std::chrono::day{day}};
    if (!ymd.ok()) throw ValidationError("invalid calendar date");
    days_ = std::chrono::sys_days{ymd};
}

Date Date::parse(std::string_view text) {
    auto fail = [&]() -> Date {
        throw SchemaError("invalid ISO date '" + std::string(text) + "'");
    };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') return fail();
    int y = 0;
    unsigned m = 0, d = 0;
    auto parse_part = [&](std::string_view part, auto& out) {
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
        return ec == std::errc{} && ptr == part.data() + part.size();
    };
    if (!parse_part(text.substr(0, 4), y) || !parse_part(text.substr(5, 2), m) ||
        !parse_part(text.substr(8, 2), d)) {
        return fail();
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) return fail();
    return Date(std::chrono::sys_days{ymd});
}

std::string Date::to_string() const {
    const std::chrono::year_month_day ymd{days_};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

bool Date::is_weekend() const {
    const std::chrono::weekday wd{days_};
    return wd == std::chrono::Saturday || wd == std::chrono::Sunday;
}

Date Date::next_business_day() const {
    Date d(days_ + std::chrono::days{1});
    while (d.is_weekend()) d = Date(d.days_ + std::chrono::days{1});
    return d;
}

}  // namespace volenc
