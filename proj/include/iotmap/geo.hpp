#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace iotmap {

enum class Continent { africa, antarctica, asia, europe, north_america, oceania, south_america };

std::string_view continent_code(Continent c);  // AF AN AS EU NA OC SA
std::optional<Continent> parse_continent(std::string_view code);

/// Continent of an ISO 3166-1 alpha-2 country code, from the bundled table.
std::optional<Continent> continent_of(std::string_view country);

struct Location {
    std::string country;  // ISO alpha-2, upper case
    std::string city;     // may be empty
    Continent continent = Continent::europe;

    /// Builds a location whose continent follows the bundled mapping; throws ValidationError otherwise.
    static Location make(std::string country, std::string city = {});

    /// "CC" or "CC/City"; used as the key when counting distinct locations.
    std::string key() const { return city.empty() ? country : country + "/" + city; }

    bool operator==(const Location&) const = default;
};

/// Coarse regions used for cross-border accounting of flows.
enum class TrafficRegion { eu, us, asia, other };

std::string_view traffic_region_name(TrafficRegion r);
TrafficRegion traffic_region_of(const Location& loc);

}  // namespace iotmap
