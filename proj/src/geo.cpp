#include "iotmap/geo.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "iotmap/error.hpp"

namespace iotmap {
namespace {

struct ContinentCountries {
    Continent continent;
    std::string_view codes;  // space separated ISO 3166-1 alpha-2
};

// Transcontinental states are placed by their capital (RU, TR, KZ -> as listed).
constexpr std::array<ContinentCountries, 7> kTable{{
    {Continent::africa,
     "AO BF BI BJ BW CD CF CG CI CM CV DJ DZ EG EH ER ET GA GH GM GN GQ GW KE KM LR LS LY MA MG ML MR MU MW "
     "MZ NA NE NG RE RW SC SD SH SL SN SO SS ST SZ TD TG TN TZ UG YT ZA ZM ZW"},
    {Continent::antarctica, "AQ BV GS HM TF"},
    {Continent::asia,
     "AE AF AM AZ BD BH BN BT CC CN CX GE HK ID IL IN IO IQ IR JO JP KG KH KP KR KW KZ LA LB LK MM MN MO MV "
     "MY NP OM PH PK PS QA SA SG SY TH TJ TL TM TW UZ VN YE"},
    {Continent::europe,
     "AD AL AT AX BA BE BG BY CH CY CZ DE DK EE ES FI FO FR GB GG GI GR HR HU IE IM IS IT JE LI LT LU LV MC "
     "MD ME MK MT NL NO PL PT RO RS RU SE SI SJ SK SM TR UA VA XK"},
    {Continent::north_america,
     "AG AI AW BB BL BM BQ BS BZ CA CR CU CW DM DO GD GL GP GT HN HT JM KN KY LC MF MQ MS MX NI PA PM PR SV "
     "SX TC TT US VC VG VI"},
    {Continent::oceania, "AS AU CK FJ FM GU KI MH MP NC NF NR NU NZ PF PG PN PW SB TK TO TV UM VU WF WS"},
    {Continent::south_america, "AR BO BR CL CO EC FK GF GY PE PY SR UY VE"},
}};

}  // namespace

std::string_view continent_code(Continent c) {
    switch (c) {
        case Continent::africa: return "AF";
        case Continent::antarctica: return "AN";
        case Continent::asia: return "AS";
        case Continent::europe: return "EU";
        case Continent::north_america: return "NA";
        case Continent::oceania: return "OC";
        case Continent::south_america: return "SA";
    }
    return "??";
}

std::optional<Continent> parse_continent(std::string_view code) {
    for (auto c : {Continent::africa, Continent::antarctica, Continent::asia, Continent::europe,
                   Continent::north_america, Continent::oceania, Continent::south_america})
        if (continent_code(c) == code) return c;
    return std::nullopt;
}

std::optional<Continent> continent_of(std::string_view country) {
    if (country.size() != 2) return std::nullopt;
    for (const auto& row : kTable) {
        for (std::size_t i = 0; i + 1 < row.codes.size(); i += 3)
            if (row.codes.substr(i, 2) == country) return row.continent;
    }
    return std::nullopt;
}

Location Location::make(std::string country, std::string city) {
    std::transform(country.begin(), country.end(), country.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    auto cont = continent_of(country);
    if (!cont) throw ValidationError("unknown country code '" + country + "'");
    return Location{std::move(country), std::move(city), *cont};
}

std::string_view traffic_region_name(TrafficRegion r) {
    switch (r) {
        case TrafficRegion::eu: return "EU";
        case TrafficRegion::us: return "US";
        case TrafficRegion::asia: return "Asia";
        case TrafficRegion::other: return "Other";
    }
    return "Other";
}

TrafficRegion traffic_region_of(const Location& loc) {
    if (loc.continent == Continent::europe) return TrafficRegion::eu;
    if (loc.country == "US") return TrafficRegion::us;
    if (loc.continent == Continent::asia) return TrafficRegion::asia;
    return TrafficRegion::other;
}

}  // namespace iotmap
