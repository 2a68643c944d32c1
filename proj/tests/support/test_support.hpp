#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "iotmap/catalog.hpp"
#include "iotmap/textio.hpp"

namespace iotmap::testing {

inline std::filesystem::path source_dir() { return IOTMAP_SOURCE_DIR; }
inline std::filesystem::path catalog_path() { return source_dir() / "catalog" / "providers.jsonl"; }
inline std::filesystem::path fixture(const std::string& name) { return source_dir() / "fixtures" / name; }

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "iotmap") {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// One verbatim expression of the published pattern excerpt, evaluated the way its data source does:
/// flexible-search regexes run as unanchored searches over the trailing-dot DNS form, basic-search and
/// string-search wildcards require at least one label in front of the suffix.
struct PublishedExpression {
    std::string provider;
    std::string source;
    std::string api;
    std::string expression;

    bool accepts(std::string name) const {
        name = normalize_fqdn(name);
        if (api == "flexible") {
            std::string e = expression;
            if (e.size() > 2 && e.compare(e.size() - 2, 2, "/A") == 0) e.resize(e.size() - 2);
            return std::regex_search(name + ".", std::regex(e, std::regex::ECMAScript));
        }
        std::string glob = expression;
        if (api == "basic") {
            glob = glob.substr(std::string("rrset/name/").size());
            glob.resize(glob.size() - 2);
            if (!glob.empty() && glob.back() == '.') glob.pop_back();
        }
        if (glob.rfind("*.", 0) == 0) {
            const std::string rest = glob.substr(1);
            return name.size() > rest.size() && name.compare(name.size() - rest.size(), rest.size(), rest) == 0 &&
                   name[name.size() - rest.size() - 1] != '.';
        }
        return name == glob;
    }
};

inline std::vector<PublishedExpression> load_published_expressions() {
    std::vector<PublishedExpression> out;
    for_each_data_line(fixture("published_patterns.tsv"), [&](std::size_t, std::string_view line) {
        auto cols = split(line, '\t');
        out.push_back({std::string(cols.at(0)), std::string(cols.at(1)), std::string(cols.at(2)),
                       std::string(cols.at(3))});
    });
    return out;
}

struct PatternCase {
    std::string provider;
    bool positive;
    std::string fqdn;
};

inline std::vector<PatternCase> load_pattern_cases() {
    std::vector<PatternCase> out;
    for_each_data_line(fixture("pattern_cases.tsv"), [&](std::size_t, std::string_view line) {
        auto cols = split(line, '\t');
        out.push_back({std::string(cols.at(0)), cols.at(1) == "+", std::string(cols.at(2))});
    });
    return out;
}

}  // namespace iotmap::testing
