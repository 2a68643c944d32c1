#include "iotmap/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "iotmap/error.hpp"
#include "iotmap/textio.hpp"
#include "json.hpp"

namespace iotmap {
namespace {

using nlohmann::json;

bool is_label_char(char c) {
    return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '-' ||
           c == '_';
}

bool valid_dns_suffix(std::string_view s) {
    if (s.empty() || s.size() > 253 || s.front() == '.' || s.back() == '.') return false;
    std::size_t label = 0;
    for (char c : s) {
        if (c == '.') {
            if (label == 0) return false;
            label = 0;
        } else if (is_label_char(c)) {
            if (++label > 63) return false;
        } else {
            return false;
        }
    }
    return label > 0;
}

std::string regex_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (std::string_view(".^$|()[]{}*+?\\").find(c) != std::string_view::npos) out += '\\';
        out += c;
    }
    return out;
}

// Turn every capturing group into a non-capturing one so the region group index stays fixed.
std::string strip_captures(std::string_view pattern) {
    std::string out;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        const char c = pattern[i];
        if (c == '\\' && i + 1 < pattern.size()) {
            out += c;
            out += pattern[++i];
            continue;
        }
        if (c == '[') {
            // copy the bracket expression verbatim; POSIX classes such as [[:alnum:]] nest one level
            std::size_t depth = 0;
            std::size_t j = i;
            for (; j < pattern.size(); ++j) {
                if (pattern[j] == '[') ++depth;
                if (pattern[j] == ']' && --depth == 0) break;
            }
            out.append(pattern.substr(i, j - i + 1));
            i = j;
            continue;
        }
        out += c;
        if (c == '(' && (i + 1 >= pattern.size() || pattern[i + 1] != '?')) out += "?:";
    }
    return out;
}

std::string join_alternation(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += '|';
        out += regex_escape(items[i]);
    }
    return out;
}

const char* kLabels = "(?:\\*|[a-z0-9_-]+)(?:\\.[a-z0-9_-]+)*";

class FieldReader {
public:
    FieldReader(const json& obj, std::string source, std::size_t line)
        : obj_(obj), source_(std::move(source)), line_(line) {}

    [[noreturn]] void fail(const std::string& field, const std::string& what) const {
        throw ParseError(source_, line_, field, what);
    }

    const json* get(const std::string& key, bool required) const {
        auto it = obj_.find(key);
        if (it == obj_.end() || it->is_null()) {
            if (required) fail(key, "missing");
            return nullptr;
        }
        return &*it;
    }

    std::string str(const std::string& key, bool required = true, std::string def = {}) const {
        const json* v = get(key, required);
        if (!v) return def;
        if (!v->is_string()) fail(key, "expected string");
        return v->get<std::string>();
    }

    bool boolean(const std::string& key, bool def = false) const {
        const json* v = get(key, false);
        if (!v) return def;
        if (!v->is_boolean()) fail(key, "expected boolean");
        return v->get<bool>();
    }

    std::vector<std::string> strings(const json& v, const std::string& field) const {
        if (!v.is_array()) fail(field, "expected array of strings");
        std::vector<std::string> out;
        for (const auto& e : v) {
            if (!e.is_string()) fail(field, "expected array of strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }

    std::vector<std::string> strings(const std::string& key) const {
        const json* v = get(key, false);
        return v ? strings(*v, key) : std::vector<std::string>{};
    }

    std::int64_t integer(const json& v, const std::string& field) const {
        if (!v.is_number_integer()) fail(field, "expected integer");
        return v.get<std::int64_t>();
    }

private:
    const json& obj_;
    std::string source_;
    std::size_t line_;
};

std::map<std::string, Location> load_region_map(const std::filesystem::path& path) {
    std::map<std::string, Location> out;
    const std::string src = path.string();
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        auto cols = split(line, '\t');
        if (cols.size() < 2) throw ParseError(src, lineno, "", "expected token<TAB>country[<TAB>city]");
        std::string token(trim(cols[0]));
        try {
            out.insert_or_assign(token, Location::make(std::string(trim(cols[1])),
                                                       cols.size() > 2 ? std::string(trim(cols[2])) : std::string{}));
        } catch (const ValidationError& e) {
            throw ParseError(src, lineno, "country", e.what());
        }
    });
    return out;
}

ProviderProfile parse_profile(const json& obj, const std::string& src, std::size_t lineno,
                              const std::filesystem::path& base_dir) {
    if (!obj.is_object()) throw ParseError(src, lineno, "", "expected a JSON object per line");
    FieldReader r(obj, src, lineno);
    ProviderProfile p;
    p.id = r.str("id");
    p.display_name = r.str("name", false, p.id);

    const std::string group = r.str("group", false, "other");
    if (group == "top") p.group = ProviderGroup::top;
    else if (group == "cloud-dependent") p.group = ProviderGroup::cloud_dependent;
    else if (group == "other") p.group = ProviderGroup::other;
    else r.fail("group", "expected top|cloud-dependent|other");

    if (const json* sub = r.get("subdomain", true)) {
        if (!sub->is_object()) r.fail("subdomain", "expected object");
        FieldReader sr(*sub, src, lineno);
        const std::string rule = sr.str("rule");
        if (rule == "wildcard") p.subdomain.rule = SubdomainRule::wildcard;
        else if (rule == "literal-set") p.subdomain.rule = SubdomainRule::literal_set;
        else if (rule == "protocol-prefixed") p.subdomain.rule = SubdomainRule::protocol_prefixed;
        else r.fail("subdomain.rule", "expected wildcard|literal-set|protocol-prefixed");
        p.subdomain.optional = sr.boolean("optional");
        p.subdomain.labels = sr.strings("labels");
    }
    p.service_labels = r.strings("service_labels");

    if (const json* reg = r.get("region", false)) {
        if (!reg->is_object()) r.fail("region", "expected object");
        FieldReader rr(*reg, src, lineno);
        p.region.tokens = rr.strings("tokens");
        p.region.token_pattern = rr.str("pattern", false);
        p.region.required = rr.boolean("required");
    }

    p.parent_domain = r.str("parent_domain");
    if (!p.parent_domain.empty() && p.parent_domain.back() == '.') p.parent_domain.pop_back();

    if (const json* protos = r.get("protocols", false)) {
        if (!protos->is_array()) r.fail("protocols", "expected array");
        for (const auto& e : *protos) {
            if (!e.is_array() || e.size() != 3 || !e[0].is_string() || !e[2].is_string())
                r.fail("protocols", "expected [name, port, transport] triples");
            const auto port = r.integer(e[1], "protocols");
            if (port < 1 || port > 65535) r.fail("protocols", "port " + std::to_string(port) + " outside [1, 65535]");
            auto tr = parse_transport(e[2].get<std::string>());
            if (!tr) r.fail("protocols", "transport must be tcp or udp");
            p.protocols.push_back({e[0].get<std::string>(), static_cast<std::uint16_t>(port), *tr});
        }
    }
    if (const json* asns = r.get("org_asns", false)) {
        if (!asns->is_array()) r.fail("org_asns", "expected array");
        for (const auto& e : *asns) {
            const auto asn = r.integer(e, "org_asns");
            if (asn <= 0 || asn > 4294967295LL) r.fail("org_asns", "AS number out of range");
            p.org_asns.insert(static_cast<std::uint32_t>(asn));
        }
    }
    p.anycast = r.boolean("anycast");
    p.ipv6_supported = r.boolean("ipv6");
    if (const json* ports = r.get("dedicated_ports", false)) {
        if (!ports->is_array()) r.fail("dedicated_ports", "expected array");
        for (const auto& e : *ports) {
            const auto port = r.integer(e, "dedicated_ports");
            if (port < 1 || port > 65535) r.fail("dedicated_ports", "port outside [1, 65535]");
            p.dedicated_ports.push_back(static_cast<std::uint16_t>(port));
        }
    }
    const std::string region_file = r.str("region_map", false);
    if (!region_file.empty()) {
        try {
            p.region_map = load_region_map(base_dir / region_file);
        } catch (const IoError& e) {
            r.fail("region_map", e.what());
        }
    }
    return p;
}

template <typename OnProfile, typename OnError>
void parse_catalog(const std::filesystem::path& path, OnProfile on_profile, OnError on_error) {
    const std::string src = path.string();
    const auto base = path.parent_path();
    std::set<std::string> ids;
    std::size_t records = 0;
    for_each_data_line(path, [&](std::size_t lineno, std::string_view line) {
        ++records;
        try {
            json obj;
            try {
                obj = json::parse(line);
            } catch (const json::parse_error& e) {
                throw ParseError(src, lineno, "", std::string("malformed JSON: ") + e.what());
            }
            ProviderProfile p = parse_profile(obj, src, lineno, base);
            try {
                validate_profile(p);
            } catch (const ValidationError& e) {
                throw ValidationError(src + ":" + std::to_string(lineno) + ": " + e.what());
            }
            if (!ids.insert(p.id).second)
                throw ValidationError(src + ":" + std::to_string(lineno) + ": duplicate provider_id '" + p.id + "'");
            on_profile(std::move(p));
        } catch (const Error& e) {
            on_error(e);
        }
    });
    if (records == 0) on_error(ValidationError("empty catalog"));
}

}  // namespace

std::string_view transport_name(Transport t) { return t == Transport::tcp ? "tcp" : "udp"; }

std::optional<Transport> parse_transport(std::string_view s) {
    if (s == "tcp" || s == "TCP" || s == "6") return Transport::tcp;
    if (s == "udp" || s == "UDP" || s == "17") return Transport::udp;
    return std::nullopt;
}

std::string_view subdomain_rule_name(SubdomainRule r) {
    switch (r) {
        case SubdomainRule::wildcard: return "wildcard";
        case SubdomainRule::literal_set: return "literal-set";
        case SubdomainRule::protocol_prefixed: return "protocol-prefixed";
    }
    return "wildcard";
}

std::string_view provider_group_name(ProviderGroup g) {
    switch (g) {
        case ProviderGroup::top: return "top";
        case ProviderGroup::cloud_dependent: return "cloud-dependent";
        case ProviderGroup::other: return "other";
    }
    return "other";
}

std::string normalize_fqdn(std::string_view fqdn) {
    std::string out(fqdn);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (!out.empty() && out.back() == '.') out.pop_back();
    return out;
}

void validate_profile(const ProviderProfile& p) {
    if (p.id.empty() || !std::all_of(p.id.begin(), p.id.end(), is_label_char))
        throw ValidationError("provider_id must be a non-empty [a-z0-9_-] token");
    if (!valid_dns_suffix(p.parent_domain))
        throw ValidationError("parent_domain '" + p.parent_domain +
                              "' must be a lowercase DNS suffix without leading dot");
    std::set<std::string> seen;
    for (const auto& t : p.region.tokens) {
        if (t.empty()) throw ValidationError("region_grammar tokens must be non-empty");
        if (!seen.insert(t).second) throw ValidationError("region_grammar tokens must be distinct: '" + t + "'");
        if (!std::all_of(t.begin(), t.end(), is_label_char))
            throw ValidationError("region token '" + t + "' is not a single DNS label");
    }
    if (!p.region.token_pattern.empty()) {
        std::regex re;
        try {
            re = std::regex(strip_captures(p.region.token_pattern), std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw ValidationError("region pattern does not compile: " + std::string(e.what()));
        }
        for (const auto& t : p.region.tokens)
            if (!std::regex_match(t, re))
                throw ValidationError("region token '" + t + "' does not match the region pattern");
    }
    for (const auto& proto : p.protocols)
        if (proto.port < 1) throw ValidationError("documented port must be in [1, 65535]");
    if (p.subdomain.rule != SubdomainRule::wildcard && p.subdomain.labels.empty())
        throw ValidationError("subdomain rule '" + std::string(subdomain_rule_name(p.subdomain.rule)) +
                              "' needs at least one label");
    for (const auto& l : p.subdomain.labels)
        if (l.empty() || !std::all_of(l.begin(), l.end(), is_label_char))
            throw ValidationError("subdomain label '" + l + "' is not a DNS label");
    for (const auto& l : p.service_labels)
        if (l.empty() || !std::all_of(l.begin(), l.end(), is_label_char))
            throw ValidationError("service label '" + l + "' is not a DNS label");
}

std::vector<ProviderProfile> load_catalog(const std::filesystem::path& path) {
    std::vector<ProviderProfile> out;
    parse_catalog(
        path, [&](ProviderProfile p) { out.push_back(std::move(p)); },
        [](const Error& e) {
            if (auto* pe = dynamic_cast<const ParseError*>(&e)) throw *pe;
            if (auto* io = dynamic_cast<const IoError*>(&e)) throw *io;
            throw ValidationError(e.what());
        });
    return out;
}

std::vector<std::string> validate_catalog(const std::filesystem::path& path) {
    std::vector<std::string> violations;
    std::vector<ProviderProfile> profiles;
    parse_catalog(
        path, [&](ProviderProfile p) { profiles.push_back(std::move(p)); },
        [&](const Error& e) {
            if (dynamic_cast<const IoError*>(&e)) throw IoError(e.what());
            violations.emplace_back(e.what());
        });
    for (const auto& p : profiles) {
        try {
            compile_pattern(p);
        } catch (const Error& e) {
            violations.push_back(p.id + ": " + e.what());
        }
    }
    return violations;
}

DomainPattern compile_pattern(const ProviderProfile& p) {
    validate_profile(p);
    std::string expr = "^";
    std::string sub;
    switch (p.subdomain.rule) {
        case SubdomainRule::wildcard:
            sub = std::string(kLabels) + "\\.";
            break;
        case SubdomainRule::literal_set:
            sub = "(?:" + join_alternation(p.subdomain.labels) + ")\\.";
            break;
        case SubdomainRule::protocol_prefixed:
            sub = std::string(kLabels) + "\\.(?:" + join_alternation(p.subdomain.labels) + ")\\.";
            break;
    }
    expr += p.subdomain.optional ? "(?:" + sub + ")?" : sub;
    for (const auto& label : p.service_labels) expr += regex_escape(label) + "\\.";

    std::optional<std::size_t> region_group;
    if (p.region.empty()) {
        if (p.region.required) throw ValidationError("mandatory region slot but region grammar has no tokens");
    } else {
        std::string alt;
        if (!p.region.token_pattern.empty()) {
            alt = strip_captures(p.region.token_pattern);
        } else {
            // longest token first so that prefixes never shadow a longer region
            auto tokens = p.region.tokens;
            std::stable_sort(tokens.begin(), tokens.end(),
                             [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
            alt = join_alternation(tokens);
        }
        const std::string slot = "(" + alt + ")\\.";
        expr += p.region.required ? slot : "(?:" + slot + ")?";
        region_group = 1;
    }
    expr += regex_escape(p.parent_domain) + "$";

    DomainPattern out;
    out.provider_id = p.id;
    out.expression = expr;
    out.region_group = region_group;
    out.parent_domain = p.parent_domain;
    try {
        out.compiled = std::make_shared<const std::regex>(expr, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
        throw ValidationError("pattern for '" + p.id + "' does not compile: " + e.what());
    }
    return out;
}

MatchResult match_fqdn(const DomainPattern& pattern, std::string_view fqdn) {
    MatchResult r;
    r.provider_id = pattern.provider_id;
    r.normalized_fqdn = normalize_fqdn(fqdn);
    const std::string& name = r.normalized_fqdn;
    const std::string& parent = pattern.parent_domain;
    const bool suffix_ok =
        name == parent || (name.size() > parent.size() && name.compare(name.size() - parent.size(), parent.size(),
                                                                       parent) == 0 &&
                           name[name.size() - parent.size() - 1] == '.');
    if (!suffix_ok || !pattern.compiled) return r;
    std::smatch m;
    if (!std::regex_match(name, m, *pattern.compiled)) return r;
    r.matched = true;
    if (pattern.region_group && m[*pattern.region_group].matched) r.region_token = m[*pattern.region_group].str();
    return r;
}

PatternSet::PatternSet(const std::vector<ProviderProfile>& profiles) {
    patterns_.reserve(profiles.size());
    for (const auto& p : profiles) patterns_.push_back(compile_pattern(p));
}

std::vector<MatchResult> PatternSet::match_all(std::string_view fqdn) const {
    std::vector<MatchResult> out;
    for (const auto& p : patterns_) {
        auto r = match_fqdn(p, fqdn);
        if (r.matched) out.push_back(std::move(r));
    }
    return out;
}

bool PatternSet::any_match(std::string_view fqdn) const {
    for (const auto& p : patterns_)
        if (match_fqdn(p, fqdn).matched) return true;
    return false;
}

const DomainPattern* PatternSet::find(std::string_view provider_id) const {
    for (const auto& p : patterns_)
        if (p.provider_id == provider_id) return &p;
    return nullptr;
}

const ProviderProfile* find_profile(const std::vector<ProviderProfile>& profiles, std::string_view id) {
    for (const auto& p : profiles)
        if (p.id == id) return &p;
    return nullptr;
}

}  // namespace iotmap
