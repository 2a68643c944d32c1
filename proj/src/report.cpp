#include <algorithm>
#include <filesystem>

#include "iotmap/error.hpp"
#include "iotmap/flows.hpp"
#include "iotmap/pipeline.hpp"
#include "iotmap/textio.hpp"

namespace iotmap {

// ---- csv ------------------------------------------------------------------------------------

std::string CsvTable::to_string() const {
    std::string out = join(header, ",") + "\n";
    for (const auto& r : rows) out += join(r, ",") + "\n";
    return out;
}

CsvTable CsvTable::parse(const std::string& text) {
    CsvTable t;
    bool first = true;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        for (auto c : split(line, ',')) cells.emplace_back(c);
        if (first) {
            t.header = std::move(cells);
            first = false;
        } else {
            if (cells.size() != t.header.size())
                throw ParseError("", t.rows.size() + 2, "", "expected " + std::to_string(t.header.size()) + " cells");
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

std::size_t CsvTable::column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("table has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

// ---- figures --------------------------------------------------------------------------------

const std::vector<FigureSpec>& figure_specs() {
    static const std::vector<FigureSpec> specs = {
        {"fig3", "fig3_sources.csv", "metrics/sources.csv", "fuse",
         {"provider_id", "family", "tls_only_pct", "pdns_only_pct", "adns_only_pct", "multiple_pct", "total"}},
        {"fig4", "fig4_stability.csv", "metrics/stability.csv", "footprint",
         {"provider_id", "date_a", "date_b", "in_both", "only_a", "only_b"}},
        {"fig5", "fig5_sweep.csv", "metrics/sweep.csv", "flows sweep", {"threshold", "visibility_pct", "scanner_lines"}},
        {"fig6", "fig6_visibility.csv", "metrics/visibility.csv", "flows analyze",
         {"provider_id", "family", "visibility_pct"}},
        {"fig7", "fig7_ablation.csv", "metrics/ablation.csv", "flows ablate", {"provider_id", "decrease_pct"}},
        {"fig8", "fig8_activity.csv", "metrics/activity.csv", "flows analyze",
         {"provider_id", "hour_start", "active_lines"}},
        {"fig9", "fig9_traffic.csv", "metrics/traffic.csv", "flows analyze",
         {"provider_id", "hour_start", "normalized_down"}},
        {"fig10_ratio", "fig10_ratio.csv", "metrics/ratio.csv", "flows analyze", {"provider_id", "ratio"}},
        {"fig10_ports", "fig10_ports.csv", "metrics/ports.csv", "flows analyze", {"provider_id", "port", "share_pct"}},
        {"fig11", "fig11_line_ecdf.csv", "metrics/line_ecdf.csv", "flows analyze",
         {"group_by", "provider_id", "port", "bytes", "fraction"}},
        {"fig12", "fig12_continent.csv", "metrics/continent.csv", "flows analyze", {"kind", "category", "share_pct"}},
        {"fig13", "fig13_outage_series.csv", "metrics/series.csv", "flows analyze",
         {"provider_id", "region", "hour_start", "normalized_volume"}},
        {"fig14", "fig14_outages.csv", "metrics/outages.csv", "disrupt outage",
         {"provider_id", "region", "start", "end", "max_drop_pct"}},
    };
    return specs;
}

const FigureSpec& figure_spec(const std::string& id) {
    for (const auto& s : figure_specs())
        if (s.id == id) return s;
    std::string known;
    for (const auto& s : figure_specs()) known += (known.empty() ? "" : " ") + s.id;
    throw ValidationError("unknown figure id '" + id + "' (known: " + known + ", all)");
}

std::map<std::string, std::string> provider_pseudonyms(const std::vector<ProviderProfile>& profiles,
                                                       const std::string& salt) {
    std::map<ProviderGroup, std::vector<std::pair<std::string, std::string>>> groups;  // (hash, id)
    for (const auto& p : profiles) groups[p.group].emplace_back(sha256_hex(salt + ":" + p.id), p.id);
    std::map<std::string, std::string> out;
    for (auto& [group, members] : groups) {
        std::sort(members.begin(), members.end());
        const char prefix = group == ProviderGroup::top ? 'T' : group == ProviderGroup::cloud_dependent ? 'D' : 'O';
        for (std::size_t i = 0; i < members.size(); ++i) out[members[i].second] = prefix + std::to_string(i + 1);
    }
    return out;
}

namespace stage {

namespace {

std::string figure_content(const Run& run, const FigureSpec& spec, const std::string& metric_text) {
    const CsvTable metric = CsvTable::parse(metric_text);
    CsvTable fig;
    fig.header = spec.columns;
    std::vector<std::size_t> cols;
    for (const auto& c : spec.columns) cols.push_back(metric.column(c));
    const auto pseudo = run.config().anonymize ? provider_pseudonyms(run.profiles(), run.config().salt)
                                               : std::map<std::string, std::string>{};
    for (const auto& row : metric.rows) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < cols.size(); ++i) {
            std::string v = row[cols[i]];
            if (spec.columns[i] == "provider_id" && run.config().anonymize && !v.empty()) {
                auto it = pseudo.find(v);
                if (it == pseudo.end()) throw ValidationError("no pseudonym for provider '" + v + "'");
                v = it->second;
            }
            // hourly line counts below the floor are withheld
            if (spec.id == "fig8" && spec.columns[i] == "active_lines" && std::stoull(v) < kSuppressionFloor) v.clear();
            out.push_back(std::move(v));
        }
        fig.rows.push_back(std::move(out));
    }
    return fig.to_string();
}

}  // namespace

std::vector<std::string> report(Run& run, const std::string& figure_id) {
    std::vector<const FigureSpec*> todo;
    if (figure_id == "all") {
        for (const auto& s : figure_specs())
            if (std::filesystem::exists(run.path(s.metric))) todo.push_back(&s);
        if (todo.empty())
            throw UpstreamMissingError("fuse", "no metrics in " + run.dir().string() + "; run the analysis stages first");
    } else {
        const auto& s = figure_spec(figure_id);
        run.require(s.metric, s.stage);
        todo.push_back(&s);
    }
    run.begin(figure_id == "all" ? "report" : "report-" + figure_id);
    std::vector<std::string> written;
    for (const auto* s : todo) {
        run.note_input(s->metric, run.path(s->metric));
        const auto rel = std::string(run_files::figures) + "/" + s->file;
        run.emit(rel, figure_content(run, *s, read_file(run.path(s->metric))));
        written.push_back(rel);
    }
    run.count("figures", written.size());
    run.commit();
    return written;
}

}  // namespace stage

}  // namespace iotmap
