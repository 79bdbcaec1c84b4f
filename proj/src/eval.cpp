#include "crashforge/eval.hpp"

#include "crashforge/errors.hpp"
#include "crashforge/ingest.hpp"
#include "json_util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

namespace crashforge {

namespace {

using json = nlohmann::ordered_json;

std::string render_hundredths(std::int64_t h) { return fmt::format("{}.{:02}", h / 100, h % 100); }

// round(num * scale / den), halves rounded up.
std::int64_t scaled_half_up(std::int64_t num, std::int64_t den, std::int64_t scale) { return (2 * num * scale + den) / (2 * den); }

}  // namespace

std::string Ratio::percent() const {
    if (!defined()) return "n/a";
    return render_hundredths(scaled_half_up(num, den, 10000)) + "%";
}

std::string Ratio::fixed2() const {
    if (!defined()) return "n/a";
    return render_hundredths(scaled_half_up(num, den, 100));
}

std::string_view field_name(Field f) {
    switch (f) {
        case Field::StrikingVehicle: return "striking_vehno";
        case Field::StruckVehicle: return "struck_vehno";
        case Field::StrikingEdr: return "striking_edr";
        case Field::StruckEdr: return "struck_edr";
    }
    return "?";
}

TrialScore score_trial(const FirstCrashFinding& predicted, const FirstCrashFinding& truth) {
    TrialScore s;
    s.predicted = predicted;
    s.truth = truth;
    s.field_correct = {predicted.striking_vehno == truth.striking_vehno, predicted.struck_vehno == truth.struck_vehno,
                       predicted.striking_edr == truth.striking_edr, predicted.struck_edr == truth.struck_edr};
    s.trial_pass = std::all_of(s.field_correct.begin(), s.field_correct.end(), [](bool b) { return b; });
    return s;
}

TrialScore failed_trial(const FirstCrashFinding& truth, std::string error) {
    TrialScore s;
    s.truth = truth;
    s.error = std::move(error);
    return s;
}

Stratum compute_stratum(const CrashCase& c, bool label_error_injected) {
    if (label_error_injected) return Stratum::Complicated;
    std::set<std::pair<int, int>> seen;
    for (const auto& r : c.edr_records) {
        if (!r.db_label.is_mapped()) continue;
        if (!seen.emplace(r.vehno.value, r.db_label.event.value).second) return Stratum::Complicated;
    }
    return Stratum::Simple;
}

// ---- metrics -----------------------------------------------------------------

namespace {

void add(GroupMetrics& g, const TrialScore& s) {
    ++g.trials;
    if (s.trial_pass) {
        ++g.passes;
        ++g.confusion.tp;
    } else {
        ++g.confusion.fn;
        if (s.predicted) ++g.confusion.fp;
    }
}

void finish(GroupMetrics& g) {
    const auto& m = g.confusion;
    g.accuracy = {g.passes, g.trials};
    g.precision = {m.tp, m.tp + m.fp};
    g.recall = {m.tp, m.tp + m.fn};
    g.f1 = {2 * m.tp, 2 * m.tp + m.fp + m.fn};
}

std::string stratum_key(const TrialScore& s) { return s.stratum ? std::string(stratum_name(*s.stratum)) : "untagged"; }

}  // namespace

MetricsTable summarize(const std::vector<TrialScore>& scores) {
    MetricsTable t;
    struct Acc {
        std::int64_t n = 0;
        double sum = 0.0;
        double min = std::numeric_limits<double>::infinity();
        double max = -std::numeric_limits<double>::infinity();
    };
    std::map<std::string, Acc> lat;
    for (const auto& s : scores) {
        add(t.overall, s);
        add(t.strata[stratum_key(s)], s);
        add(t.backends[s.backend], s);
        for (const auto& l : s.latency) {
            Acc& a = lat[l.phase];
            ++a.n;
            a.sum += l.seconds;
            a.min = std::min(a.min, l.seconds);
            a.max = std::max(a.max, l.seconds);
        }
    }
    finish(t.overall);
    for (auto& [k, g] : t.strata) finish(g);
    for (auto& [k, g] : t.backends) finish(g);

    std::vector<std::string> phases;
    for (const char* known : {"Phase I", "Phase II"}) {
        if (lat.count(known) != 0) phases.emplace_back(known);
    }
    for (const auto& [k, a] : lat) {
        if (k != "Phase I" && k != "Phase II") phases.push_back(k);
    }
    for (const auto& p : phases) {
        const Acc& a = lat[p];
        // Clamp guards the mean against rounding drift outside [min, max].
        t.latency.push_back({p, a.n, std::clamp(a.sum / static_cast<double>(a.n), a.min, a.max), a.min, a.max});
    }
    return t;
}

ConsistencyReport consistency_report(const std::vector<TrialScore>& scores) {
    ConsistencyReport r;
    std::map<std::string, std::size_t> index;
    std::vector<std::optional<FirstCrashFinding>> first;
    for (const auto& s : scores) {
        auto [it, inserted] = index.emplace(s.case_id, r.cases.size());
        if (inserted) {
            r.cases.push_back({s.case_id, 0, true});
            first.push_back(s.predicted);
        }
        CaseAgreement& ca = r.cases[it->second];
        ++ca.observations;
        const auto& ref = first[it->second];
        const bool same = ref.has_value() == s.predicted.has_value() && (!ref || same_outputs(*ref, *s.predicted));
        if (!same) ca.agree = false;
    }
    const bool multi = std::any_of(r.cases.begin(), r.cases.end(), [](const CaseAgreement& c) { return c.observations >= 2; });
    if (r.cases.empty()) {
        r.note = "no trials";
    } else if (!multi) {
        r.note = "agreement undefined (1 observation per case)";
    } else {
        const auto agreeing = std::count_if(r.cases.begin(), r.cases.end(), [](const CaseAgreement& c) { return c.agree; });
        r.agreement = {agreeing, static_cast<std::int64_t>(r.cases.size())};
    }
    return r;
}

ReportFormat report_format_from_name(std::string_view name) {
    if (name == "md" || name == "markdown") return ReportFormat::Markdown;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw ConfigError(fmt::format("unknown report format '{}' (expected md, csv or json)", name));
}

std::string_view report_format_extension(ReportFormat f) {
    switch (f) {
        case ReportFormat::Markdown: return "md";
        case ReportFormat::Csv: return "csv";
        case ReportFormat::Json: return "json";
    }
    return "txt";
}

// ---- rendering ---------------------------------------------------------------

namespace {

std::string edr_text(const std::optional<EdrEventNo>& e) { return e ? fmt::format("E{}", e->value) : "none"; }

std::string finding_text(const FirstCrashFinding& f) {
    return fmt::format("V{} / V{} / {} / {}", f.striking_vehno.value, f.struck_vehno.value, edr_text(f.striking_edr), edr_text(f.struck_edr));
}

void group_row(std::string& out, std::string_view label, const GroupMetrics& g) {
    out += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", label, g.trials, g.passes, g.accuracy.percent(), g.precision.fixed2(),
                       g.recall.fixed2(), g.f1.fixed2());
}

constexpr std::string_view kGroupHeader =
    "| Group | Trials | Passes | Accuracy | Precision | Recall | F1 |\n"
    "|---|---:|---:|---:|---:|---:|---:|\n";

std::string markdown(const MetricsTable& m, const std::vector<TrialScore>& scores) {
    std::string out = "# Evaluation Report\n\n";
    if (m.empty()) return out + "No trials.\n";

    const auto& g = m.overall;
    out += fmt::format("Trials: {}\nPasses: {}\nAccuracy: {}\nPrecision: {}\nRecall: {}\nF1: {}\n", g.trials, g.passes, g.accuracy.percent(),
                       g.precision.fixed2(), g.recall.fixed2(), g.f1.fixed2());

    out += "\n## Confusion Matrix\n\n";
    out += "| True positive | False positive | False negative | True negative |\n|---:|---:|---:|---:|\n";
    out += fmt::format("| {} | {} | {} | {} |\n", g.confusion.tp, g.confusion.fp, g.confusion.fn, g.confusion.tn);

    out += "\n## By Stratum\n\n";
    out += kGroupHeader;
    for (const auto& [k, v] : m.strata) group_row(out, k, v);

    out += "\n## By Backend\n\n";
    out += kGroupHeader;
    for (const auto& [k, v] : m.backends) group_row(out, k, v);

    out += "\n## Latency\n\n";
    if (m.latency.empty()) {
        out += "No latency observations.\n";
    } else {
        out += "| Phase | Calls | Mean (s) | Min (s) | Max (s) |\n|---|---:|---:|---:|---:|\n";
        for (const auto& r : m.latency) out += fmt::format("| {} | {} | {:.3f} | {:.3f} | {:.3f} |\n", r.phase, r.count, r.mean, r.min, r.max);
    }

    const ConsistencyReport cr = consistency_report(scores);
    out += "\n## Consistency\n\n";
    if (!cr.agreement.defined()) {
        out += cr.note + "\n";
    } else {
        out += fmt::format("Agreement: {} ({} of {} cases)\n", cr.agreement.percent(), cr.agreement.num, cr.agreement.den);
        for (const auto& c : cr.cases) {
            if (!c.agree) out += fmt::format("- {}: predictions differ across {} observations\n", c.case_id, c.observations);
        }
    }

    std::string failures;
    for (const auto& s : scores) {
        if (s.trial_pass) continue;
        std::string what = s.error;
        if (what.empty() && s.predicted) {
            std::string wrong;
            for (std::size_t i = 0; i < kAllFields.size(); ++i) {
                if (!s.field_correct[i]) wrong += (wrong.empty() ? "" : ", ") + std::string(field_name(kAllFields[i]));
            }
            what = fmt::format("predicted {}, expected {} (wrong: {})", finding_text(*s.predicted), finding_text(s.truth), wrong);
        }
        failures += fmt::format("- {} / {} / trial {}: {}\n", s.case_id, s.backend, s.trial, what);
    }
    if (!failures.empty()) out += "\n## Failed Trials\n\n" + failures;
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

std::string latency_of(const TrialScore& s, std::string_view phase) {
    for (const auto& l : s.latency) {
        if (l.phase == phase) return fmt::format("{:.6f}", l.seconds);
    }
    return "";
}

std::string csv(const std::vector<TrialScore>& scores) {
    std::string out =
        "case_id,backend,trial,stratum,pass,striking_vehno_ok,struck_vehno_ok,striking_edr_ok,struck_edr_ok,"
        "predicted_striking_vehno,predicted_struck_vehno,predicted_striking_edr,predicted_struck_edr,"
        "phase1_latency_sec,phase2_latency_sec,error\n";
    auto b = [](bool v) { return v ? "1" : "0"; };
    for (const auto& s : scores) {
        std::string pred = ",,,";
        if (s.predicted) {
            const auto& p = *s.predicted;
            pred = fmt::format("{},{},{},{}", p.striking_vehno.value, p.struck_vehno.value, p.striking_edr ? std::to_string(p.striking_edr->value) : "",
                               p.struck_edr ? std::to_string(p.struck_edr->value) : "");
        }
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(s.case_id), csv_field(s.backend), s.trial,
                           s.stratum ? stratum_name(*s.stratum) : "", b(s.trial_pass), b(s.field_correct[0]), b(s.field_correct[1]),
                           b(s.field_correct[2]), b(s.field_correct[3]), pred, latency_of(s, "Phase I"), latency_of(s, "Phase II"),
                           csv_field(s.error));
    }
    return out;
}

json ratio_json(const Ratio& r) { return json{{"num", r.num}, {"den", r.den}, {"rendered", r.percent()}}; }

json group_json(const GroupMetrics& g) {
    return json{{"trials", g.trials},
                {"passes", g.passes},
                {"confusion", json{{"tp", g.confusion.tp}, {"fp", g.confusion.fp}, {"fn", g.confusion.fn}, {"tn", g.confusion.tn}}},
                {"accuracy", ratio_json(g.accuracy)},
                {"precision", ratio_json(g.precision)},
                {"recall", ratio_json(g.recall)},
                {"f1", ratio_json(g.f1)}};
}

json score_json(const TrialScore& s) {
    json j;
    j["case_id"] = s.case_id;
    j["backend"] = s.backend;
    j["trial"] = s.trial;
    j["stratum"] = s.stratum ? json(std::string(stratum_name(*s.stratum))) : json(nullptr);
    j["predicted"] = s.predicted ? detail::finding_json(*s.predicted) : json(nullptr);
    j["truth"] = detail::finding_json(s.truth);
    json fc = json::object();
    for (std::size_t i = 0; i < kAllFields.size(); ++i) fc[std::string(field_name(kAllFields[i]))] = s.field_correct[i];
    j["field_correct"] = fc;
    j["trial_pass"] = s.trial_pass;
    json lat = json::array();
    for (const auto& l : s.latency) lat.push_back(json{{"phase", l.phase}, {"seconds", l.seconds}});
    j["latency"] = lat;
    j["error"] = s.error;
    return j;
}

std::string json_report(const MetricsTable& m, const std::vector<TrialScore>& scores) {
    json j;
    j["overall"] = group_json(m.overall);
    json strata = json::object();
    for (const auto& [k, v] : m.strata) strata[k] = group_json(v);
    j["strata"] = strata;
    json backends = json::object();
    for (const auto& [k, v] : m.backends) backends[k] = group_json(v);
    j["backends"] = backends;
    json lat = json::array();
    for (const auto& r : m.latency) lat.push_back(json{{"phase", r.phase}, {"count", r.count}, {"mean", r.mean}, {"min", r.min}, {"max", r.max}});
    j["latency"] = lat;
    const ConsistencyReport cr = consistency_report(scores);
    j["consistency"] = json{{"agreement", cr.agreement.defined() ? ratio_json(cr.agreement) : json(nullptr)}, {"note", cr.note}};
    json trials = json::array();
    for (const auto& s : scores) trials.push_back(score_json(s));
    j["trials"] = trials;
    return j.dump(2) + "\n";
}

}  // namespace

std::string emit_report(const MetricsTable& metrics, const std::vector<TrialScore>& scores, ReportFormat format) {
    switch (format) {
        case ReportFormat::Markdown: return markdown(metrics, scores);
        case ReportFormat::Csv: return csv(scores);
        case ReportFormat::Json: return json_report(metrics, scores);
    }
    return {};
}

// ---- trial log ---------------------------------------------------------------

std::string trial_score_to_json(const TrialScore& s) { return score_json(s).dump(); }

namespace {

const json& member(const json& j, const char* key) {
    if (!j.contains(key)) throw SchemaError(std::string("/") + key, "missing field");
    return j.at(key);
}

template <typename T>
T typed(const json& j, const char* key, bool (json::*check)() const noexcept, const char* what) {
    const json& v = member(j, key);
    if (!(v.*check)()) throw SchemaError(std::string("/") + key, std::string("expected ") + what);
    return v.get<T>();
}

}  // namespace

TrialScore trial_score_from_json(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw SyntaxError(e.what(), 1, e.byte);
    }
    if (!j.is_object()) throw SchemaError("", "expected an object");
    TrialScore s;
    s.case_id = typed<std::string>(j, "case_id", &json::is_string, "a string");
    s.backend = typed<std::string>(j, "backend", &json::is_string, "a string");
    s.trial = typed<int>(j, "trial", &json::is_number_integer, "an integer");
    const json& st = member(j, "stratum");
    if (!st.is_null()) {
        if (!st.is_string()) throw SchemaError("/stratum", "expected a string or null");
        s.stratum = stratum_from_name(st.get<std::string>());
        if (!s.stratum) throw SchemaError("/stratum", "unknown stratum");
    }
    const json& p = member(j, "predicted");
    if (!p.is_null()) s.predicted = detail::finding_from_json(p, "/predicted");
    s.truth = detail::finding_from_json(member(j, "truth"), "/truth");
    const json& fc = member(j, "field_correct");
    if (!fc.is_object()) throw SchemaError("/field_correct", "expected an object");
    for (std::size_t i = 0; i < kAllFields.size(); ++i) {
        const std::string key(field_name(kAllFields[i]));
        if (!fc.contains(key) || !fc[key].is_boolean()) throw SchemaError("/field_correct/" + key, "expected a boolean");
        s.field_correct[i] = fc[key].get<bool>();
    }
    s.trial_pass = typed<bool>(j, "trial_pass", &json::is_boolean, "a boolean");
    const json& lat = member(j, "latency");
    if (!lat.is_array()) throw SchemaError("/latency", "expected an array");
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const json& l = lat[i];
        if (!l.is_object() || !l.contains("phase") || !l["phase"].is_string() || !l.contains("seconds") || !l["seconds"].is_number()) {
            throw SchemaError(fmt::format("/latency/{}", i), "expected {phase, seconds}");
        }
        s.latency.push_back({l["phase"].get<std::string>(), l["seconds"].get<double>()});
    }
    s.error = typed<std::string>(j, "error", &json::is_string, "a string");
    return s;
}

void append_trial_log(const std::filesystem::path& path, const std::vector<TrialScore>& scores) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot open '{}' for appending", path.string()));
    for (const auto& s : scores) out << trial_score_to_json(s) << '\n';
    out.flush();
    if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

std::vector<TrialScore> read_trial_log(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::vector<TrialScore> scores;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        const std::string_view line(text.data() + start, end - start);
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            scores.push_back(trial_score_from_json(line));
        } catch (const SyntaxError& e) {
            throw SyntaxError(fmt::format("{}: invalid JSON", path.string()), line_no, e.column());
        } catch (const SchemaError& e) {
            throw SchemaError(fmt::format("{}:{}{}", path.string(), line_no, e.path()), "invalid trial record");
        }
    }
    return scores;
}

// ---- campaigns ---------------------------------------------------------------

namespace {

std::string describe(const std::exception& e) { return error_kind(e) + ": " + e.what(); }

struct Job {
    std::size_t case_index;
    std::size_t backend_index;
    int trial;
};

}  // namespace

std::vector<TrialScore> run_campaign(const std::vector<CrashCase>& corpus, const CampaignOptions& options) {
    if (options.trials_per_case < 1) throw ConfigError(fmt::format("trials per case must be at least 1 (got {})", options.trials_per_case));
    options.inference.check();
    for (const auto& c : corpus) {
        if (!c.ground_truth) throw ValidationError(fmt::format("case '{}' has no ground truth to score against", c.case_id));
    }

    std::vector<Job> jobs;
    if (options.mode == CampaignMode::Agent) {
        if (options.backends.empty()) throw ConfigError("an agent campaign needs at least one backend profile");
        std::set<std::string> names;
        for (const auto& b : options.backends) {
            if (!names.insert(b.name).second) throw ConfigError(fmt::format("backend name '{}' is used twice", b.name));
            const bool known = b.endpoint == "mock://echo" || b.endpoint == "mock://fail" || b.endpoint.rfind("http://", 0) == 0 ||
                               b.endpoint.rfind("https://", 0) == 0;
            if (!known) throw ConfigError(fmt::format("backend '{}' has unsupported endpoint '{}'", b.name, b.endpoint));
            resolve_credential(b);
        }
        for (std::size_t ci = 0; ci < corpus.size(); ++ci) {
            for (std::size_t bi = 0; bi < options.backends.size(); ++bi) {
                for (int t = 0; t < options.trials_per_case; ++t) jobs.push_back({ci, bi, t});
            }
        }
    } else {
        for (std::size_t ci = 0; ci < corpus.size(); ++ci) jobs.push_back({ci, 0, 0});
    }

    const TemplateSet templates = options.templates ? *options.templates : TemplateSet::embedded();
    std::vector<TrialScore> scores(jobs.size());

    auto run_job = [&](std::size_t index) {
        const Job& job = jobs[index];
        const CrashCase& c = corpus[job.case_index];
        const FirstCrashFinding& truth = *c.ground_truth;
        TrialScore s;
        if (options.mode == CampaignMode::Deterministic) {
            try {
                s = score_trial(infer_first_crash(c, options.inference), truth);
            } catch (const Error& e) {
                s = failed_trial(truth, describe(e));
            }
            s.backend = "rule-engine";
        } else {
            const BackendProfile& profile = options.backends[job.backend_index];
            try {
                auto backend = make_backend(profile, c, options.inference);
                const std::optional<Attachment> diagram = options.diagram_for ? options.diagram_for(c) : std::nullopt;
                const AgentRun run = run_agent_pipeline(c, profile, *backend, diagram, templates, options.dispatch);
                s = score_trial(run.finding, truth);
                s.latency = {{"Phase I", run.phase1.latency_sec}, {"Phase II", run.phase2.latency_sec}};
            } catch (const std::exception& e) {
                s = failed_trial(truth, describe(e));
            }
            s.backend = profile.name;
        }
        s.case_id = c.case_id;
        s.trial = job.trial;
        s.stratum = c.stratum;
        scores[index] = std::move(s);
    };

    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            run_job(i);
            const std::size_t finished = ++done;
            if (options.progress) {
                std::lock_guard lock(progress_mutex);
                options.progress(finished, jobs.size());
            }
        }
    };
    const unsigned n_threads = std::max(1U, std::min<unsigned>(options.parallelism, static_cast<unsigned>(std::max<std::size_t>(1, jobs.size()))));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return scores;
}

}  // namespace crashforge
