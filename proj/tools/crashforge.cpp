#include "crashforge/config.hpp"
#include "crashforge/errors.hpp"
#include "crashforge/eval.hpp"
#include "crashforge/ingest.hpp"
#include "crashforge/narrative.hpp"
#include "crashforge/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace crashforge;

namespace {

enum Exit { kOk = 0, kInput = 2, kDomain = 3, kBackend = 4, kConfig = 5 };

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NoEvents*>(&e) || dynamic_cast<const RoleIndeterminate*>(&e)) return kDomain;
    if (dynamic_cast<const AuthError*>(&e) || dynamic_cast<const TimeoutError*>(&e) || dynamic_cast<const TransportError*>(&e) ||
        dynamic_cast<const UnsupportedImage*>(&e)) {
        return kBackend;
    }
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const TemplateError*>(&e)) return kConfig;
    return kInput;
}

json error_json(const std::exception& e) { return json{{"error", error_kind(e)}, {"message", e.what()}}; }

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

std::string edr_text(const std::optional<EdrEventNo>& e) { return e ? fmt::format("EDREVENTNO={}", e->value) : "no EDR record"; }

json finding_json(const FirstCrashFinding& f) { return json::parse(finding_to_json(f)); }

struct Globals {
    std::optional<std::string> config_path;
    bool json = false;
};

PipelineConfig config_from(const Globals& g) {
    return load_config(g.config_path ? std::optional<fs::path>(*g.config_path) : std::nullopt);
}

// ---- validate ----------------------------------------------------------------

int cmd_validate(const Globals& g, const std::vector<std::string>& paths, bool lenient) {
    int status = kOk;
    json out = json::array();
    for (const auto& p : paths) {
        json entry{{"path", p}};
        try {
            const CrashCase c = load_case_file(p, lenient ? ParseMode::Lenient : ParseMode::Strict);
            const ValidationReport report = validate_case(c);
            entry["valid"] = report.empty();
            json violations = json::array();
            for (const auto& v : report) violations.push_back(json{{"field", v.field}, {"rule", v.rule}});
            entry["violations"] = violations;
            if (!report.empty()) status = kInput;
            if (!g.json) {
                if (report.empty()) std::cout << p << ": valid\n";
                else std::cout << p << ": " << report.size() << " violation(s)\n" << format_report(report);
            }
        } catch (const Error& e) {
            entry["valid"] = false;
            entry.update(error_json(e));
            status = std::max(status, exit_code_for(e));
            if (!g.json) std::cout << p << ": " << error_kind(e) << ": " << e.what() << '\n';
        }
        out.push_back(entry);
    }
    if (g.json) print_json(out);
    return status;
}

// ---- encode ------------------------------------------------------------------

int cmd_encode(const Globals& g, const std::string& case_path, const std::string& out_dir) {
    const CrashCase c = load_case_file(case_path);
    require_valid(c);
    const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    fs::create_directories(dir);
    const fs::path scene = dir / (c.case_id + ".scene.md");
    const fs::path edr = dir / (c.case_id + ".edr.md");
    write_file_atomic(scene, encode_scene_description(c).text);
    write_file_atomic(edr, encode_edr_report(c).text);
    if (g.json) print_json(json{{"case_id", c.case_id}, {"scene_description", scene.string()}, {"edr_report", edr.string()}});
    else std::cout << "wrote " << scene.string() << "\nwrote " << edr.string() << '\n';
    return kOk;
}

// ---- infer -------------------------------------------------------------------

int cmd_infer(const Globals& g, const std::string& target, bool explain) {
    const PipelineConfig cfg = config_from(g);
    std::vector<std::pair<std::string, std::function<CrashCase()>>> jobs;
    const bool corpus = fs::is_directory(target);
    if (corpus) {
        for (auto& entry : load_corpus(target, ParseMode::Strict, cfg.parallelism)) {
            jobs.emplace_back(entry.case_id, [entry]() -> CrashCase {
                if (entry.ok()) return entry.value();
                std::visit([](const auto& v) {
                    if constexpr (!std::is_same_v<std::decay_t<decltype(v)>, CrashCase>) throw v;
                }, entry.result);
                return {};
            });
        }
    } else {
        jobs.emplace_back(target, [target] { return load_case_file(target); });
    }

    int status = kOk;
    json out = json::array();
    for (const auto& [label, load] : jobs) {
        try {
            const CrashCase c = load();
            const FirstCrashFinding f = infer_first_crash(c, cfg.inference);
            if (g.json) {
                json j{{"case_id", c.case_id}};
                j.update(finding_json(f));
                if (!explain) j.erase("rationale");
                out.push_back(j);
            } else {
                std::cout << fmt::format("{}: striking VEHNO={} ({}), struck VEHNO={} ({})\n", c.case_id, f.striking_vehno.value,
                                         edr_text(f.striking_edr), f.struck_vehno.value, edr_text(f.struck_edr));
                if (explain) {
                    for (const auto& line : f.rationale) std::cout << "  " << line << '\n';
                }
            }
        } catch (const Error& e) {
            status = std::max(status, exit_code_for(e));
            if (g.json) {
                json j{{"case_id", label}};
                j.update(error_json(e));
                out.push_back(j);
            } else {
                std::cerr << label << ": " << error_kind(e) << ": " << e.what() << '\n';
            }
        }
    }
    if (g.json) print_json(corpus ? out : (out.empty() ? json::object() : out.front()));
    return status;
}

// ---- agent-run ---------------------------------------------------------------

struct AgentRunArgs {
    std::string corpus;
    std::vector<std::string> backends;
    int trials = 1;
    std::string out_dir;
    std::string name = "campaign";
    std::string mode = "agent";
    unsigned parallelism = 0;
};

int cmd_agent_run(const Globals& g, const AgentRunArgs& a) {
    const PipelineConfig cfg = config_from(g);
    if (a.trials < 1) throw ConfigError(fmt::format("--trials must be at least 1 (got {})", a.trials));

    CampaignOptions opt;
    if (a.mode == "agent") opt.mode = CampaignMode::Agent;
    else if (a.mode == "deterministic") opt.mode = CampaignMode::Deterministic;
    else throw ConfigError(fmt::format("unknown mode '{}' (expected agent or deterministic)", a.mode));
    opt.trials_per_case = a.trials;
    opt.parallelism = a.parallelism > 0 ? a.parallelism : cfg.parallelism;
    opt.inference = cfg.inference;
    opt.templates = cfg.templates();
    if (a.backends.empty()) {
        if (cfg.backends.empty()) opt.backends.push_back(default_mock_profile());
        else opt.backends = cfg.backends;
    } else {
        for (const auto& name : a.backends) opt.backends.push_back(cfg.backend(name));
    }
    // Fail on credentials before reading the corpus or dispatching anything.
    if (opt.mode == CampaignMode::Agent) {
        for (const auto& b : opt.backends) resolve_credential(b);
    }

    std::vector<CrashCase> cases;
    std::map<std::string, fs::path> case_dirs;
    for (auto& entry : load_corpus(a.corpus, ParseMode::Strict, opt.parallelism)) {
        if (!entry.ok()) throw ValidationError(entry.error_message());
        case_dirs[entry.value().case_id] = entry.path.parent_path();
        cases.push_back(entry.value());
    }
    opt.diagram_for = [&case_dirs](const CrashCase& c) -> std::optional<Attachment> {
        if (!c.scene_diagram) return std::nullopt;
        return Attachment{c.scene_diagram->media_type, load_scene_diagram(*c.scene_diagram, case_dirs.at(c.case_id))};
    };
    if (!g.json) {
        opt.progress = [](std::size_t done, std::size_t total) {
            if (done == total || done % 50 == 0) std::cerr << fmt::format("{}/{} trials\n", done, total);
        };
    }

    const std::vector<TrialScore> scores = run_campaign(cases, opt);
    const fs::path dir = a.out_dir.empty() ? cfg.output_dir : fs::path(a.out_dir);
    fs::create_directories(dir);
    const fs::path log = dir / (a.name + ".trials.jsonl");
    append_trial_log(log, scores);
    const MetricsTable metrics = summarize(scores);
    std::vector<std::string> written{log.string()};
    for (ReportFormat f : {ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json}) {
        const fs::path p = dir / fmt::format("{}.report.{}", a.name, report_format_extension(f));
        write_file_atomic(p, emit_report(metrics, scores, f));
        written.push_back(p.string());
    }

    const ConsistencyReport cr = consistency_report(scores);
    if (g.json) {
        print_json(json{{"trials", metrics.overall.trials},
                        {"passes", metrics.overall.passes},
                        {"accuracy", metrics.overall.accuracy.percent()},
                        {"agreement", cr.agreement.defined() ? json(cr.agreement.percent()) : json(cr.note)},
                        {"files", written}});
    } else {
        std::cout << fmt::format("{} trials, {} passed, accuracy {}\n", metrics.overall.trials, metrics.overall.passes,
                                 metrics.overall.accuracy.percent());
        std::cout << "agreement: " << (cr.agreement.defined() ? cr.agreement.percent() : cr.note) << '\n';
        for (const auto& w : written) std::cout << "wrote " << w << '\n';
    }
    return kOk;
}

// ---- synth -------------------------------------------------------------------

int cmd_synth(const Globals& g, const std::string& spec_path, const std::string& out_dir, unsigned parallelism) {
    const GeneratorSpec spec = parse_generator_spec(read_file(spec_path));
    const GeneratedCorpus corpus = generate(spec, std::max(1U, parallelism));
    const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    fs::create_directories(dir);

    json cases = json::array();
    for (const auto& gc : corpus.cases) {
        const std::string file = gc.c.case_id + ".case.json";
        write_file_atomic(dir / file, emit_case(gc.c));
        cases.push_back(json{{"file", file},
                             {"case_id", gc.c.case_id},
                             {"stratum", std::string(stratum_name(*gc.c.stratum))},
                             {"regenerations", gc.regenerations}});
    }
    json manifest;
    manifest["spec"] = json::parse(generator_spec_to_json(spec));
    manifest["seed"] = spec.seed;
    manifest["draws"] = corpus.draws;
    manifest["regenerations"] = corpus.regenerations;
    manifest["cases"] = cases;
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");

    if (g.json) {
        print_json(json{{"cases", corpus.cases.size()}, {"draws", corpus.draws}, {"regenerations", corpus.regenerations},
                        {"manifest", (dir / "manifest.json").string()}});
    } else {
        std::cout << fmt::format("wrote {} cases to {} ({} regenerations in {} draws)\n", corpus.cases.size(), dir.string(),
                                 corpus.regenerations, corpus.draws);
    }
    return kOk;
}

// ---- report ------------------------------------------------------------------

int cmd_report(const Globals& g, const std::string& log_path, const std::string& format, const std::string& out) {
    const std::vector<TrialScore> scores = read_trial_log(log_path);
    const ReportFormat f = report_format_from_name(format);
    const std::string text = emit_report(summarize(scores), scores, f);
    if (out.empty()) {
        std::cout << text;
    } else {
        write_file_atomic(out, text);
        if (g.json) print_json(json{{"report", out}, {"trials", scores.size()}});
        else std::cout << "wrote " << out << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crash reconstruction pipeline: first-crash-event and EDR record identification."};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "Pipeline configuration file (default: $CRASHFORGE_CONFIG)");

    auto* validate = app.add_subcommand("validate", "Check case documents against the schema and model invariants");
    std::vector<std::string> validate_paths;
    bool lenient = false;
    validate->add_option("paths", validate_paths, "Case files")->required();
    validate->add_flag("--lenient", lenient, "Keep unknown top-level keys instead of rejecting them");
    validate->add_flag("--json", g.json, "Machine-readable output");

    auto* encode = app.add_subcommand("encode", "Write the scene description and EDR report for a case");
    std::string encode_case;
    std::string encode_out;
    encode->add_option("case", encode_case, "Case file")->required();
    encode->add_option("--out", encode_out, "Output directory (default: current directory)");
    encode->add_flag("--json", g.json, "Machine-readable output");

    auto* infer = app.add_subcommand("infer", "Identify the first crash event and its EDR records");
    std::string infer_target;
    bool explain = false;
    infer->add_option("target", infer_target, "Case file or corpus directory")->required();
    infer->add_flag("--explain", explain, "Include the rationale");
    infer->add_flag("--json", g.json, "Machine-readable output");

    auto* agent = app.add_subcommand("agent-run", "Run a scored campaign through the two-phase agent");
    AgentRunArgs agent_args;
    agent->add_option("corpus", agent_args.corpus, "Corpus directory")->required();
    agent->add_option("--backends", agent_args.backends, "Backend profile names")->delimiter(',');
    agent->add_option("--trials", agent_args.trials, "Trials per case and backend");
    agent->add_option("--out", agent_args.out_dir, "Output directory (default: pipeline.output_dir)");
    agent->add_option("--name", agent_args.name, "Campaign name used for output files");
    agent->add_option("--mode", agent_args.mode, "agent or deterministic");
    agent->add_option("--parallelism", agent_args.parallelism, "Concurrent trials (default: pipeline.parallelism)");
    agent->add_flag("--json", g.json, "Machine-readable output");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus from a generator spec");
    std::string spec_path;
    std::string synth_out;
    unsigned synth_parallelism = 1;
    synth->add_option("spec", spec_path, "Generator spec (JSON)")->required();
    synth->add_option("--out", synth_out, "Output directory (default: current directory)");
    synth->add_option("--parallelism", synth_parallelism, "Worker threads");
    synth->add_flag("--json", g.json, "Machine-readable output");

    auto* report = app.add_subcommand("report", "Summarise a trial log");
    std::string log_path;
    std::string format = "md";
    std::string report_out;
    report->add_option("log", log_path, "Trial log (JSON lines)")->required();
    report->add_option("--format", format, "md, csv or json")->check(CLI::IsMember({"md", "markdown", "csv", "json"}));
    report->add_option("--out", report_out, "Output file (default: standard output)");
    report->add_flag("--json", g.json, "Machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInput;
    }

    try {
        if (*validate) return cmd_validate(g, validate_paths, lenient);
        if (*encode) return cmd_encode(g, encode_case, encode_out);
        if (*infer) return cmd_infer(g, infer_target, explain);
        if (*agent) return cmd_agent_run(g, agent_args);
        if (*synth) return cmd_synth(g, spec_path, synth_out, synth_parallelism);
        if (*report) return cmd_report(g, log_path, format, report_out);
    } catch (const std::exception& e) {
        if (g.json) print_json(error_json(e));
        else std::cerr << "error: " << error_kind(e) << ": " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kInput;
}
