#include "crashforge/ingest.hpp"

#include "crashforge/errors.hpp"
#include "json_util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>
#include <thread>

namespace crashforge {

namespace {

using json = nlohmann::ordered_json;

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
    // nlohmann reports the 1-based byte at which parsing failed.
    const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i < end; ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return {line, column};
}

std::string child(const std::string& path, std::string_view key) {
    std::string escaped;
    for (char ch : key) {
        if (ch == '~') escaped += "~0";
        else if (ch == '/') escaped += "~1";
        else escaped += ch;
    }
    return path + "/" + escaped;
}

std::string child(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

class Reader {
public:
    explicit Reader(ParseMode mode) : mode_(mode) {}

    const json& field(const json& obj, const std::string& path, std::string_view key) const {
        auto it = obj.find(key);
        if (it == obj.end()) throw SchemaError(child(path, key), fmt::format("missing field '{}'", key));
        return *it;
    }

    const json* optional_field(const json& obj, std::string_view key) const {
        auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) return nullptr;
        return &*it;
    }

    void expect_object(const json& j, const std::string& path) const {
        if (!j.is_object()) throw SchemaError(path, "expected an object");
    }

    void expect_array(const json& j, const std::string& path) const {
        if (!j.is_array()) throw SchemaError(path, "expected an array");
    }

    void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) const {
        if (mode_ != ParseMode::Strict) return;
        for (const auto& [key, value] : obj.items()) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                throw SchemaError(child(path, key), fmt::format("unknown field '{}'", key));
            }
        }
    }

    std::string string(const json& obj, const std::string& path, std::string_view key) const {
        const json& j = field(obj, path, key);
        if (!j.is_string()) throw SchemaError(child(path, key), "expected a string");
        return j.get<std::string>();
    }

    int integer(const json& j, const std::string& path) const {
        if (!j.is_number_integer()) throw SchemaError(path, "expected an integer");
        const auto v = j.get<std::int64_t>();
        if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) throw SchemaError(path, "integer out of range");
        return static_cast<int>(v);
    }

    int integer(const json& obj, const std::string& path, std::string_view key) const {
        return integer(field(obj, path, key), child(path, key));
    }

    double number(const json& j, const std::string& path) const {
        if (!j.is_number()) throw SchemaError(path, "expected a number");
        return j.get<double>();
    }

    double number(const json& obj, const std::string& path, std::string_view key) const {
        return number(field(obj, path, key), child(path, key));
    }

    [[nodiscard]] ParseMode mode() const noexcept { return mode_; }

private:
    ParseMode mode_;
};

ContactPlane read_plane(const Reader& r, const json& obj, const std::string& path, std::string_view key) {
    auto text = r.string(obj, path, key);
    if (text.empty()) throw SchemaError(child(path, key), "empty contact plane");
    return ContactPlane::from_name(text);
}

Vehicle read_vehicle(const Reader& r, const json& j, const std::string& path) {
    r.expect_object(j, path);
    r.check_keys(j, path, {"vehno", "vehicle_class", "damage_planes"});
    Vehicle v;
    v.vehno = VehNo{r.integer(j, path, "vehno")};
    v.vehicle_class = r.string(j, path, "vehicle_class");
    const std::string planes_path = child(path, "damage_planes");
    const json& planes = r.field(j, path, "damage_planes");
    r.expect_array(planes, planes_path);
    for (std::size_t i = 0; i < planes.size(); ++i) {
        if (!planes[i].is_string() || planes[i].get<std::string>().empty()) {
            throw SchemaError(child(planes_path, i), "expected a non-empty plane name");
        }
        v.damage_planes.push_back(ContactPlane::from_name(planes[i].get<std::string>()));
    }
    std::sort(v.damage_planes.begin(), v.damage_planes.end());
    v.damage_planes.erase(std::unique(v.damage_planes.begin(), v.damage_planes.end()), v.damage_planes.end());
    return v;
}

CrashEvent read_event(const Reader& r, const json& j, const std::string& path) {
    r.expect_object(j, path);
    r.check_keys(j, path, {"eventno", "actor_vehno", "actor_plane", "target_vehno", "target_plane"});
    CrashEvent e;
    e.eventno = EventNo{r.integer(j, path, "eventno")};
    e.actor_vehno = VehNo{r.integer(j, path, "actor_vehno")};
    e.actor_plane = read_plane(r, j, path, "actor_plane");
    e.target_vehno = VehNo{r.integer(j, path, "target_vehno")};
    e.target_plane = read_plane(r, j, path, "target_plane");
    return e;
}

EnvironmentRecord read_environment(const Reader& r, const json& j, const std::string& path) {
    r.expect_object(j, path);
    r.check_keys(j, path, {"vehno", "speed_limit_kmh", "trafficway_flow", "travel_lanes", "extra"});
    EnvironmentRecord env;
    env.vehno = VehNo{r.integer(j, path, "vehno")};
    env.speed_limit_kmh = r.number(j, path, "speed_limit_kmh");
    env.trafficway_flow = r.string(j, path, "trafficway_flow");
    env.travel_lanes = r.string(j, path, "travel_lanes");
    if (const json* extra = r.optional_field(j, "extra")) {
        const std::string extra_path = child(path, "extra");
        r.expect_array(*extra, extra_path);
        for (std::size_t i = 0; i < extra->size(); ++i) {
            const json& pair = (*extra)[i];
            const std::string p = child(extra_path, i);
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() || !pair[1].is_string()) {
                throw SchemaError(p, "expected a [key, value] pair of strings");
            }
            env.extra.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
        }
    }
    return env;
}

EventLabel read_label(const Reader& r, const json& j, const std::string& path) {
    if (j.is_string()) {
        const auto text = j.get<std::string>();
        if (text == "not_related") return EventLabel::not_related();
        if (text == "related_unknown") return EventLabel::related_unknown();
        throw SchemaError(path, fmt::format("unknown event label '{}'", text));
    }
    if (j.is_object()) {
        r.check_keys(j, path, {"mapped_event"});
        return EventLabel::mapped(r.integer(j, path, "mapped_event"));
    }
    throw SchemaError(path, "expected {\"mapped_event\": n}, \"not_related\" or \"related_unknown\"");
}

TimeSeries read_series(const Reader& r, const json& j, const std::string& path) {
    r.expect_array(j, path);
    if (j.empty()) throw SchemaError(path, "time series has no samples");
    TimeSeries ts;
    ts.samples.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json& pair = j[i];
        const std::string p = child(path, i);
        if (!pair.is_array() || pair.size() != 2) throw SchemaError(p, "expected a [t, value] pair");
        Sample s{r.number(pair[0], child(p, 0)), r.number(pair[1], child(p, 1))};
        if (!ts.samples.empty() && !(s.t_sec > ts.samples.back().t_sec)) throw SchemaError(child(p, 0), "non-increasing time");
        ts.samples.push_back(s);
    }
    return ts;
}

EdrRecord read_record(const Reader& r, const json& j, const std::string& path) {
    r.expect_object(j, path);
    r.check_keys(j, path, {"vehno", "edr_event_no", "label", "channels"});
    EdrRecord rec;
    rec.vehno = VehNo{r.integer(j, path, "vehno")};
    rec.edr_event_no = EdrEventNo{r.integer(j, path, "edr_event_no")};
    rec.db_label = read_label(r, r.field(j, path, "label"), child(path, "label"));
    const std::string channels_path = child(path, "channels");
    const json& channels = r.field(j, path, "channels");
    r.expect_object(channels, channels_path);
    for (const auto& [name, series] : channels.items()) {
        auto ch = channel_from_name(name);
        if (!ch) {
            if (r.mode() == ParseMode::Strict) throw SchemaError(child(channels_path, name), fmt::format("unknown channel '{}'", name));
            continue;
        }
        rec.channels[*ch] = read_series(r, series, child(channels_path, name));
    }
    return rec;
}

std::optional<EdrEventNo> read_optional_edr(const Reader& r, const json& obj, const std::string& path, std::string_view key) {
    const json& j = r.field(obj, path, key);
    if (j.is_null()) return std::nullopt;
    return EdrEventNo{r.integer(j, child(path, key))};
}

FirstCrashFinding read_finding(const Reader& r, const json& j, const std::string& path) {
    r.expect_object(j, path);
    r.check_keys(j, path, {"striking_vehno", "struck_vehno", "striking_edr", "struck_edr", "rationale"});
    FirstCrashFinding f;
    f.striking_vehno = VehNo{r.integer(j, path, "striking_vehno")};
    f.struck_vehno = VehNo{r.integer(j, path, "struck_vehno")};
    f.striking_edr = read_optional_edr(r, j, path, "striking_edr");
    f.struck_edr = read_optional_edr(r, j, path, "struck_edr");
    if (const json* rationale = r.optional_field(j, "rationale")) {
        const std::string p = child(path, "rationale");
        r.expect_array(*rationale, p);
        for (std::size_t i = 0; i < rationale->size(); ++i) {
            if (!(*rationale)[i].is_string()) throw SchemaError(child(p, i), "expected a string");
            f.rationale.push_back((*rationale)[i].get<std::string>());
        }
    }
    return f;
}

template <class T, class Fn>
std::vector<T> read_list(const Reader& r, const json& doc, std::string_view key, Fn&& fn) {
    const std::string path = child("", key);
    const json& arr = r.field(doc, "", key);
    r.expect_array(arr, path);
    std::vector<T> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(fn(r, arr[i], child(path, i)));
    return out;
}

constexpr std::string_view kTopLevelKeys[] = {"schema_version", "case_id",     "stratum",       "vehicles",    "events",
                                              "environments",   "edr_records", "scene_diagram", "ground_truth"};

json series_json(const TimeSeries& ts) {
    json arr = json::array();
    for (const auto& s : ts.samples) arr.push_back(json::array({detail::number_json(s.t_sec), detail::number_json(s.value)}));
    return arr;
}

json label_json(const EventLabel& l) {
    switch (l.kind) {
        case EventLabel::Kind::MappedToEvent: return json{{"mapped_event", l.event.value}};
        case EventLabel::Kind::NotRelatedToCrash: return "not_related";
        case EventLabel::Kind::RelatedUnknownEvent: return "related_unknown";
    }
    return nullptr;
}

}  // namespace

namespace detail {

nlohmann::ordered_json number_json(double v) {
    if (std::isfinite(v) && std::trunc(v) == v && std::fabs(v) < 9.007199254740992e15) {
        return static_cast<std::int64_t>(v);
    }
    return v;
}

nlohmann::ordered_json finding_json(const FirstCrashFinding& f) {
    nlohmann::ordered_json j;
    j["striking_vehno"] = f.striking_vehno.value;
    j["struck_vehno"] = f.struck_vehno.value;
    j["striking_edr"] = f.striking_edr ? nlohmann::ordered_json(f.striking_edr->value) : nlohmann::ordered_json(nullptr);
    j["struck_edr"] = f.struck_edr ? nlohmann::ordered_json(f.struck_edr->value) : nlohmann::ordered_json(nullptr);
    j["rationale"] = f.rationale;
    return j;
}

FirstCrashFinding finding_from_json(const nlohmann::ordered_json& j, const std::string& path) {
    return read_finding(Reader(ParseMode::Strict), j, path);
}

}  // namespace detail

CrashCase parse_case(std::string_view bytes, ParseMode mode) {
    json doc;
    try {
        doc = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        auto [line, column] = line_column(bytes, e.byte);
        throw SyntaxError("malformed case document", line, column);
    }

    const Reader r(mode);
    r.expect_object(doc, "");
    {
        const json& version = r.field(doc, "", "schema_version");
        if (!version.is_string()) throw SchemaError("/schema_version", "expected a string");
        if (version.get<std::string>() != kSchemaVersion) {
            throw VersionError(fmt::format("unsupported schema_version '{}' (expected '{}')", version.get<std::string>(), kSchemaVersion));
        }
    }

    CrashCase c;
    for (const auto& [key, value] : doc.items()) {
        if (std::find(std::begin(kTopLevelKeys), std::end(kTopLevelKeys), key) != std::end(kTopLevelKeys)) continue;
        if (mode == ParseMode::Strict) throw SchemaError(child("", key), fmt::format("unknown top-level field '{}'", key));
        c.extra_fields.emplace_back(key, value.dump());
    }
    std::sort(c.extra_fields.begin(), c.extra_fields.end());

    c.case_id = r.string(doc, "", "case_id");
    if (const json* s = r.optional_field(doc, "stratum")) {
        if (!s->is_string() || !stratum_from_name(s->get<std::string>())) {
            throw SchemaError("/stratum", "expected \"simple\" or \"complicated\"");
        }
        c.stratum = stratum_from_name(s->get<std::string>());
    }
    c.vehicles = read_list<Vehicle>(r, doc, "vehicles", read_vehicle);
    c.events = read_list<CrashEvent>(r, doc, "events", read_event);
    c.environments = read_list<EnvironmentRecord>(r, doc, "environments", read_environment);
    c.edr_records = read_list<EdrRecord>(r, doc, "edr_records", read_record);
    if (const json* d = r.optional_field(doc, "scene_diagram")) {
        r.expect_object(*d, "/scene_diagram");
        r.check_keys(*d, "/scene_diagram", {"path", "media_type"});
        c.scene_diagram = SceneDiagramRef{r.string(*d, "/scene_diagram", "path"), r.string(*d, "/scene_diagram", "media_type")};
    }
    if (const json* g = r.optional_field(doc, "ground_truth")) c.ground_truth = read_finding(r, *g, "/ground_truth");
    return c;
}

std::string emit_case(const CrashCase& c) {
    require_valid(c);

    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["case_id"] = c.case_id;
    if (c.stratum) doc["stratum"] = stratum_name(*c.stratum);

    json vehicles = json::array();
    for (const auto& v : c.vehicles) {
        json planes = json::array();
        for (const auto& p : v.damage_planes) planes.push_back(p.name());
        vehicles.push_back(json{{"vehno", v.vehno.value}, {"vehicle_class", v.vehicle_class}, {"damage_planes", planes}});
    }
    doc["vehicles"] = std::move(vehicles);

    json events = json::array();
    for (const auto& e : c.events) {
        events.push_back(json{{"eventno", e.eventno.value},
                              {"actor_vehno", e.actor_vehno.value},
                              {"actor_plane", e.actor_plane.name()},
                              {"target_vehno", e.target_vehno.value},
                              {"target_plane", e.target_plane.name()}});
    }
    doc["events"] = std::move(events);

    json envs = json::array();
    for (const auto& env : c.environments) {
        json extra = json::array();
        for (const auto& [k, v] : env.extra) extra.push_back(json::array({k, v}));
        envs.push_back(json{{"vehno", env.vehno.value},
                            {"speed_limit_kmh", detail::number_json(env.speed_limit_kmh)},
                            {"trafficway_flow", env.trafficway_flow},
                            {"travel_lanes", env.travel_lanes},
                            {"extra", extra}});
    }
    doc["environments"] = std::move(envs);

    json records = json::array();
    for (const auto& rec : c.edr_records) {
        json channels = json::object();
        for (const auto& [ch, series] : rec.channels) channels[std::string(channel_name(ch))] = series_json(series);
        records.push_back(json{{"vehno", rec.vehno.value},
                               {"edr_event_no", rec.edr_event_no.value},
                               {"label", label_json(rec.db_label)},
                               {"channels", channels}});
    }
    doc["edr_records"] = std::move(records);

    if (c.scene_diagram) doc["scene_diagram"] = json{{"path", c.scene_diagram->path}, {"media_type", c.scene_diagram->media_type}};
    if (c.ground_truth) doc["ground_truth"] = detail::finding_json(*c.ground_truth);
    for (const auto& [key, text] : c.extra_fields) doc[key] = json::parse(text);

    return doc.dump(2) + "\n";
}

std::string finding_to_json(const FirstCrashFinding& f, int indent) { return detail::finding_json(f).dump(indent); }

std::string CorpusEntry::error_message() const {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, CrashCase>) {
                return {};
            } else {
                return v.what();
            }
        },
        result);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename into '" + path.string() + "'");
    }
}

CrashCase load_case_file(const std::filesystem::path& path, ParseMode mode) { return parse_case(read_file(path), mode); }

std::vector<unsigned char> load_scene_diagram(const SceneDiagramRef& ref, const std::filesystem::path& case_dir) {
    const std::string bytes = read_file(case_dir / ref.path);
    return {bytes.begin(), bytes.end()};
}

std::vector<CorpusEntry> load_corpus(const std::filesystem::path& dir, ParseMode mode, unsigned parallelism) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: '" + dir.string() + "'");

    constexpr std::string_view kSuffix = ".case.json";
    std::vector<std::filesystem::path> files;
    for (std::filesystem::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
        const std::string name = it->path().filename().string();
        if (name.size() > kSuffix.size() && name.compare(name.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0 &&
            it->is_regular_file()) {
            files.push_back(it->path());
        }
    }
    if (ec) throw IoError("cannot list '" + dir.string() + "': " + ec.message());
    std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

    std::vector<CorpusEntry> entries(files.size());
    auto load_one = [&](std::size_t i) {
        auto& e = entries[i];
        e.path = files[i];
        const std::string name = files[i].filename().string();
        e.case_id = name.substr(0, name.size() - kSuffix.size());
        try {
            CrashCase c = load_case_file(files[i], mode);
            e.case_id = c.case_id;
            e.result = std::move(c);
        } catch (const SyntaxError& err) {
            e.result = err;
        } catch (const SchemaError& err) {
            e.result = err;
        } catch (const VersionError& err) {
            e.result = err;
        } catch (const IoError& err) {
            e.result = err;
        }
    };

    const unsigned workers = std::max(1U, std::min<unsigned>(parallelism, static_cast<unsigned>(files.size())));
    if (workers <= 1) {
        for (std::size_t i = 0; i < files.size(); ++i) load_one(i);
        return entries;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < files.size(); i = next++) load_one(i);
        });
    }
    for (auto& t : pool) t.join();
    return entries;
}

}  // namespace crashforge
