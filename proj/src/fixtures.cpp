#include "crashforge/fixtures.hpp"

#include <cmath>
#include <functional>

namespace crashforge {

namespace {

double round1(double v) { return std::round(v * 10.0) / 10.0; }

ContactPlane plane(ContactPlane::Kind k) { return {k, {}}; }

// Samples on t = -5.0 .. 0.0 with the given period in tenths of a second.
TimeSeries series(int period_tenths, const std::function<double(int)>& value) {
    TimeSeries ts;
    for (int k = 0; k <= 50; k += period_tenths) ts.samples.push_back({(k - 50) / 10.0, value(k)});
    return ts;
}

CrashEvent event(int no, int actor, ContactPlane::Kind actor_plane, int target, ContactPlane::Kind target_plane) {
    return {EventNo{no}, VehNo{actor}, plane(actor_plane), VehNo{target}, plane(target_plane)};
}

}  // namespace

CrashCase fixture_figure2() {
    using K = ContactPlane::Kind;
    CrashCase c;
    c.case_id = "28197";
    c.stratum = Stratum::Simple;
    c.vehicles = {
        {VehNo{1}, "Pickup Truck", {plane(K::Front)}},
        {VehNo{2}, "Medium Passenger Car", {plane(K::Front), plane(K::Back)}},
        // V3 and V4 are synthetic filler.
        {VehNo{3}, "Compact Utility Vehicle", {plane(K::Back)}},
        {VehNo{4}, "Large Passenger Car", {plane(K::Right)}},
    };
    c.events = {
        event(1, 1, K::Front, 2, K::Back),
        event(2, 2, K::Front, 3, K::Back),
    };
    const std::string flow = "Not physically divided (two-way traffic)";
    c.environments = {
        {VehNo{1}, 72.0, flow, "Two", {}},
        {VehNo{2}, 72.0, flow, "Two", {}},
        {VehNo{3}, 72.0, flow, "Two", {}},
        {VehNo{4}, 72.0, flow, "Two", {}},
    };

    EdrRecord e1;
    e1.vehno = VehNo{2};
    e1.edr_event_no = EdrEventNo{1};
    e1.db_label = EventLabel::mapped(1);
    e1.channels[Channel::Speed] = series(2, [](int k) {
        constexpr double head[] = {9.7, 9.5, 9.4, 9.2};
        const int i = k / 2;
        return i < 4 ? head[i] : round1(9.2 - 0.2 * (i - 3));
    });
    e1.channels[Channel::Steering] = series(1, [](int k) { return k < 30 ? -0.9 : round1(-0.9 + 0.1 * (k - 29)); });
    e1.channels[Channel::Brake] = series(2, [](int k) { return k >= 40 ? 1.0 : 0.0; });

    EdrRecord e2;
    e2.vehno = VehNo{2};
    e2.edr_event_no = EdrEventNo{2};
    e2.db_label = EventLabel::mapped(2);
    e2.channels[Channel::Speed] = series(2, [](int k) { return round1(31.0 - 0.2 * (k / 2)); });
    e2.channels[Channel::Brake] = series(2, [](int k) { return k >= 46 ? 1.0 : 0.0; });

    c.edr_records = {e1, e2};
    c.ground_truth = FirstCrashFinding{VehNo{1}, VehNo{2}, std::nullopt, EdrEventNo{1}, {}};
    return c;
}

CrashCase replay_case_32548() {
    using K = ContactPlane::Kind;
    CrashCase c;
    c.case_id = "32548";
    c.stratum = Stratum::Complicated;
    c.vehicles = {
        {VehNo{1}, "Small Passenger Car", {plane(K::Front)}},
        {VehNo{2}, "Small Passenger Car", {plane(K::Front), plane(K::Back)}},
        {VehNo{3}, "Sport Utility Vehicle", {plane(K::Front)}},
    };
    c.events = {
        event(1, 3, K::Front, 2, K::Back),
        event(2, 1, K::Front, 2, K::Front),
    };
    const std::string flow = "Not physically divided (two-way traffic)";
    for (int v = 1; v <= 3; ++v) c.environments.push_back({VehNo{v}, 56.0, flow, "Two", {{"Roadway Alignment", "Straight"}}});

    auto record = [](int vehno, int edr, EventLabel label) {
        EdrRecord r;
        r.vehno = VehNo{vehno};
        r.edr_event_no = EdrEventNo{edr};
        r.db_label = label;
        return r;
    };

    // E1-E4: identical, triggered by the second impact. Speed falls to 2 km/h
    // in the first collision (the segment E5 also holds, 1.2 s later on this
    // clock) and rises again as V2 is pushed forward.
    auto second_impact = [&](int edr, EventLabel label) {
        EdrRecord r = record(2, edr, label);
        r.channels[Channel::Speed] = series(1, [](int k) {
            if (k <= 38) return round1(2.0 + 0.7 * (38 - k) + (k <= 3 ? 1.0 : 0.0));
            if (k <= 48) return round1(2.0 + 1.6 * (k - 38));
            return k == 49 ? 18.0 : 17.6;
        });
        r.channels[Channel::Brake] = series(1, [](int) { return 1.0; });
        r.channels[Channel::Accel] = series(1, [](int) { return 0.0; });
        return r;
    };

    EdrRecord v2e5 = record(2, 5, EventLabel::mapped(1));
    v2e5.channels[Channel::Speed] = series(1, [](int k) { return round1(2.0 + 0.7 * (50 - k)); });
    v2e5.channels[Channel::Brake] = series(1, [](int k) { return k >= 5 ? 1.0 : 0.0; });
    v2e5.channels[Channel::Accel] = series(1, [](int) { return 0.0; });

    EdrRecord v2e6 = record(2, 6, EventLabel::not_related());
    v2e6.channels[Channel::Speed] = series(1, [](int k) { return round1(46.0 - 0.1 * k); });
    v2e6.channels[Channel::Brake] = series(1, [](int) { return 0.0; });
    v2e6.channels[Channel::Accel] = series(1, [](int) { return 15.0; });

    EdrRecord v3e1 = record(3, 1, EventLabel::mapped(1));
    v3e1.channels[Channel::Speed] = series(1, [](int k) { return round1(64.0 + 0.3 * (((7 * k) % 5) - 2)); });
    v3e1.channels[Channel::Brake] = series(1, [](int k) { return k == 50 ? 1.0 : 0.0; });
    v3e1.channels[Channel::Accel] = series(1, [](int k) { return k <= 47 ? 18.0 : 0.0; });

    c.edr_records = {
        second_impact(1, EventLabel::mapped(2)),
        second_impact(2, EventLabel::mapped(1)),
        second_impact(3, EventLabel::mapped(2)),
        second_impact(4, EventLabel::mapped(2)),
        v2e5,
        v2e6,
        v3e1,
    };
    c.ground_truth = FirstCrashFinding{VehNo{3}, VehNo{2}, EdrEventNo{1}, EdrEventNo{5}, {}};
    return c;
}

}  // namespace crashforge
