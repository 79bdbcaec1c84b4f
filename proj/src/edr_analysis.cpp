#include "crashforge/edr_analysis.hpp"

#include "crashforge/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>

namespace crashforge {

namespace {

using Micros = std::int64_t;

constexpr double kValueEpsilon = 1e-9;

Micros to_micros(double sec) { return std::llround(sec * 1e6); }

struct Series {
    std::vector<Micros> t;
    std::vector<double> v;
};

Series to_series(const TimeSeries& ts) {
    Series s;
    s.t.reserve(ts.size());
    s.v.reserve(ts.size());
    for (const auto& x : ts.samples) {
        s.t.push_back(to_micros(x.t_sec));
        s.v.push_back(x.value);
    }
    return s;
}

std::optional<Micros> min_period(const Series& s) {
    std::optional<Micros> best;
    for (std::size_t i = 1; i < s.t.size(); ++i) {
        const Micros d = s.t[i] - s.t[i - 1];
        if (d > 0 && (!best || d < *best)) best = d;
    }
    return best;
}

Micros half_window(const Series& a, const Series& b) {
    auto pa = min_period(a);
    auto pb = min_period(b);
    if (pa && pb) return std::min(*pa, *pb) / 2;
    if (pa) return *pa / 2;
    if (pb) return *pb / 2;
    return 0;
}

// Index of the element of `times` nearest to x (offset added to every element);
// equal distances resolve to the earlier element.
std::size_t nearest(const std::vector<Micros>& times, Micros offset, Micros x) {
    auto it = std::lower_bound(times.begin(), times.end(), x - offset);
    std::size_t hi = static_cast<std::size_t>(it - times.begin());
    if (hi == times.size()) return times.size() - 1;
    if (hi == 0) return 0;
    const Micros d_hi = times[hi] + offset - x;
    const Micros d_lo = x - (times[hi - 1] + offset);
    return d_lo <= d_hi ? hi - 1 : hi;
}

// Mutual-nearest pairs of a (unshifted) and b shifted by `shift`.
std::vector<std::pair<std::size_t, std::size_t>> pair_samples(const Series& a, const Series& b, Micros shift, Micros half) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (a.t.empty() || b.t.empty()) return pairs;
    for (std::size_t i = 0; i < a.t.size(); ++i) {
        const std::size_t j = nearest(b.t, shift, a.t[i]);
        const Micros d = b.t[j] + shift - a.t[i];
        if ((d < 0 ? -d : d) > half) continue;
        if (nearest(a.t, 0, b.t[j] + shift) == i) pairs.emplace_back(i, j);
    }
    return pairs;
}

std::size_t count_agreeing(const Series& a, const Series& b, const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double tol) {
    std::size_t n = 0;
    for (auto [i, j] : pairs) {
        if (std::fabs(a.v[i] - b.v[j]) <= tol + kValueEpsilon) ++n;
    }
    return n;
}

}  // namespace

void AlignmentConfig::check() const {
    if (!(shift_range_sec >= 0.0) || !(shift_step_sec > 0.0) || !std::isfinite(shift_range_sec) || !std::isfinite(shift_step_sec)) {
        throw ConfigError(fmt::format("empty shift grid (range {}, step {})", shift_range_sec, shift_step_sec));
    }
    if (to_micros(shift_step_sec) <= 0) throw ConfigError("shift step below one microsecond");
    for (Channel c : kAllChannels) {
        const double tol = tolerance_of(c);
        if (!(tol > 0.0)) throw ConfigError(fmt::format("tolerance for {} must be positive", channel_name(c)));
    }
    if (min_overlap_samples < 1) throw ConfigError("min_overlap_samples must be at least 1");
    if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0)) throw ConfigError("overlap threshold must lie in (0, 1]");
}

double AlignmentConfig::tolerance_of(Channel c) const {
    auto it = tolerance.find(c);
    return it == tolerance.end() ? 0.0 : it->second;
}

AlignmentResult align_records(const EdrRecord& a, const EdrRecord& b, const AlignmentConfig& cfg) {
    cfg.check();
    const TimeSeries* speed_a = a.channel(Channel::Speed);
    const TimeSeries* speed_b = b.channel(Channel::Speed);
    if (speed_a == nullptr || speed_b == nullptr) {
        const EdrRecord& missing = speed_a == nullptr ? a : b;
        throw ChannelMissing(fmt::format("VEHNO={} EDREVENTNO={} has no speed channel", missing.vehno.value, missing.edr_event_no.value));
    }

    const Series sa = to_series(*speed_a);
    const Series sb = to_series(*speed_b);
    const Micros half = half_window(sa, sb);
    const Micros step = to_micros(cfg.shift_step_sec);
    const Micros range = to_micros(cfg.shift_range_sec);
    const std::int64_t k_max = range / step;
    const double tol = cfg.tolerance_of(Channel::Speed);
    const auto min_pairs = static_cast<std::size_t>(cfg.min_overlap_samples);
    // On an exact tie between +s and -s the sign follows the record order, so
    // that align(a, b) and align(b, a) stay exact negations of each other.
    const bool prefer_negative = !(key_of(b) < key_of(a));

    Micros best_shift = 0;
    std::size_t best_matched = 0;
    std::size_t best_pairs = 0;
    bool have_best = false;
    auto better = [&](Micros s, std::size_t m, std::size_t n) {
        if (!have_best) return true;
        // Compare m/n with best_matched/best_pairs exactly; 0/0 counts as 0.
        const unsigned long long lhs = static_cast<unsigned long long>(n == 0 ? 0 : m) * (best_pairs == 0 ? 1 : best_pairs);
        const unsigned long long rhs = static_cast<unsigned long long>(best_pairs == 0 ? 0 : best_matched) * (n == 0 ? 1 : n);
        if (lhs != rhs) return lhs > rhs;
        const Micros abs_s = s < 0 ? -s : s;
        const Micros abs_best = best_shift < 0 ? -best_shift : best_shift;
        if (abs_s != abs_best) return abs_s < abs_best;
        return prefer_negative ? s < best_shift : s > best_shift;
    };

    for (std::int64_t k = -k_max; k <= k_max; ++k) {
        const Micros s = k * step;
        auto pairs = pair_samples(sa, sb, s, half);
        std::size_t n = pairs.size();
        std::size_t m = n >= min_pairs ? count_agreeing(sa, sb, pairs, tol) : 0;
        if (n < min_pairs) n = 0;
        if (better(s, m, n)) {
            best_shift = s;
            best_matched = m;
            best_pairs = n;
            have_best = true;
        }
    }

    AlignmentResult out;
    out.record_a = key_of(a);
    out.record_b = key_of(b);
    out.best_shift_sec = static_cast<double>(best_shift) / 1e6;
    out.matched_pairs = best_matched;
    out.compared_pairs = best_pairs;
    out.matched_fraction = best_pairs == 0 ? 0.0 : static_cast<double>(best_matched) / static_cast<double>(best_pairs);

    for (Channel c : kAllChannels) {
        const TimeSeries* ca = a.channel(c);
        const TimeSeries* cb = b.channel(c);
        if (ca == nullptr || cb == nullptr) continue;
        const Series xa = to_series(*ca);
        const Series xb = to_series(*cb);
        auto pairs = pair_samples(xa, xb, best_shift, half_window(xa, xb));
        out.channel_agreement[c] =
            pairs.empty() ? 0.0 : static_cast<double>(count_agreeing(xa, xb, pairs, cfg.tolerance_of(c))) / static_cast<double>(pairs.size());
    }
    return out;
}

bool OverlapCluster::contains(EdrEventNo e) const { return std::binary_search(members.begin(), members.end(), e); }

std::vector<OverlapCluster> cluster_overlaps(const std::vector<const EdrRecord*>& records, const AlignmentConfig& cfg) {
    cfg.check();
    std::vector<const EdrRecord*> sorted = records;
    std::sort(sorted.begin(), sorted.end(), [](const EdrRecord* x, const EdrRecord* y) { return key_of(*x) < key_of(*y); });
    const std::size_t n = sorted.size();

    // shift[i][j]: trigger of j on i's clock, valid where edge[i][j].
    std::vector<std::vector<char>> edge(n, std::vector<char>(n, 0));
    std::vector<std::vector<double>> shift(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        if (sorted[i]->channel(Channel::Speed) == nullptr) continue;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (sorted[j]->channel(Channel::Speed) == nullptr) continue;
            const auto r = align_records(*sorted[i], *sorted[j], cfg);
            if (r.compared_pairs > 0 && r.matched_fraction >= cfg.overlap_threshold) {
                edge[i][j] = edge[j][i] = 1;
                shift[i][j] = r.best_shift_sec;
                shift[j][i] = -r.best_shift_sec;
            }
        }
    }

    std::vector<OverlapCluster> clusters;
    std::vector<char> seen(n, 0);
    for (std::size_t root = 0; root < n; ++root) {
        if (seen[root]) continue;
        OverlapCluster c;
        c.anchor = sorted[root]->edr_event_no;
        std::queue<std::size_t> frontier;
        frontier.push(root);
        seen[root] = 1;
        c.trigger_offset_sec[c.anchor] = 0.0;
        while (!frontier.empty()) {
            const std::size_t p = frontier.front();
            frontier.pop();
            c.members.push_back(sorted[p]->edr_event_no);
            for (std::size_t m = 0; m < n; ++m) {
                if (!edge[p][m] || seen[m]) continue;
                seen[m] = 1;
                c.trigger_offset_sec[sorted[m]->edr_event_no] = c.trigger_offset_sec[sorted[p]->edr_event_no] + shift[p][m];
                frontier.push(m);
            }
        }
        std::sort(c.members.begin(), c.members.end());
        clusters.push_back(std::move(c));
    }
    return clusters;
}

std::string_view dynamics_class_name(DynamicsClass c) {
    switch (c) {
        case DynamicsClass::DeceleratingLead: return "DeceleratingLead";
        case DynamicsClass::ApproachThenLateBrake: return "ApproachThenLateBrake";
        case DynamicsClass::SteadyState: return "SteadyState";
        case DynamicsClass::Indeterminate: return "Indeterminate";
    }
    return "";
}

namespace {

bool steady(const std::vector<double>& values, double band) {
    if (values.empty()) return false;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    return std::all_of(values.begin(), values.end(), [&](double v) { return std::fabs(v - mean) < band; });
}

}  // namespace

DynamicsProfile profile_dynamics(const EdrRecord& record, const DynamicsConfig& cfg) {
    const TimeSeries* speed = record.channel(Channel::Speed);
    if (speed == nullptr) {
        throw ChannelMissing(fmt::format("VEHNO={} EDREVENTNO={} has no speed channel", record.vehno.value, record.edr_event_no.value));
    }
    std::vector<Sample> pre;
    for (const auto& s : speed->samples) {
        if (s.t_sec <= 0.0) pre.push_back(s);
    }
    if (pre.empty()) {
        throw ChannelMissing(fmt::format("VEHNO={} EDREVENTNO={} has no pre-crash speed samples", record.vehno.value, record.edr_event_no.value));
    }

    DynamicsProfile p;
    p.initial_speed_kmh = pre.front().value;
    p.final_speed_kmh = pre.back().value;
    p.net_delta_v_kmh = p.final_speed_kmh - p.initial_speed_kmh;

    if (const TimeSeries* brake = record.channel(Channel::Brake)) {
        const Sample* prev = nullptr;
        for (const auto& s : brake->samples) {
            if (s.t_sec > 0.0) break;
            if (prev != nullptr && prev->value == 0.0 && s.value == 1.0) {
                p.brake_onset_sec = s.t_sec;
                break;
            }
            prev = &s;
        }
    }

    std::vector<double> all;
    std::vector<double> approach;
    for (const auto& s : pre) {
        all.push_back(s.value);
        if (s.t_sec <= cfg.late_window_start_sec) approach.push_back(s.value);
    }

    if (p.net_delta_v_kmh <= -cfg.decel_threshold_kmh && p.brake_onset_sec && *p.brake_onset_sec < cfg.early_brake_before_sec) {
        p.classification = DynamicsClass::DeceleratingLead;
    } else if (!p.brake_onset_sec && steady(all, cfg.steady_band_kmh)) {
        p.classification = DynamicsClass::SteadyState;
    } else if (steady(approach, cfg.steady_band_kmh) &&
               (!p.brake_onset_sec || (*p.brake_onset_sec >= cfg.late_window_start_sec && *p.brake_onset_sec <= 0.0))) {
        p.classification = DynamicsClass::ApproachThenLateBrake;
    } else {
        p.classification = DynamicsClass::Indeterminate;
    }
    return p;
}

}  // namespace crashforge
