#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "sessrec/core.hpp"
#include "sessrec/detail.hpp"
#include "sessrec/errors.hpp"

namespace sessrec {

// ---------------------------------------------------------------------------
// Raw log parsing
// ---------------------------------------------------------------------------

enum class TimeUnit { seconds, milliseconds, iso8601 };

struct ColumnFormat {
    char delimiter = '\0';  // '\0' = autodetect comma vs tab from the header
    std::string session_column;
    std::string item_column;
    std::string time_column;
    TimeUnit time_unit = TimeUnit::seconds;
    bool strict = false;  // strict: bad rows raise; lenient: skip and count

    // Column layouts of the published datasets.
    static ColumnFormat preset(const std::string& name) {
        ColumnFormat f;
        if (name == "diginetica") {
            f.delimiter = ';';
            f.session_column = "sessionId";
            f.item_column = "itemId";
            f.time_column = "eventdate";
            f.time_unit = TimeUnit::iso8601;
        } else if (name == "retailrocket") {
            f.delimiter = ',';
            f.session_column = "visitorid";
            f.item_column = "itemid";
            f.time_column = "timestamp";
            f.time_unit = TimeUnit::milliseconds;
        } else if (name == "30mu") {
            f.delimiter = '\t';
            f.session_column = "SessionId";
            f.item_column = "ItemId";
            f.time_column = "Time";
            f.time_unit = TimeUnit::seconds;
        } else {
            throw ConfigError("unknown format preset: " + name);
        }
        return f;
    }
};

struct ParseResult {
    std::vector<InteractionEvent> events;
    std::size_t skipped_rows = 0;
    std::size_t total_rows = 0;
};

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian civil date.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

// Accepts "YYYY-MM-DD", optionally followed by ("T" or " ") "HH:MM:SS",
// fractional seconds, and "Z" or a +HH:MM offset. Treated as UTC.
inline bool parse_iso8601(std::string_view s, double& out) {
    auto digits = [&s](std::size_t pos, std::size_t n, std::int64_t& v) {
        if (pos + n > s.size()) return false;
        v = 0;
        for (std::size_t i = pos; i < pos + n; ++i) {
            if (s[i] < '0' || s[i] > '9') return false;
            v = v * 10 + (s[i] - '0');
        }
        return true;
    };
    std::int64_t y, mo, d;
    if (!digits(0, 4, y) || s.size() < 10 || s[4] != '-' || !digits(5, 2, mo) ||
        s[7] != '-' || !digits(8, 2, d))
        return false;
    if (mo < 1 || mo > 12 || d < 1 || d > 31) return false;
    double t = static_cast<double>(days_from_civil(y, static_cast<unsigned>(mo),
                                                   static_cast<unsigned>(d))) * 86400.0;
    std::size_t pos = 10;
    if (pos < s.size()) {
        if (s[pos] != 'T' && s[pos] != ' ') return false;
        ++pos;
        std::int64_t hh, mm, ss;
        if (!digits(pos, 2, hh) || pos + 8 > s.size() || s[pos + 2] != ':' ||
            !digits(pos + 3, 2, mm) || s[pos + 5] != ':' || !digits(pos + 6, 2, ss))
            return false;
        if (hh > 23 || mm > 59 || ss > 60) return false;
        t += static_cast<double>(hh * 3600 + mm * 60 + ss);
        pos += 8;
        if (pos < s.size() && s[pos] == '.') {
            ++pos;
            double frac = 0.0, scale = 0.1;
            bool any = false;
            while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
                frac += (s[pos] - '0') * scale;
                scale *= 0.1;
                ++pos;
                any = true;
            }
            if (!any) return false;
            t += frac;
        }
        if (pos < s.size()) {
            if (s[pos] == 'Z') {
                ++pos;
            } else if (s[pos] == '+' || s[pos] == '-') {
                const double sign = s[pos] == '+' ? 1.0 : -1.0;
                std::int64_t oh, om;
                if (!digits(pos + 1, 2, oh) || pos + 6 > s.size() || s[pos + 3] != ':' ||
                    !digits(pos + 4, 2, om))
                    return false;
                t -= sign * static_cast<double>(oh * 3600 + om * 60);
                pos += 6;
            }
        }
    }
    return pos == s.size() ? (out = t, true) : false;
}

inline bool parse_time(std::string_view s, TimeUnit unit, double& out) {
    if (unit == TimeUnit::iso8601) return parse_iso8601(s, out);
    double v;
    if (!sessrec::detail::parse_double(s, v)) return false;
    out = unit == TimeUnit::milliseconds ? v / 1000.0 : v;
    return true;
}

}  // namespace detail

// Parses a delimiter-separated table with a header row. `source_name` is
// used in error messages only.
inline ParseResult parse_events(std::istream& in, const ColumnFormat& fmt,
                                const std::string& source_name = "<stream>") {
    std::string line;
    if (!std::getline(in, line)) return {};
    std::string_view header = sessrec::detail::strip_cr(line);

    char delim = fmt.delimiter;
    if (delim == '\0') {
        const auto commas = std::count(header.begin(), header.end(), ',');
        const auto tabs = std::count(header.begin(), header.end(), '\t');
        delim = tabs > commas ? '\t' : ',';
    }

    const auto cols = sessrec::detail::split(header, delim);
    auto col_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (sessrec::detail::trim(cols[i]) == name) return i;
        }
        throw ConfigError("column '" + name + "' not found in header of " + source_name);
    };
    const std::size_t c_sess = col_of(fmt.session_column);
    const std::size_t c_item = col_of(fmt.item_column);
    const std::size_t c_time = col_of(fmt.time_column);
    const std::size_t need = std::max({c_sess, c_item, c_time}) + 1;

    ParseResult result;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view row = sessrec::detail::strip_cr(line);
        if (row.empty()) continue;
        ++result.total_rows;
        const auto fields = sessrec::detail::split(row, delim);
        auto reject = [&](const std::string& why) {
            if (fmt.strict) {
                throw DataError(source_name + ":" + std::to_string(line_no) + ": " + why);
            }
            ++result.skipped_rows;
        };
        if (fields.size() < need) {
            reject("expected at least " + std::to_string(need) + " columns, got " +
                   std::to_string(fields.size()));
            continue;
        }
        InteractionEvent ev;
        ev.session_id = std::string(sessrec::detail::trim(fields[c_sess]));
        ev.item_id = std::string(sessrec::detail::trim(fields[c_item]));
        if (ev.session_id.empty() || ev.item_id.empty()) {
            reject("empty session or item id");
            continue;
        }
        if (!detail::parse_time(sessrec::detail::trim(fields[c_time]), fmt.time_unit, ev.timestamp)) {
            reject("unparseable time value '" + std::string(fields[c_time]) + "'");
            continue;
        }
        if (ev.timestamp < 0.0) {
            reject("negative timestamp");
            continue;
        }
        result.events.push_back(std::move(ev));
    }
    return result;
}

inline ParseResult parse_events_file(const std::string& path, const ColumnFormat& fmt) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open input file: " + path);
    return parse_events(in, fmt, path);
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

struct TestSplit {
    enum class Kind { last_days, last_fraction };
    Kind kind = Kind::last_days;
    double value = 1.0;
};

struct PreprocessConfig {
    int min_item_support = 5;
    int min_session_length = 2;
    TestSplit test_split;
};

// Pre-vocabulary session form used by the filtering stage.
struct StringSession {
    std::string session_id;
    std::vector<std::string> items;
    std::vector<double> timestamps;
    double start_time = 0.0;
};

inline std::vector<StringSession> sessions_from_events(const std::vector<InteractionEvent>& events) {
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<StringSession> sessions;
    for (const auto& ev : events) {
        auto [it, inserted] = slot.emplace(ev.session_id, sessions.size());
        if (inserted) {
            sessions.push_back(StringSession{ev.session_id, {}, {}, 0.0});
        }
        auto& s = sessions[it->second];
        s.items.push_back(ev.item_id);
        s.timestamps.push_back(ev.timestamp);
    }
    for (auto& s : sessions) {
        // Stable sort keeps file order for same-second events.
        std::vector<std::size_t> order(s.items.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&s](std::size_t a, std::size_t b) {
            return s.timestamps[a] < s.timestamps[b];
        });
        std::vector<std::string> items(s.items.size());
        std::vector<double> ts(s.items.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            items[i] = std::move(s.items[order[i]]);
            ts[i] = s.timestamps[order[i]];
        }
        s.items = std::move(items);
        s.timestamps = std::move(ts);
        s.start_time = s.timestamps.empty() ? 0.0 : s.timestamps.front();
    }
    return sessions;
}

// Drops rare items and short sessions until a fixed point: removing items
// can shorten sessions below the threshold, which changes counts again.
inline std::vector<StringSession> apply_support_filters(std::vector<StringSession> sessions,
                                                        int min_item_support,
                                                        int min_session_length) {
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<std::string, std::int64_t> counts;
        for (const auto& s : sessions) {
            for (const auto& item : s.items) ++counts[item];
        }
        for (auto& s : sessions) {
            std::vector<std::string> kept;
            std::vector<double> kept_ts;
            kept.reserve(s.items.size());
            for (std::size_t i = 0; i < s.items.size(); ++i) {
                if (counts[s.items[i]] >= min_item_support) {
                    kept.push_back(std::move(s.items[i]));
                    kept_ts.push_back(s.timestamps[i]);
                }
            }
            if (kept.size() != s.items.size()) changed = true;
            s.items = std::move(kept);
            s.timestamps = std::move(kept_ts);
            s.start_time = s.timestamps.empty() ? 0.0 : s.timestamps.front();
        }
        const auto before = sessions.size();
        sessions.erase(std::remove_if(sessions.begin(), sessions.end(),
                                      [min_session_length](const StringSession& s) {
                                          return s.items.size() <
                                                 static_cast<std::size_t>(min_session_length);
                                      }),
                       sessions.end());
        if (sessions.size() != before) changed = true;
    }
    return sessions;
}

inline Dataset preprocess(const std::vector<InteractionEvent>& events, const PreprocessConfig& cfg) {
    if (events.empty()) throw DataError("preprocess: no input events");
    if (cfg.min_item_support < 1) throw ConfigError("min_item_support must be >= 1");
    if (cfg.min_session_length < 2) throw ConfigError("min_session_length must be >= 2");

    auto sessions = apply_support_filters(sessions_from_events(events), cfg.min_item_support,
                                          cfg.min_session_length);
    if (sessions.empty()) throw DataError("preprocess: empty dataset after support filtering");

    std::sort(sessions.begin(), sessions.end(), [](const StringSession& a, const StringSession& b) {
        if (a.start_time != b.start_time) return a.start_time < b.start_time;
        return a.session_id < b.session_id;
    });

    std::size_t split_at;  // first test session
    if (cfg.test_split.kind == TestSplit::Kind::last_days) {
        if (cfg.test_split.value <= 0) throw ConfigError("test_split days must be positive");
        const double cutoff = sessions.back().start_time - cfg.test_split.value * 86400.0;
        split_at = sessions.size();
        while (split_at > 0 && sessions[split_at - 1].start_time > cutoff) --split_at;
    } else {
        const double f = cfg.test_split.value;
        if (f <= 0.0 || f >= 1.0) throw ConfigError("test_split fraction must be in (0,1)");
        auto n_test = static_cast<std::size_t>(std::llround(f * static_cast<double>(sessions.size())));
        n_test = std::clamp<std::size_t>(n_test, 1, sessions.size() - 1);
        split_at = sessions.size() - n_test;
    }
    if (split_at == 0) throw DataError("preprocess: empty training partition after time split");
    if (split_at == sessions.size()) throw DataError("preprocess: empty test partition after time split");

    std::vector<StringSession> train(sessions.begin(),
                                     sessions.begin() + static_cast<std::ptrdiff_t>(split_at));
    std::vector<StringSession> test(sessions.begin() + static_cast<std::ptrdiff_t>(split_at),
                                    sessions.end());

    // Re-filter the training partition so training counts themselves meet
    // the support threshold (counts are computed on train only).
    train = apply_support_filters(std::move(train), cfg.min_item_support, cfg.min_session_length);
    if (train.empty()) throw DataError("preprocess: empty training partition after filtering");

    std::unordered_map<std::string, std::int64_t> train_counts;
    for (const auto& s : train) {
        for (const auto& item : s.items) ++train_counts[item];
    }

    std::vector<std::string> ids;
    ids.reserve(train_counts.size());
    for (const auto& [id, _] : train_counts) ids.push_back(id);
    Dataset ds;
    ds.vocab = ItemVocab::from_ids(std::move(ids));
    ds.item_counts.assign(ds.vocab.size(), 0);
    for (const auto& [id, c] : train_counts) {
        ds.item_counts[static_cast<std::size_t>(ds.vocab.index_of(id))] = c;
    }

    auto index_session = [&ds](const StringSession& s, bool drop_unknown) {
        Session out;
        out.session_id = s.session_id;
        for (std::size_t i = 0; i < s.items.size(); ++i) {
            auto idx = ds.vocab.find(s.items[i]);
            if (!idx) {
                if (drop_unknown) continue;
                throw DataError("item missing from vocabulary: " + s.items[i]);
            }
            out.items.push_back(*idx);
            out.timestamps.push_back(s.timestamps[i]);
        }
        out.start_time = out.timestamps.empty() ? s.start_time : out.timestamps.front();
        return out;
    };

    for (const auto& s : train) ds.train_sessions.push_back(index_session(s, false));
    for (const auto& s : test) {
        Session t = index_session(s, true);  // drop items absent from training
        if (t.items.size() >= static_cast<std::size_t>(cfg.min_session_length)) {
            ds.test_sessions.push_back(std::move(t));
        }
    }
    if (ds.test_sessions.empty()) throw DataError("preprocess: no test sessions survive vocabulary restriction");
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset snapshot (events.tsv + items.tsv)
// ---------------------------------------------------------------------------
// Written once by the preprocess stage; every later stage loads the snapshot
// instead of re-parsing raw logs. `config_line` is the resolved run config,
// embedded as a '#'-prefixed first line of each file.

inline void save_snapshot(const Dataset& ds, const std::filesystem::path& dir,
                          const std::string& config_line) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "items.tsv", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "items.tsv").string());
        out << "# config: " << config_line << "\n";
        out << "item_index\titem_id\ttrain_count\n";
        for (std::size_t i = 0; i < ds.vocab.size(); ++i) {
            out << i << '\t' << ds.vocab.id_of(static_cast<ItemIndex>(i)) << '\t'
                << ds.item_counts[i] << '\n';
        }
    }
    {
        std::ofstream out(dir / "events.tsv", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "events.tsv").string());
        out << "# config: " << config_line << "\n";
        out << "session_id\titem_index\ttimestamp\tpartition\n";
        auto dump = [&out](const std::vector<Session>& sessions, const char* part) {
            for (const auto& s : sessions) {
                for (std::size_t i = 0; i < s.items.size(); ++i) {
                    out << s.session_id << '\t' << s.items[i] << '\t'
                        << sessrec::detail::fmt_double(s.timestamps[i]) << '\t' << part << '\n';
                }
            }
        };
        dump(ds.train_sessions, "train");
        dump(ds.test_sessions, "test");
    }
}

inline Dataset load_snapshot(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    Dataset ds;
    {
        std::ifstream in(dir / "items.tsv");
        if (!in) throw DataError("cannot open snapshot file: " + (dir / "items.tsv").string() +
                                 " (run the preprocess command first)");
        std::string line;
        std::vector<std::string> ids;
        std::vector<std::int64_t> counts;
        bool header_seen = false;
        while (std::getline(in, line)) {
            std::string_view row = sessrec::detail::strip_cr(line);
            if (row.empty() || row.front() == '#') continue;
            if (!header_seen) { header_seen = true; continue; }
            const auto f = sessrec::detail::split(row, '\t');
            if (f.size() != 3) throw DataError("malformed items.tsv row: " + std::string(row));
            std::int64_t idx, count;
            if (!sessrec::detail::parse_int64(f[0], idx) || !sessrec::detail::parse_int64(f[2], count)) {
                throw DataError("malformed items.tsv row: " + std::string(row));
            }
            if (idx != static_cast<std::int64_t>(ids.size())) {
                throw DataError("items.tsv indices must be dense and ascending");
            }
            ids.emplace_back(f[1]);
            counts.push_back(count);
        }
        if (!std::is_sorted(ids.begin(), ids.end())) {
            throw DataError("items.tsv ids are not in ascending order");
        }
        ds.vocab = ItemVocab::from_ids(ids);
        ds.item_counts = std::move(counts);
    }
    {
        std::ifstream in(dir / "events.tsv");
        if (!in) throw DataError("cannot open snapshot file: " + (dir / "events.tsv").string());
        std::string line;
        bool header_seen = false;
        Session current;
        bool current_is_test = false;
        bool have_current = false;
        auto flush = [&]() {
            if (!have_current) return;
            current.start_time = current.timestamps.front();
            (current_is_test ? ds.test_sessions : ds.train_sessions).push_back(std::move(current));
            current = Session{};
            have_current = false;
        };
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view row = sessrec::detail::strip_cr(line);
            if (row.empty() || row.front() == '#') continue;
            if (!header_seen) { header_seen = true; continue; }
            const auto f = sessrec::detail::split(row, '\t');
            if (f.size() != 4) {
                throw DataError("events.tsv:" + std::to_string(line_no) + ": expected 4 columns");
            }
            std::int64_t item;
            double ts;
            if (!sessrec::detail::parse_int64(f[1], item) || !sessrec::detail::parse_double(f[2], ts)) {
                throw DataError("events.tsv:" + std::to_string(line_no) + ": malformed row");
            }
            const bool is_test = f[3] == "test";
            if (!is_test && f[3] != "train") {
                throw DataError("events.tsv:" + std::to_string(line_no) + ": unknown partition '" +
                                std::string(f[3]) + "'");
            }
            if (item < 0 || static_cast<std::size_t>(item) >= ds.vocab.size()) {
                throw DataError("events.tsv:" + std::to_string(line_no) + ": item index out of range");
            }
            if (!have_current || current.session_id != f[0] || current_is_test != is_test) {
                flush();
                current.session_id = std::string(f[0]);
                current_is_test = is_test;
                have_current = true;
            }
            current.items.push_back(static_cast<ItemIndex>(item));
            current.timestamps.push_back(ts);
        }
        flush();
    }
    if (ds.train_sessions.empty()) throw DataError("snapshot has no training sessions");
    return ds;
}

}  // namespace sessrec
