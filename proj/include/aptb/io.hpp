#pragma once

// Dataset file format:
//   universe rows=<r> cols=<c> slots=<T>
//   <cell>:<slot> <cell>:<slot> ...        (one trajectory per line)
// Raw trace format: one "x,y,t" sample per line, blank line between traces.

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "aptb/trajectory.hpp"

namespace aptb {

struct ParseError : std::runtime_error {
    std::size_t line;
    ParseError(std::size_t line_no, const std::string& what)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + what),
          line(line_no) {}
};

struct DomainError : std::runtime_error {
    std::size_t line;
    DomainError(std::size_t line_no, const std::string& what)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + what),
          line(line_no) {}
};

struct OrderingError : std::runtime_error {
    std::size_t line;
    OrderingError(std::size_t line_no, const std::string& what)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + what),
          line(line_no) {}
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline bool parse_u32(std::string_view s, std::uint32_t& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

inline bool parse_key_u32(std::string_view token, std::string_view key, std::uint32_t& out) {
    if (token.size() <= key.size() + 1) return false;
    if (token.substr(0, key.size()) != key || token[key.size()] != '=') return false;
    return parse_u32(token.substr(key.size() + 1), out);
}

} // namespace detail

/// Parses the header + body. When `flags_universe` is given it overrides the
/// header (CLI flags win); the header is still required to be well formed.
inline Dataset parse_dataset(std::istream& in,
                             std::optional<Universe> flags_universe = std::nullopt) {
    std::string line;
    std::size_t line_no = 0;

    // header
    Universe u;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = detail::trim(line);
        if (sv.empty()) continue;
        std::istringstream hs{std::string(sv)};
        std::string tag, a, b, c;
        hs >> tag >> a >> b >> c;
        if (tag != "universe" ||
            !detail::parse_key_u32(a, "rows", u.grid_rows) ||
            !detail::parse_key_u32(b, "cols", u.grid_cols) ||
            !detail::parse_key_u32(c, "slots", u.time_slots))
            throw ParseError(line_no, "expected header 'universe rows=<r> cols=<c> slots=<T>'");
        if (u.grid_rows == 0 || u.grid_cols == 0 || u.time_slots == 0)
            throw ParseError(line_no, "universe dimensions must be >= 1");
        if (static_cast<std::uint64_t>(u.grid_rows) * u.grid_cols > 0xFFFFFFFFull)
            throw ParseError(line_no, "universe grid is too large");
        have_header = true;
        break;
    }
    if (!have_header) throw ParseError(line_no, "missing universe header");
    if (flags_universe) u = *flags_universe;

    Dataset d;
    d.universe = u;

    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = detail::trim(line);
        if (sv.empty()) continue;
        Trajectory traj;
        std::size_t pos = 0;
        while (pos < sv.size()) {
            while (pos < sv.size() && sv[pos] == ' ') ++pos;
            if (pos >= sv.size()) break;
            std::size_t end = sv.find(' ', pos);
            if (end == std::string_view::npos) end = sv.size();
            std::string_view token = sv.substr(pos, end - pos);
            pos = end;
            std::size_t colon = token.find(':');
            STPoint p;
            if (colon == std::string_view::npos ||
                !detail::parse_u32(token.substr(0, colon), p.cell) ||
                !detail::parse_u32(token.substr(colon + 1), p.slot))
                throw ParseError(line_no, "malformed point '" + std::string(token) +
                                              "', expected <cell>:<slot>");
            if (!u.contains(p))
                throw DomainError(line_no, "point " + std::to_string(p.cell) + ":" +
                                               std::to_string(p.slot) + " outside universe");
            if (!traj.points.empty() && p.slot <= traj.points.back().slot)
                throw OrderingError(line_no, "time slots must strictly increase");
            traj.points.push_back(p);
        }
        if (!traj.points.empty()) d.trajectories.push_back(std::move(traj));
    }
    return d;
}

inline Dataset parse_dataset(const std::string& text,
                             std::optional<Universe> flags_universe = std::nullopt) {
    std::istringstream in(text);
    return parse_dataset(in, flags_universe);
}

inline void write_dataset(std::ostream& out, const Dataset& d) {
    out << "universe rows=" << d.universe.grid_rows << " cols=" << d.universe.grid_cols
        << " slots=" << d.universe.time_slots << "\n";
    for (const auto& t : d.trajectories) {
        for (std::size_t i = 0; i < t.points.size(); ++i) {
            if (i) out << ' ';
            out << t.points[i].cell << ':' << t.points[i].slot;
        }
        out << '\n';
    }
}

inline std::string dataset_to_string(const Dataset& d) {
    std::ostringstream os;
    write_dataset(os, d);
    return os.str();
}

inline Dataset load_dataset(const std::string& path,
                            std::optional<Universe> flags_universe = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open '" + path + "'");
    return parse_dataset(in, flags_universe);
}

inline std::vector<RawTrace> parse_raw_traces(std::istream& in) {
    std::vector<RawTrace> traces;
    RawTrace current;
    std::string line;
    std::size_t line_no = 0;
    double prev_t = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = detail::trim(line);
        if (sv.empty()) {
            if (!current.samples.empty()) traces.push_back(std::move(current));
            current = {};
            continue;
        }
        RawSample s;
        std::istringstream ls{std::string(sv)};
        char c1 = 0, c2 = 0;
        ls >> s.x >> c1 >> s.y >> c2 >> s.t;
        if (!ls || c1 != ',' || c2 != ',')
            throw ParseError(line_no, "malformed sample, expected x,y,t");
        if (!current.samples.empty() && s.t < prev_t)
            throw OrderingError(line_no, "timestamps must be non-decreasing");
        prev_t = s.t;
        current.samples.push_back(s);
    }
    if (!current.samples.empty()) traces.push_back(std::move(current));
    return traces;
}

} // namespace aptb
