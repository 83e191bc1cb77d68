#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "devmine/digest.hpp"
#include "devmine/timestamp.hpp"

namespace devmine {

/// One IDE action as captured by the collection plugin.
struct RawEvent {
  std::string team;
  std::string session;
  Timestamp timestamp_begin;
  Timestamp timestamp_end;
  std::string fullname;
  std::string username;
  std::string workspacename;
  std::string projectname;
  std::string filename;
  std::string extension;
  std::string category_name;
  std::string command_name;
  std::string category_id;
  std::string command_id;
  std::string platform_branch;
  std::string platform_version;
  std::string java_version;
  std::string continent;
  std::string country;
  std::string city;
  std::string os_name;
  std::string perspective;
  std::string hash;
  /// Unknown input fields, preserved verbatim and excluded from the hash.
  std::vector<std::pair<std::string, std::string>> extra;

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

/// Field names in canonical order; the CSV header is exactly this list.
const std::vector<std::string>& raw_event_fields();

/// String value of a named field (timestamps rendered); empty for unknown names.
std::string field_value(const RawEvent& e, std::string_view name);

/// Fields joined by "|" in `raw_event_fields()` order, without `hash`.
std::string canonical_serialization(const RawEvent& e);

std::string compute_event_hash(const RawEvent& e, const DigestFunction& digest = default_digest());

/// Byte-exact comparison of the stored hash with the recomputed digest.
bool verify_event_hash(const RawEvent& e, const DigestFunction& digest = default_digest());

/// Sets `e.hash` to the recomputed digest.
void seal_event(RawEvent& e, const DigestFunction& digest = default_digest());

// ---- ingestion -------------------------------------------------------------

enum class EventFormat { json_lines, csv };

/// "json-lines"/"jsonl" or "csv"; anything else is a ConfigError.
EventFormat parse_event_format(std::string_view tag);
std::string_view to_string(EventFormat f);

struct IngestReport {
  std::size_t parsed = 0;    // records seen
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::map<std::string, std::size_t> rejection_reasons;
  std::size_t duplicates_removed = 0;
  std::size_t hash_failures = 0;

  /// Flat key/value view, stable order.
  std::vector<std::pair<std::string, std::string>> to_key_values() const;
  /// "key=value" lines.
  std::string to_text() const;
};

struct IngestOptions {
  DigestFunction digest = default_digest();
  /// Reject records whose hash does not verify instead of only counting them.
  bool reject_hash_failures = false;
};

struct ParseResult {
  std::vector<RawEvent> events;
  IngestReport report;
};

/// Parses a whole UTF-8 source. Malformed records are rejected and counted;
/// only an undecodable source throws (InputError).
ParseResult parse_events(std::string_view source, EventFormat format,
                         const IngestOptions& options = {});

/// Parses a file; the format is taken from the extension (.csv vs anything else).
ParseResult parse_event_file(const std::string& path, const IngestOptions& options = {});

std::string events_to_json_lines(const std::vector<RawEvent>& events);
std::string events_to_csv(const std::vector<RawEvent>& events);

/// Keeps the first event per (username, timestamp_begin, timestamp_end).
std::vector<RawEvent> deduplicate(const std::vector<RawEvent>& events);

// ---- canonical log ---------------------------------------------------------

/// Activity path segment standing in for an empty filename.
inline constexpr std::string_view kNoFile = "(none)";

struct CanonicalEvent {
  std::string case_id;                     // team + "/" + session
  std::array<std::string, 3> activity_path;  // filename, category, command
  Timestamp start;
  Timestamp end;
  std::string resource;                    // username
  std::map<std::string, std::string> attributes;

  /// First `level + 1` path segments joined by "|".
  std::string label(int level) const;

  friend bool operator==(const CanonicalEvent&, const CanonicalEvent&) = default;
};

std::string make_case_id(std::string_view team, std::string_view session);

struct Trace {
  std::string case_id;
  std::vector<CanonicalEvent> events;

  friend bool operator==(const Trace&, const Trace&) = default;
};

struct EventLog {
  std::vector<Trace> traces;  // sorted by case_id
  /// Distinct activity labels per hierarchy level (0..2), sorted.
  std::array<std::vector<std::string>, 3> catalog;

  std::size_t event_count() const;
  bool empty() const { return traces.empty(); }

  friend bool operator==(const EventLog&, const EventLog&) = default;
};

CanonicalEvent canonicalize(const RawEvent& e);
RawEvent to_raw(const CanonicalEvent& e);

/// Groups deduplicated events into traces ordered by (start, end, command_id,
/// input index).
EventLog build_log(const std::vector<RawEvent>& events);

/// All events back as RawEvents, in trace order.
std::vector<RawEvent> flatten_log(const EventLog& log);

/// Digest over the canonical serialization of every event, in log order.
std::string log_digest(const EventLog& log);

/// Restricts a log to the traces of one team.
EventLog team_log(const EventLog& log, std::string_view team);

/// Distinct team names, sorted.
std::vector<std::string> log_teams(const EventLog& log);

}  // namespace devmine
