#include "devmine/eventlog.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <set>
#include <tuple>

#include "devmine/error.hpp"
#include "devmine/io.hpp"

namespace devmine {
namespace {

using json = nlohmann::ordered_json;

using StringMember = std::string RawEvent::*;

struct FieldSpec {
  std::string_view name;
  std::string_view json_key;  // spelling used by the collection plugin
  StringMember member;        // null for the two timestamps
};

// Canonical order. The hash is last and never part of the serialization.
constexpr FieldSpec kFields[] = {
    {"team", "team", &RawEvent::team},
    {"session", "session", &RawEvent::session},
    {"timestamp_begin", "timestamp_begin", nullptr},
    {"timestamp_end", "timestamp_end", nullptr},
    {"fullname", "fullname", &RawEvent::fullname},
    {"username", "username", &RawEvent::username},
    {"workspacename", "workspacename", &RawEvent::workspacename},
    {"projectname", "projectname", &RawEvent::projectname},
    {"filename", "filename", &RawEvent::filename},
    {"extension", "extension", &RawEvent::extension},
    {"category_name", "categoryName", &RawEvent::category_name},
    {"command_name", "commandName", &RawEvent::command_name},
    {"category_id", "categoryID", &RawEvent::category_id},
    {"command_id", "commandID", &RawEvent::command_id},
    {"platform_branch", "platform_branch", &RawEvent::platform_branch},
    {"platform_version", "platform_version", &RawEvent::platform_version},
    {"java_version", "java", &RawEvent::java_version},
    {"continent", "continent", &RawEvent::continent},
    {"country", "country", &RawEvent::country},
    {"city", "city", &RawEvent::city},
    {"os_name", "os_name", &RawEvent::os_name},
    {"perspective", "perspective", &RawEvent::perspective},
    {"hash", "hash", &RawEvent::hash},
};

constexpr std::size_t kHashIndex = std::size(kFields) - 1;

const FieldSpec* find_field(std::string_view key) {
  for (const auto& f : kFields)
    if (f.name == key || f.json_key == key) return &f;
  return nullptr;
}

constexpr std::string_view kRequired[] = {"team", "session", "username", "category_name",
                                          "command_name"};

// Accumulates string values for one record before validation.
struct PendingRecord {
  std::map<std::string, std::string, std::less<>> known;
  std::vector<std::pair<std::string, std::string>> extra;
};

// Returns a rejection reason, or empty on success.
std::string finish_record(const PendingRecord& rec, RawEvent& out) {
  auto get = [&](std::string_view name) -> const std::string* {
    auto it = rec.known.find(name);
    return it == rec.known.end() ? nullptr : &it->second;
  };
  for (auto name : kRequired) {
    const auto* v = get(name);
    if (!v || v->empty()) return fmt::format("missing field {}", name);
  }
  for (std::string_view ts : {"timestamp_begin", "timestamp_end"}) {
    const auto* v = get(ts);
    if (!v || v->empty()) return fmt::format("missing field {}", ts);
  }
  const auto* hash = get("hash");
  if (!hash || hash->empty()) return "missing field hash";
  if (!is_digest_hex(*hash)) return "malformed hash";

  for (const auto& f : kFields) {
    if (!f.member) continue;
    if (const auto* v = get(f.name)) out.*f.member = *v;
  }
  try {
    out.timestamp_begin = parse_timestamp(*get("timestamp_begin"));
  } catch (const InputError&) {
    return "malformed timestamp_begin";
  }
  try {
    out.timestamp_end = parse_timestamp(*get("timestamp_end"));
  } catch (const InputError&) {
    return "malformed timestamp_end";
  }
  if (out.timestamp_begin > out.timestamp_end) return "timestamp_begin after timestamp_end";
  out.extra = rec.extra;
  return {};
}

class Ingest {
 public:
  explicit Ingest(const IngestOptions& options) : options_(options) {}

  void reject(const std::string& reason) {
    ++result_.report.parsed;
    ++result_.report.rejected;
    ++result_.report.rejection_reasons[reason];
  }

  void offer(const PendingRecord& rec) {
    RawEvent e;
    if (auto reason = finish_record(rec, e); !reason.empty()) {
      reject(reason);
      return;
    }
    if (!verify_event_hash(e, options_.digest)) {
      ++result_.report.hash_failures;
      if (options_.reject_hash_failures) {
        reject("hash mismatch");
        return;
      }
    }
    ++result_.report.parsed;
    ++result_.report.accepted;
    result_.events.push_back(std::move(e));
  }

  ParseResult take() { return std::move(result_); }

 private:
  const IngestOptions& options_;
  ParseResult result_;
};

void parse_json_lines(std::string_view source, Ingest& ingest) {
  std::size_t pos = 0;
  while (pos < source.size()) {
    auto eol = source.find('\n', pos);
    if (eol == std::string_view::npos) eol = source.size();
    std::string_view line = source.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded()) {
      ingest.reject("malformed json");
      continue;
    }
    if (!obj.is_object()) {
      ingest.reject("record is not an object");
      continue;
    }
    PendingRecord rec;
    std::string bad_field;
    for (const auto& [key, value] : obj.items()) {
      if (const auto* f = find_field(key)) {
        if (!value.is_string()) {
          bad_field = std::string(f->name);
          break;
        }
        rec.known[std::string(f->name)] = value.get<std::string>();
      } else {
        rec.extra.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
      }
    }
    if (!bad_field.empty()) {
      ingest.reject(fmt::format("field {} is not a string", bad_field));
      continue;
    }
    ingest.offer(rec);
  }
}

void parse_csv_events(std::string_view source, Ingest& ingest) {
  auto records = parse_csv(source);
  if (records.empty()) return;
  const auto& header = records.front();
  if (header.malformed) throw InputError("csv header has an unterminated quote");

  std::vector<const FieldSpec*> columns;
  for (const auto& name : header.fields) columns.push_back(find_field(name));

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.malformed) {
      ingest.reject("unterminated quote");
      continue;
    }
    if (rec.fields.size() != header.fields.size()) {
      ingest.reject("field count mismatch");
      continue;
    }
    PendingRecord pending;
    for (std::size_t c = 0; c < rec.fields.size(); ++c) {
      if (columns[c]) pending.known[std::string(columns[c]->name)] = rec.fields[c];
      else pending.extra.emplace_back(header.fields[c], rec.fields[c]);
    }
    ingest.offer(pending);
  }
}

}  // namespace

const std::vector<std::string>& raw_event_fields() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : kFields) out.emplace_back(f.name);
    return out;
  }();
  return names;
}

std::string field_value(const RawEvent& e, std::string_view name) {
  if (name == "timestamp_begin") return format_timestamp(e.timestamp_begin);
  if (name == "timestamp_end") return format_timestamp(e.timestamp_end);
  if (const auto* f = find_field(name)) return e.*f->member;
  for (const auto& [k, v] : e.extra)
    if (k == name) return v;
  return {};
}

std::string canonical_serialization(const RawEvent& e) {
  std::string out;
  for (std::size_t i = 0; i < kHashIndex; ++i) {
    if (i) out.push_back('|');
    const auto& f = kFields[i];
    out += f.member ? e.*f.member : field_value(e, f.name);
  }
  return out;
}

std::string compute_event_hash(const RawEvent& e, const DigestFunction& digest) {
  return digest(canonical_serialization(e));
}

bool verify_event_hash(const RawEvent& e, const DigestFunction& digest) {
  return e.hash == compute_event_hash(e, digest);
}

void seal_event(RawEvent& e, const DigestFunction& digest) { e.hash = compute_event_hash(e, digest); }

EventFormat parse_event_format(std::string_view tag) {
  if (tag == "json-lines" || tag == "jsonl") return EventFormat::json_lines;
  if (tag == "csv") return EventFormat::csv;
  throw ConfigError(fmt::format("unknown event format '{}'", tag));
}

std::string_view to_string(EventFormat f) {
  return f == EventFormat::csv ? "csv" : "json-lines";
}

std::vector<std::pair<std::string, std::string>> IngestReport::to_key_values() const {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"parsed", std::to_string(parsed)},
      {"accepted", std::to_string(accepted)},
      {"rejected", std::to_string(rejected)},
      {"duplicates_removed", std::to_string(duplicates_removed)},
      {"hash_failures", std::to_string(hash_failures)},
  };
  for (const auto& [reason, count] : rejection_reasons)
    kv.emplace_back("rejected." + reason, std::to_string(count));
  return kv;
}

std::string IngestReport::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_key_values()) out += k + "=" + v + "\n";
  return out;
}

ParseResult parse_events(std::string_view source, EventFormat format, const IngestOptions& options) {
  require_utf8(source, "event source");
  if (source.substr(0, 3) == "\xEF\xBB\xBF") source.remove_prefix(3);
  Ingest ingest(options);
  if (format == EventFormat::csv) parse_csv_events(source, ingest);
  else parse_json_lines(source, ingest);
  return ingest.take();
}

ParseResult parse_event_file(const std::string& path, const IngestOptions& options) {
  const auto ext = std::filesystem::path(path).extension().string();
  const auto format = ext == ".csv" ? EventFormat::csv : EventFormat::json_lines;
  return parse_events(read_file(path), format, options);
}

std::string events_to_json_lines(const std::vector<RawEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    json obj;
    for (const auto& f : kFields) obj[std::string(f.json_key)] = field_value(e, f.name);
    for (const auto& [k, v] : e.extra) obj[k] = v;
    out += obj.dump();
    out.push_back('\n');
  }
  return out;
}

std::string events_to_csv(const std::vector<RawEvent>& events) {
  std::string out = csv_line(raw_event_fields());
  for (const auto& e : events) {
    std::vector<std::string> row;
    row.reserve(std::size(kFields));
    for (const auto& f : kFields) row.push_back(field_value(e, f.name));
    out += csv_line(row);
  }
  return out;
}

std::vector<RawEvent> deduplicate(const std::vector<RawEvent>& events) {
  std::set<std::tuple<std::string_view, std::int64_t, std::int64_t>> seen;
  std::vector<RawEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    if (seen.emplace(e.username, e.timestamp_begin.millis, e.timestamp_end.millis).second)
      out.push_back(e);
  }
  return out;
}

// ---- canonical log ---------------------------------------------------------

std::string CanonicalEvent::label(int level) const {
  std::string out = activity_path[0];
  for (int i = 1; i <= level && i < 3; ++i) {
    out.push_back('|');
    out += activity_path[static_cast<std::size_t>(i)];
  }
  return out;
}

std::string make_case_id(std::string_view team, std::string_view session) {
  return fmt::format("{}/{}", team, session);
}

std::size_t EventLog::event_count() const {
  std::size_t n = 0;
  for (const auto& t : traces) n += t.events.size();
  return n;
}

CanonicalEvent canonicalize(const RawEvent& e) {
  CanonicalEvent c;
  c.case_id = make_case_id(e.team, e.session);
  c.activity_path = {e.filename.empty() ? std::string(kNoFile) : e.filename, e.category_name,
                     e.command_name};
  c.start = e.timestamp_begin;
  c.end = e.timestamp_end;
  c.resource = e.username;
  for (const auto& f : kFields) {
    if (!f.member) continue;
    if (f.name == "filename" || f.name == "category_name" || f.name == "command_name" ||
        f.name == "username")
      continue;
    c.attributes[std::string(f.name)] = e.*f.member;
  }
  for (const auto& [k, v] : e.extra) c.attributes[k] = v;
  return c;
}

RawEvent to_raw(const CanonicalEvent& c) {
  RawEvent e;
  e.filename = c.activity_path[0] == kNoFile ? std::string() : c.activity_path[0];
  e.category_name = c.activity_path[1];
  e.command_name = c.activity_path[2];
  e.timestamp_begin = c.start;
  e.timestamp_end = c.end;
  e.username = c.resource;
  for (const auto& [k, v] : c.attributes) {
    const auto* f = find_field(k);
    if (f && f->name == k && f->member) e.*f->member = v;
    else e.extra.emplace_back(k, v);
  }
  return e;
}

EventLog build_log(const std::vector<RawEvent>& events) {
  struct Slot {
    CanonicalEvent event;
    std::size_t index;
  };
  std::map<std::string, std::vector<Slot>> grouped;
  std::array<std::set<std::string>, 3> labels;
  for (std::size_t i = 0; i < events.size(); ++i) {
    auto c = canonicalize(events[i]);
    for (int level = 0; level < 3; ++level) labels[level].insert(c.label(level));
    auto key = c.case_id;
    grouped[key].push_back({std::move(c), i});
  }

  EventLog log;
  for (auto& [case_id, slots] : grouped) {
    std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
      const auto& ca = a.event.attributes.at("command_id");
      const auto& cb = b.event.attributes.at("command_id");
      return std::tie(a.event.start, a.event.end, ca, a.index) <
             std::tie(b.event.start, b.event.end, cb, b.index);
    });
    Trace t;
    t.case_id = case_id;
    t.events.reserve(slots.size());
    for (auto& s : slots) t.events.push_back(std::move(s.event));
    log.traces.push_back(std::move(t));
  }
  for (int level = 0; level < 3; ++level)
    log.catalog[level].assign(labels[level].begin(), labels[level].end());
  return log;
}

std::vector<RawEvent> flatten_log(const EventLog& log) {
  std::vector<RawEvent> out;
  out.reserve(log.event_count());
  for (const auto& t : log.traces)
    for (const auto& e : t.events) out.push_back(to_raw(e));
  return out;
}

std::string log_digest(const EventLog& log) {
  std::string all;
  for (const auto& t : log.traces)
    for (const auto& e : t.events) {
      all += canonical_serialization(to_raw(e));
      all.push_back('\n');
    }
  return md5_hex(all);
}

EventLog team_log(const EventLog& log, std::string_view team) {
  std::vector<RawEvent> events;
  for (const auto& t : log.traces) {
    if (t.events.empty() || t.events.front().attributes.at("team") != team) continue;
    for (const auto& e : t.events) events.push_back(to_raw(e));
  }
  return build_log(events);
}

std::vector<std::string> log_teams(const EventLog& log) {
  std::set<std::string> teams;
  for (const auto& t : log.traces)
    if (!t.events.empty()) teams.insert(t.events.front().attributes.at("team"));
  return {teams.begin(), teams.end()};
}

}  // namespace devmine
