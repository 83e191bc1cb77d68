#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "devmine/error.hpp"
#include "devmine/eventlog.hpp"
#include "fixtures.hpp"

using namespace devmine;
using devmine::testing::make_event;

namespace {

const char* kListing = R"({"team" : "Team-10", "session" : "dkoep74-ajodje5-63j3k2",
"timestamp_begin" : "2019-05-03 16:53:52.144", "timestamp_end" : "2019-05-03 16:54:04.468",
"fullname" : "John User", "username" : "john", "workspacename" : "Workspace1",
"projectname" : "/jasml_0.10", "filename" : "/jasml_0.10/src/jasml.java", "extension" : "java",
"categoryName": "Eclipse Editor", "commandName": "File Editing",
"categoryID": "org.eclipse.ui.internal.EditorReference",
"commandID": "iscte.plugin.eclipse.commands.file.edit", "platform_branch": "Eclipse Oxygen",
"platform_version": "4.7.3.M20180330-0640", "java": "1.8.0_171-b11", "continent": "Europe",
"country": "Portugal", "city": "Lisbon", "hash": "00b7c0ef94e02eb5138d33daf38054e3"})";

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s + "\n";
}

}  // namespace

TEST(ParseEvents, ListingRecord) {
  const auto r = parse_events(one_line(kListing), EventFormat::json_lines);
  ASSERT_EQ(r.events.size(), 1u);
  const auto& e = r.events[0];
  EXPECT_EQ(e.team, "Team-10");
  EXPECT_EQ(e.command_name, "File Editing");
  EXPECT_EQ(e.category_id, "org.eclipse.ui.internal.EditorReference");
  EXPECT_EQ(e.java_version, "1.8.0_171-b11");
  EXPECT_EQ(format_timestamp(e.timestamp_end), "2019-05-03 16:54:04.468");
  EXPECT_EQ(r.report.parsed, 1u);
  EXPECT_EQ(r.report.accepted, 1u);
  // The published hash covers an unpublished field set; it is counted, not rejected.
  EXPECT_EQ(r.report.hash_failures, 1u);
}

TEST(ParseEvents, EmptySource) {
  for (auto fmt : {EventFormat::json_lines, EventFormat::csv}) {
    const auto r = parse_events("", fmt);
    EXPECT_TRUE(r.events.empty());
    EXPECT_EQ(r.report.parsed, 0u);
  }
}

TEST(ParseEvents, MissingTeamIsRejectedNotFatal) {
  auto e = make_event("T", "S", "u", 0, "f.java", "Edit", "Copy");
  auto good = events_to_json_lines({e});
  e.team.clear();
  auto bad = events_to_json_lines({e});
  const auto r = parse_events(bad + "not json\n" + good, EventFormat::json_lines);
  EXPECT_EQ(r.report.parsed, 3u);
  EXPECT_EQ(r.report.accepted, 1u);
  EXPECT_EQ(r.report.rejected, 2u);
  EXPECT_EQ(r.report.rejection_reasons.at("missing field team"), 1u);
  EXPECT_EQ(r.report.rejection_reasons.at("malformed json"), 1u);
  EXPECT_EQ(r.report.parsed, r.report.accepted + r.report.rejected);
}

TEST(ParseEvents, EndBeforeBeginRejected) {
  auto e = make_event("T", "S", "u", 1000, "f.java", "Edit", "Copy");
  e.timestamp_end = Timestamp{0};
  seal_event(e);
  const auto r = parse_events(events_to_json_lines({e}), EventFormat::json_lines);
  EXPECT_EQ(r.report.rejected, 1u);
}

TEST(ParseEvents, UnknownFormatTag) { EXPECT_THROW(parse_event_format("xml"), ConfigError); }

TEST(ParseEvents, InvalidUtf8IsAnInputError) {
  EXPECT_THROW(parse_events(std::string("{\"team\":\"\xff\"}\n"), EventFormat::json_lines), InputError);
}

TEST(ParseEvents, CsvRoundTripPreservesEvents) {
  std::vector<RawEvent> events = {make_event("T", "S", "u", 0, "a, \"quoted\".java", "Edit", "Copy"),
                                  make_event("T", "S", "u", 1000, "", "File", "Save")};
  const auto csv = events_to_csv(events);
  const auto r = parse_events(csv, EventFormat::csv);
  EXPECT_EQ(r.events, events);
  EXPECT_EQ(r.report.hash_failures, 0u);
  EXPECT_EQ(r.events, parse_events(events_to_json_lines(events), EventFormat::json_lines).events);
}

TEST(ParseEvents, UnknownFieldsKeptAsOpaqueAttributes) {
  auto e = make_event("T", "S", "u", 0, "f.java", "Edit", "Copy");
  auto line = events_to_json_lines({e});
  line.insert(1, "\"ide_theme\":\"dark\",");
  const auto r = parse_events(line, EventFormat::json_lines);
  ASSERT_EQ(r.events.size(), 1u);
  ASSERT_EQ(r.events[0].extra.size(), 1u);
  EXPECT_EQ(r.events[0].extra[0].second, "dark");
  EXPECT_TRUE(verify_event_hash(r.events[0]));
}

TEST(EventHash, RoundTripAndSingleFieldMutation) {
  const auto e = make_event("T", "S", "u", 0, "Figure.java", "Edit", "Copy");
  EXPECT_TRUE(is_digest_hex(e.hash));
  EXPECT_TRUE(verify_event_hash(e));
  std::string RawEvent::*fields[] = {
      &RawEvent::team, &RawEvent::session, &RawEvent::fullname, &RawEvent::username, &RawEvent::workspacename,
      &RawEvent::projectname, &RawEvent::filename, &RawEvent::extension, &RawEvent::category_name,
      &RawEvent::command_name, &RawEvent::category_id, &RawEvent::command_id, &RawEvent::platform_branch,
      &RawEvent::platform_version, &RawEvent::java_version, &RawEvent::continent, &RawEvent::country,
      &RawEvent::city, &RawEvent::os_name, &RawEvent::perspective};
  for (auto field : fields) {
    auto m = e;
    (m.*field) += "x";
    EXPECT_FALSE(verify_event_hash(m));
  }
  auto m = e;
  m.timestamp_begin.millis -= 1;
  EXPECT_FALSE(verify_event_hash(m));
  m = e;
  m.timestamp_end.millis += 1;
  EXPECT_FALSE(verify_event_hash(m));
}

TEST(EventHash, ComparisonIsCaseSensitive) {
  auto e = make_event("T", "S", "u", 0, "f.java", "Edit", "Copy");
  std::transform(e.hash.begin(), e.hash.end(), e.hash.begin(), [](char c) { return static_cast<char>(std::toupper(c)); });
  EXPECT_FALSE(verify_event_hash(e));
}

TEST(EventHash, PluggableDigest) {
  auto e = make_event("T", "S", "u", 0, "f.java", "Edit", "Copy");
  DigestFunction constant = [](std::string_view) { return std::string(32, 'a'); };
  seal_event(e, constant);
  EXPECT_TRUE(verify_event_hash(e, constant));
  EXPECT_FALSE(verify_event_hash(e));
}

TEST(Deduplicate, ByteIdenticalEventsCollapse) {
  auto e = make_event("T", "S", "u", 0, "f.java", "Edit", "Copy");
  EXPECT_EQ(deduplicate({e, e}).size(), 1u);
}

TEST(Deduplicate, FirstOccurrenceWinsOnConflict) {
  auto a = make_event("T", "S", "u", 0, "f.java", "Edit", "Copy");
  auto b = make_event("T", "S", "u", 0, "f.java", "Edit", "Paste");
  auto c = make_event("T", "S", "u", 5000, "f.java", "Edit", "Cut");
  const auto out = deduplicate({a, c, b});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].command_name, "Copy");
  EXPECT_EQ(out[1].command_name, "Cut");
}

TEST(Deduplicate, DisjointKeysUnchanged) {
  std::vector<RawEvent> events = {make_event("T", "S", "u", 0, "f", "E", "A"), make_event("T", "S", "v", 0, "f", "E", "A"),
                                  make_event("T", "S", "u", 1000, "f", "E", "A")};
  EXPECT_EQ(deduplicate(events), events);
}

TEST(BuildLog, OneTracePerSession) {
  std::vector<RawEvent> events;
  for (int i = 0; i < 3; ++i) events.push_back(make_event("T", "S1", "u", i * 1000, "f", "E", "A"));
  auto log = build_log(events);
  ASSERT_EQ(log.traces.size(), 1u);
  EXPECT_EQ(log.traces[0].events.size(), 3u);
  EXPECT_EQ(log.traces[0].case_id, "T/S1");

  events.push_back(make_event("T", "S2", "u", 9000, "f", "E", "A"));
  log = build_log(events);
  EXPECT_EQ(log.traces.size(), 2u);
}

TEST(BuildLog, SortsOutOfOrderInputAgainstNaiveOracle) {
  std::mt19937_64 rng(5);
  std::vector<RawEvent> events;
  for (int i = 0; i < 200; ++i) {
    std::int64_t t = static_cast<std::int64_t>(rng() % 50) * 100;
    events.push_back(make_event("T", "S", "u" + std::to_string(i), t, "f", "E", "C" + std::to_string(rng() % 4)));
  }
  const auto log = build_log(events);
  std::vector<std::size_t> idx(events.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = events[a];
    const auto& y = events[b];
    if (x.timestamp_begin != y.timestamp_begin) return x.timestamp_begin < y.timestamp_begin;
    if (x.timestamp_end != y.timestamp_end) return x.timestamp_end < y.timestamp_end;
    return x.command_id < y.command_id;
  });
  ASSERT_EQ(log.traces.size(), 1u);
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(log.traces[0].events[i].resource, events[idx[i]].username);
}

TEST(BuildLog, CanonicalPathAndCatalog) {
  const auto log = build_log({make_event("T", "S", "u", 0, "", "File", "Save"), make_event("T", "S", "u", 1000, "a.java", "Edit", "Copy")});
  const auto& ev = log.traces[0].events;
  EXPECT_EQ(ev[0].activity_path[0], kNoFile);
  EXPECT_EQ(ev[1].label(2), "a.java|Edit|Copy");
  EXPECT_EQ(ev[1].label(0), "a.java");
  EXPECT_EQ(log.catalog[1].size(), 2u);
  EXPECT_EQ(to_raw(ev[0]).filename, "");
}

TEST(BuildLog, IdempotentOverFlatten) {
  std::vector<RawEvent> events;
  for (int i = 0; i < 20; ++i)
    events.push_back(make_event(i % 2 ? "A" : "B", "S" + std::to_string(i % 3), "u", (20 - i) * 1000, "f" + std::to_string(i % 4), "E", "C"));
  events.push_back(events.front());
  const auto log = build_log(deduplicate(events));
  const auto again = build_log(deduplicate(flatten_log(log)));
  EXPECT_EQ(log, again);
  EXPECT_EQ(log.event_count(), deduplicate(events).size());
  EXPECT_EQ(log_digest(log), log_digest(again));
}

TEST(BuildLog, PermutationOfDuplicateFreeInputGivesSameLog) {
  std::vector<RawEvent> events;
  for (int i = 0; i < 30; ++i)
    events.push_back(make_event("T" + std::to_string(i % 3), "S", "u", i * 1000, "f" + std::to_string(i % 5), "E", "C"));
  auto shuffled = events;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(9));
  EXPECT_EQ(build_log(deduplicate(events)), build_log(deduplicate(shuffled)));
}
