#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "devmine/eventlog.hpp"

namespace devmine::testing {

inline RawEvent make_event(std::string team, std::string session, std::string user, std::int64_t begin_ms,
                           std::string file, std::string category, std::string command) {
  RawEvent e;
  e.team = std::move(team);
  e.session = std::move(session);
  e.username = std::move(user);
  e.timestamp_begin = Timestamp{begin_ms};
  e.timestamp_end = Timestamp{begin_ms + 500};
  e.filename = std::move(file);
  e.extension = "java";
  e.category_name = std::move(category);
  e.command_name = std::move(command);
  e.command_id = "cmd." + e.command_name;
  e.platform_branch = "Eclipse Oxygen";
  e.platform_version = "4.7.3";
  e.city = "Lisbon";
  e.os_name = "Linux";
  e.perspective = "Java";
  seal_event(e);
  return e;
}

// Events of one trace with level-0 labels taken from `files`, one second apart.
inline std::vector<RawEvent> file_trace(const std::string& team, const std::string& session,
                                        const std::vector<std::string>& files, std::int64_t t0 = 0) {
  std::vector<RawEvent> out;
  for (std::size_t i = 0; i < files.size(); ++i)
    out.push_back(make_event(team, session, "dev", t0 + static_cast<std::int64_t>(i) * 1000, files[i], "Edit", "Copy"));
  return out;
}

}  // namespace devmine::testing
