#include "devmine/synth.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "devmine/error.hpp"
#include "devmine/io.hpp"
#include "devmine/random.hpp"
#include "devmine/timestamp.hpp"

namespace devmine {
namespace {

using json = nlohmann::ordered_json;

constexpr std::int64_t kSecond = 1000;
constexpr std::int64_t kDay = 86400 * kSecond;

const std::vector<std::string>& file_stems() {
  static const std::vector<std::string> stems = {
      "AbstractFigure", "AttributeFigure", "BouncingDrawing", "ChangeAttributeCommand", "ChopBoxConnector",
      "CompositeFigure", "ConnectionTool", "CreationTool", "DecoratorFigure", "DiamondFigure",
      "DrawApplication", "DrawingView", "EllipseFigure", "FigureAttributes", "FigureEnumerator",
      "FontSizeHandle", "GroupCommand", "HandleTracker", "ImageFigure", "LineConnection",
      "LocatorHandle", "NetApp", "NodeFigure", "PaletteButton", "PertFigure",
      "PolyLineFigure", "PolygonTool", "RadiusHandle", "RectangleFigure", "RoundRectangleFigure",
      "ScribbleTool", "SelectionTool", "StandardDrawing", "StandardDrawingView", "TextFigure",
      "TextTool", "ToolButton", "TriangleFigure", "UndoableCommand", "UngroupCommand",
      "ZoomDrawingView", "ActionTool", "AlignCommand", "ArrowTip", "BorderDecorator",
      "BoxHandleKit", "BufferedUpdateStrategy", "ClipboardCommand", "ConnectedTextTool", "CopyCommand",
      "CutCommand", "DeleteCommand", "DragTracker", "DuplicateCommand", "ElbowConnection",
      "ElbowHandle", "FigureChangeEventMulticaster", "FollowURLTool", "GridConstrainer", "InsertImageCommand",
      "JavaDrawApp", "MDIDesktopPane", "NullHandle", "OffsetLocator", "PasteCommand",
      "PolygonFigure", "PolygonHandle", "RelativeLocator", "ReverseFigureEnumerator", "SendToBackCommand",
      "ShortestDistanceConnector", "SimpleUpdateStrategy", "SplitConnectionTool", "StorableInput", "StorableOutput",
      "TextAreaFigure", "ToggleGridCommand", "URLTool", "UndoManager", "WindowMenu",
  };
  return stems;
}

struct Developer {
  std::string username;
  std::string fullname;
  std::string platform_version;
  std::string os_name;
  std::string city;
};

std::string slug(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    else if (!out.empty() && out.back() != '-') out.push_back('-');
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

std::pair<std::string, std::string> split_label(const std::string& label) {
  const auto slash = label.find('/');
  if (slash == std::string::npos || slash == 0 || slash + 1 == label.size())
    throw ConfigError(fmt::format("command label '{}' is not Category/Command", label));
  return {label.substr(0, slash), label.substr(slash + 1)};
}

// Directly-follows bookkeeping at the deepest level, mirroring what
// discovery will rebuild from the emitted log.
class ProcessTracker {
 public:
  static constexpr int kStart = 0;
  static constexpr int kEnd = 1;

  ProcessTracker() : labels_{"START", "END"}, successors_(2) {}

  int node(const std::string& label) const {
    const auto it = ids_.find(label);
    return it == ids_.end() ? -1 : it->second;
  }
  bool has_arc(int from, int to) const { return arcs_.count({from, to}) > 0; }

  int intern(const std::string& label) {
    const auto [it, inserted] = ids_.emplace(label, static_cast<int>(successors_.size()));
    if (inserted) {
      labels_.push_back(label);
      successors_.emplace_back();
    }
    return it->second;
  }
  void add_arc(int from, int to) {
    if (arcs_.insert({from, to}).second) successors_[static_cast<std::size_t>(from)].push_back(to);
  }
  const std::vector<int>& successors(int from) const { return successors_[static_cast<std::size_t>(from)]; }
  const std::string& label_of(int id) const { return labels_[static_cast<std::size_t>(id)]; }

  std::size_t nodes() const { return successors_.size(); }
  std::size_t arcs() const { return arcs_.size(); }
  // Always one component: every node hangs off START.
  std::int64_t pcc() const {
    return static_cast<std::int64_t>(arcs()) - static_cast<std::int64_t>(nodes()) + 2;
  }

 private:
  std::map<std::string, int> ids_;
  std::vector<std::string> labels_;
  std::set<std::pair<int, int>> arcs_;
  std::vector<std::vector<int>> successors_;
};

struct Activity {
  std::string file;
  std::string category;
  std::string command;

  std::string label() const { return file + "|" + category + "|" + command; }
};

class TeamGenerator {
 public:
  TeamGenerator(const PracticeProfile& profile, std::string team, std::uint64_t seed, Timestamp day0)
      : profile_(profile), team_(std::move(team)), rng_(seed), day0_(day0) {
    // Each team only ever uses part of its practice's repertoire.
    std::vector<double> weights;
    std::bernoulli_distribution keep(profile_.command_coverage);
    for (const auto& [label, w] : profile_.command_mix) {
      if (w <= 0.0 || !keep(rng_)) continue;
      commands_.push_back(split_label(label));
      weights.push_back(w);
    }
    if (commands_.empty()) {
      const auto heaviest = std::max_element(profile_.command_mix.begin(), profile_.command_mix.end(),
                                             [](const auto& a, const auto& b) { return a.second < b.second; });
      commands_.push_back(split_label(heaviest->first));
      weights.push_back(1.0);
    }
    command_pick_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
    auto stems = file_stems();
    std::shuffle(stems.begin(), stems.end(), rng_);
    const int pool = uniform(profile_.file_pool_min, profile_.file_pool_max);
    for (int i = 0; i < pool; ++i) {
      const auto& stem = stems[static_cast<std::size_t>(i) % stems.size()];
      files_.push_back(i < static_cast<int>(stems.size()) ? stem + ".java"
                                                          : fmt::format("{}{}.java", stem, i / stems.size()));
    }
  }

  void run(std::vector<RawEvent>& out, TeamTruth& truth) {
    const int sessions = uniform(profile_.sessions_min, profile_.sessions_max);
    const int devs = std::min(uniform(profile_.developers_min, profile_.developers_max), sessions);
    std::vector<Developer> developers;
    for (int d = 0; d < devs; ++d) developers.push_back(make_developer(d));
    truth.pcc_target = std::uniform_real_distribution<double>(profile_.pcc_min, profile_.pcc_max)(rng_);

    for (int s = 0; s < sessions; ++s) {
      const auto& dev = developers[static_cast<std::size_t>(s % devs)];
      const double budget = truth.pcc_target * static_cast<double>(s + 1) / static_cast<double>(sessions);
      run_session(s, dev, uniform(profile_.events_min, profile_.events_max), budget, out, truth);
    }

    truth.DEV = static_cast<std::uint64_t>(devs);
    truth.SES = static_cast<std::uint64_t>(sessions);
    truth.NFILES = files_used_.size();
    truth.NCOM = commands_used_.size();
    truth.NCAT = categories_used_.size();
    truth.EC = tracker_.nodes() - 2;
    truth.NSS = truth.EC;
    truth.NCS = files_used_.size() + file_categories_.size();
    truth.NOA = truth.NSS + truth.NCS;
    truth.NOT = tracker_.arcs();
    truth.PCC = tracker_.pcc();
  }

 private:
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Developer make_developer(int d) {
    static const std::vector<std::string> versions = {"4.10.0", "4.11.0", "4.12.0"};
    static const std::vector<std::string> systems = {"Windows 10", "Mac OS X", "Linux"};
    static const std::vector<std::string> cities = {"Lisbon", "Porto", "Setubal", "Sintra"};
    auto pick = [&](const std::vector<std::string>& v) {
      return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng_)];
    };
    Developer dev;
    dev.username = fmt::format("{}.dev{}", slug(team_), d + 1);
    dev.fullname = fmt::format("Developer {} {}", team_, d + 1);
    dev.platform_version = pick(versions);
    dev.os_name = pick(systems);
    dev.city = pick(cities);
    return dev;
  }

  Activity random_activity() {
    if (current_file_.empty() || !std::bernoulli_distribution(profile_.file_stay)(rng_))
      current_file_ = files_[std::uniform_int_distribution<std::size_t>(0, files_.size() - 1)(rng_)];
    const auto& [category, command] = commands_[command_pick_(rng_)];
    return {current_file_, category, command};
  }

  // An activity the tracker has not seen, so the arc leading to it leaves
  // the complexity unchanged.
  Activity fresh_activity() {
    for (int attempt = 0; attempt < 64; ++attempt) {
      auto a = random_activity();
      if (tracker_.node(a.label()) < 0) return a;
    }
    for (const auto& file : files_)
      for (const auto& [category, command] : commands_) {
        Activity a{file, category, command};
        if (tracker_.node(a.label()) < 0) return a;
      }
    const auto& [category, command] = commands_.front();
    return {fmt::format("Scratch{}.java", ++scratch_files_), category, command};
  }

  Activity activity_of(int node) const {
    const auto& label = tracker_.label_of(node);
    const auto a = label.find('|');
    const auto b = label.find('|', a + 1);
    return {label.substr(0, a), label.substr(a + 1, b - a - 1), label.substr(b + 1)};
  }

  Activity next_activity(int prev, double budget) {
    if (static_cast<double>(tracker_.pcc()) < budget) return random_activity();
    // Budget reached: walk existing arcs where possible.
    std::vector<int> options;
    for (int s : tracker_.successors(prev))
      if (s != ProcessTracker::kEnd) options.push_back(s);
    if (options.empty()) return fresh_activity();
    return activity_of(options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng_)]);
  }

  void run_session(int index, const Developer& dev, int events, double budget, std::vector<RawEvent>& out,
                   TeamTruth& truth) {
    const std::string session = fmt::format("S{:02}", index + 1);
    std::int64_t clock = day0_.millis + index * kDay + uniform(0, 3600) * kSecond;
    int prev = ProcessTracker::kStart;
    for (int i = 0; i < events; ++i) {
      const Activity a = next_activity(prev, budget);
      const int node = tracker_.intern(a.label());
      tracker_.add_arc(prev, node);
      prev = node;
      files_used_.insert(a.file);
      commands_used_.insert(a.command);
      categories_used_.insert(a.category);
      file_categories_.insert(a.file + "|" + a.category);

      RawEvent e;
      e.team = team_;
      e.session = session;
      clock += uniform(1000, 30000);
      e.timestamp_begin = Timestamp{clock};
      clock += uniform(50, 20000);
      e.timestamp_end = Timestamp{clock};
      e.fullname = dev.fullname;
      e.username = dev.username;
      e.workspacename = "workspace-" + slug(team_);
      e.projectname = "JHotDraw";
      e.filename = a.file;
      e.extension = "java";
      e.category_name = a.category;
      e.command_name = a.command;
      e.category_id = "org.eclipse.category." + slug(a.category);
      e.command_id = "org.eclipse.command." + slug(a.command);
      e.platform_branch = "Eclipse 2019";
      e.platform_version = dev.platform_version;
      e.java_version = "1.8.0_201";
      e.continent = "Europe";
      e.country = "Portugal";
      e.city = dev.city;
      e.os_name = dev.os_name;
      e.perspective = "Java";
      seal_event(e);
      out.push_back(std::move(e));
      ++truth.EVTS;
    }
    tracker_.add_arc(prev, ProcessTracker::kEnd);
  }

  const PracticeProfile& profile_;
  std::string team_;
  std::mt19937_64 rng_;
  Timestamp day0_;
  std::vector<std::pair<std::string, std::string>> commands_;
  std::discrete_distribution<std::size_t> command_pick_;
  std::vector<std::string> files_;
  std::string current_file_;
  int scratch_files_ = 0;
  ProcessTracker tracker_;
  std::set<std::string> files_used_, commands_used_, categories_used_, file_categories_;
};

std::string vg_level_of(double reduction) {
  if (reduction <= 4.0) return "LOW";
  if (reduction <= 9.0) return "MEDIUM";
  return "HIGH";
}

std::vector<std::pair<std::string, double>> weights(std::initializer_list<std::pair<const char*, double>> items) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [label, w] : items) out.emplace_back(label, w);
  return out;
}

json profile_json(const PracticeProfile& p) {
  json mix = json::object();
  for (const auto& [label, w] : p.command_mix) mix[label] = w;
  return json{{"name", p.name},
              {"teams", p.teams},
              {"sessions", {p.sessions_min, p.sessions_max}},
              {"events_per_session", {p.events_min, p.events_max}},
              {"developers", {p.developers_min, p.developers_max}},
              {"command_mix", mix},
              {"file_pool", {p.file_pool_min, p.file_pool_max}},
              {"command_coverage", p.command_coverage},
              {"file_stay", p.file_stay},
              {"pcc_band", {p.pcc_min, p.pcc_max}},
              {"vg_band", {p.vg_min, p.vg_max}},
              {"vg_shape", p.vg_shape},
              {"vg_pcc_coupling", p.vg_pcc_coupling}};
}

template <typename T>
void read_range(const json& j, const char* key, T& lo, T& hi) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  if (!r.is_array() || r.size() != 2) throw ConfigError(fmt::format("'{}' must be a [min, max] pair", key));
  lo = r[0].get<T>();
  hi = r[1].get<T>();
}

template <typename T>
void read_value(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_profile_json(const json& j, PracticeProfile& p) {
  read_value(j, "name", p.name);
  read_value(j, "teams", p.teams);
  read_range(j, "sessions", p.sessions_min, p.sessions_max);
  read_range(j, "events_per_session", p.events_min, p.events_max);
  read_range(j, "developers", p.developers_min, p.developers_max);
  if (j.contains("command_mix")) {
    p.command_mix.clear();
    for (const auto& [label, w] : j.at("command_mix").items()) p.command_mix.emplace_back(label, w.get<double>());
  }
  read_range(j, "file_pool", p.file_pool_min, p.file_pool_max);
  read_value(j, "command_coverage", p.command_coverage);
  read_value(j, "file_stay", p.file_stay);
  read_range(j, "pcc_band", p.pcc_min, p.pcc_max);
  read_range(j, "vg_band", p.vg_min, p.vg_max);
  read_value(j, "vg_shape", p.vg_shape);
  read_value(j, "vg_pcc_coupling", p.vg_pcc_coupling);
}

}  // namespace

ScenarioConfig ScenarioConfig::defaults() {
  ScenarioConfig c;

  PracticeProfile ar;
  ar.name = "AR";
  ar.teams = 32;
  ar.sessions_min = 3;
  ar.sessions_max = 6;
  ar.events_min = 40;
  ar.events_max = 100;
  ar.developers_min = 1;
  ar.developers_max = 3;
  ar.command_coverage = 0.85;
  ar.file_pool_min = 5;
  ar.file_pool_max = 9;
  ar.file_stay = 0.5;
  ar.pcc_min = 60.0;
  ar.pcc_max = 273.0;
  ar.vg_min = 2.68;
  ar.vg_max = 16.77;
  ar.vg_shape = 1.75;
  ar.vg_pcc_coupling = 0.0;
  ar.command_mix = weights({
      {"Refactor/Java-Extract Method", 8},
      {"Refactor/Java-Move - Refactoring", 7},
      {"Refactor/Java-Extract Class...", 5},
      {"Refactor/Java-Rename - Refactoring", 4},
      {"Refactor/Java-Encapsulate Field", 3},
      {"Refactor/Java-Change Method Signature", 3},
      {"Refactor/Java-Move Type to New File", 2},
      {"Refactor/Delete Resources", 1},
      {"Eclipse View/Long Method", 7},
      {"Eclipse View/God Class", 7},
      {"Eclipse View/Feature Envy", 6},
      {"Eclipse View/Type Checking", 5},
      {"Eclipse View/Duplicated Code", 4},
      {"Eclipse View/Code Smell Visualization", 5},
      {"Eclipse View/Package Explorer", 4},
      {"Eclipse Editor/File Open", 5},
      {"Eclipse Editor/File Editing", 6},
      {"Eclipse Editor/File Close", 2},
      {"File/Save", 4},
      {"File/Refresh", 2},
      {"Edit/Undo", 2},
      {"Source/Generate Getters and Setters", 1},
      {"Compare/Select Next Change", 1},
  });

  PracticeProfile mr;
  mr.name = "MR";
  mr.teams = 39;
  mr.sessions_min = 3;
  mr.sessions_max = 6;
  mr.events_min = 70;
  mr.events_max = 150;
  mr.developers_min = 1;
  mr.developers_max = 2;
  mr.command_coverage = 0.55;
  mr.file_pool_min = 6;
  mr.file_pool_max = 11;
  mr.file_stay = 0.5;
  mr.pcc_min = 160.0;
  mr.pcc_max = 440.0;
  mr.vg_min = 0.32;
  mr.vg_max = 13.98;
  mr.vg_shape = 4.76;
  mr.vg_pcc_coupling = 0.5;
  mr.command_mix = weights({
      {"Eclipse Editor/File Editing", 14},
      {"Eclipse Editor/File Open", 8},
      {"Eclipse Editor/File Close", 4},
      {"Edit/Copy", 6},
      {"Edit/Paste", 6},
      {"Edit/Cut", 3},
      {"Edit/Delete", 4},
      {"Edit/Undo", 4},
      {"Edit/Redo", 2},
      {"Edit/Find and Replace", 5},
      {"Eclipse View/Package Explorer", 6},
      {"Eclipse View/Project Explorer", 3},
      {"File/Save", 7},
      {"File/Save All", 2},
      {"File/Refresh", 1},
      {"File/Import", 1},
      {"Text Editing/Delete Previous Word", 3},
      {"Refactor/Java-Rename - Refactoring", 1},
      {"Compare/Select Next Change", 1},
      {"Source/Generate Getters and Setters", 1},
  });

  c.practices = {ar, mr};
  c.product_baseline = {1.9,  0.9, 1.3, 5.0, 6.0, 0.5, 0.3,  0.25, 2.5,   20.0, 0.5,
                        1.5,  0.3, 3.0, 0.5, 0.3, 40.0, 300.0, 50.0, 8.0, 0.5, 7.0, 28000.0};
  return c;
}

void ScenarioConfig::validate() const {
  if (practices.empty()) throw ConfigError("scenario has no practices");
  std::set<std::string> names;
  for (const auto& p : practices) {
    auto fail = [&](std::string_view what) {
      throw ConfigError(fmt::format("practice '{}': {}", p.name, what));
    };
    if (p.name.empty()) fail("empty name");
    if (!names.insert(p.name).second) fail("duplicate practice name");
    if (p.teams < 1 || p.teams > 999) fail("teams must be in [1, 999]");
    if (p.sessions_min < 1 || p.sessions_min > p.sessions_max || p.sessions_max > 99)
      fail("sessions range must satisfy 1 <= min <= max <= 99");
    if (p.events_min < 1 || p.events_min > p.events_max) fail("events range must satisfy 1 <= min <= max");
    if (p.developers_min < 1 || p.developers_min > p.developers_max) fail("developers range must satisfy 1 <= min <= max");
    if (p.command_mix.empty()) fail("empty command mix");
    double total = 0.0;
    std::set<std::string> labels;
    for (const auto& [label, w] : p.command_mix) {
      split_label(label);
      if (!labels.insert(label).second) fail(fmt::format("duplicate command '{}'", label));
      if (!(w >= 0.0) || !std::isfinite(w)) fail(fmt::format("negative weight for '{}'", label));
      total += w;
    }
    if (!(total > 0.0)) fail("command weights sum to zero");
    if (p.file_pool_min < 1 || p.file_pool_min > p.file_pool_max) fail("file pool range must satisfy 1 <= min <= max");
    if (!(p.command_coverage > 0.0 && p.command_coverage <= 1.0)) fail("command_coverage must be in (0, 1]");
    if (!(p.file_stay >= 0.0 && p.file_stay < 1.0)) fail("file_stay must be in [0, 1)");
    if (!(p.pcc_min >= 1.0 && p.pcc_min <= p.pcc_max)) fail("infeasible PCC band");
    if (!(p.vg_min >= 0.0 && p.vg_min <= p.vg_max && p.vg_max < 100.0)) fail("infeasible VG reduction band");
    if (!(p.vg_shape > 0.0)) fail("vg_shape must be positive");
    if (!(p.vg_pcc_coupling >= 0.0 && p.vg_pcc_coupling <= 1.0)) fail("vg_pcc_coupling must be in [0, 1]");
  }
  for (std::size_t i = 0; i < kProductMetricCount; ++i)
    if (!(product_baseline[i] > 0.0) || !std::isfinite(product_baseline[i]))
      throw ConfigError(fmt::format("product baseline {} must be positive", product_metric_names()[i]));
  if (!(product_noise >= 0.0 && product_noise < 0.5)) throw ConfigError("product_noise must be in [0, 0.5)");
  try {
    parse_timestamp(start_date + " 09:00:00");
  } catch (const InputError&) {
    throw ConfigError(fmt::format("bad start_date '{}'", start_date));
  }
}

std::string ScenarioConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["start_date"] = start_date;
  j["product_noise"] = product_noise;
  json baseline = json::object();
  for (std::size_t i = 0; i < kProductMetricCount; ++i)
    baseline[std::string(product_metric_names()[i])] = product_baseline[i];
  j["product_baseline"] = baseline;
  json ps = json::array();
  for (const auto& p : practices) ps.push_back(profile_json(p));
  j["practices"] = ps;
  return j.dump(2) + "\n";
}

ScenarioConfig ScenarioConfig::from_json(std::string_view text) {
  ScenarioConfig c = defaults();
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ConfigError("scenario document must be an object");
    read_value(j, "seed", c.seed);
    read_value(j, "start_date", c.start_date);
    read_value(j, "product_noise", c.product_noise);
    if (j.contains("product_baseline")) {
      for (const auto& [name, v] : j.at("product_baseline").items()) {
        const auto& names = product_metric_names();
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw ConfigError(fmt::format("unknown product metric '{}'", name));
        c.product_baseline[static_cast<std::size_t>(it - names.begin())] = v.get<double>();
      }
    }
    if (j.contains("practices")) {
      std::vector<PracticeProfile> practices;
      for (const auto& pj : j.at("practices")) {
        // A practice named like a default one starts from that default.
        PracticeProfile p;
        const auto name = pj.value("name", std::string{});
        for (const auto& d : c.practices)
          if (d.name == name) p = d;
        apply_profile_json(pj, p);
        practices.push_back(std::move(p));
      }
      c.practices = std::move(practices);
    }
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("malformed scenario document: {}", e.what()));
  }
  c.validate();
  return c;
}

std::string GroundTruth::to_csv() const {
  std::string out = csv_line({"team", "practice", "DEV", "SES", "EVTS", "NFILES", "NCOM", "NCAT", "EC", "NSS", "NCS",
                              "NOA", "NOT", "PCC", "pcc_target", "vg_reduction", "VG_LEVEL"});
  for (const auto& t : teams)
    out += csv_line({t.team, t.practice, std::to_string(t.DEV), std::to_string(t.SES), std::to_string(t.EVTS),
                     std::to_string(t.NFILES), std::to_string(t.NCOM), std::to_string(t.NCAT), std::to_string(t.EC),
                     std::to_string(t.NSS), std::to_string(t.NCS), std::to_string(t.NOA), std::to_string(t.NOT),
                     std::to_string(t.PCC), format_number(t.pcc_target), format_number(t.vg_reduction), t.vg_level});
  return out;
}

const TeamTruth& GroundTruth::find(std::string_view team) const {
  for (const auto& t : teams)
    if (t.team == team) return t;
  throw DataError(fmt::format("no ground truth for team '{}'", team));
}

std::string Scenario::labels_csv() const {
  std::string out = csv_line({"team", "practice"});
  for (const auto& t : truth.teams) out += csv_line({t.team, t.practice});
  return out;
}

Scenario generate(const ScenarioConfig& config) {
  config.validate();
  Scenario scenario;
  const Timestamp day0 = parse_timestamp(config.start_date + " 09:00:00");
  std::uint64_t stream = 0;
  for (const auto& profile : config.practices) {
    for (int t = 0; t < profile.teams; ++t, ++stream) {
      const std::string team = fmt::format("{}{:02}", profile.name, t + 1);
      std::mt19937_64 rng(derive_seed(config.seed, stream));
      TeamTruth truth;
      truth.team = team;
      truth.practice = profile.name;
      TeamGenerator(profile, team, derive_seed(config.seed ^ 0x5eedULL, stream), day0).run(scenario.events, truth);

      // Complexity reduction, optionally tied to where the team sits in its
      // PCC band.
      const double pcc_q = profile.pcc_max > profile.pcc_min
                               ? (truth.pcc_target - profile.pcc_min) / (profile.pcc_max - profile.pcc_min)
                               : 0.5;
      const double u = profile.vg_pcc_coupling * pcc_q +
                       (1.0 - profile.vg_pcc_coupling) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      truth.vg_reduction = profile.vg_min + (profile.vg_max - profile.vg_min) * std::pow(u, profile.vg_shape);
      truth.vg_level = vg_level_of(truth.vg_reduction);

      ProductMetricsSnapshot t0{team, Moment::t0, {}};
      ProductMetricsSnapshot t1{team, Moment::t1, {}};
      std::uniform_real_distribution<double> jitter(1.0 - config.product_noise, 1.0 + config.product_noise);
      for (std::size_t i = 0; i < kProductMetricCount; ++i) {
        t0.values[i] = config.product_baseline[i] * jitter(rng);
        t1.values[i] = t0.values[i] * jitter(rng);
      }
      const std::size_t tloc = kProductMetricCount - 1;
      t0.values[tloc] = std::round(t0.values[tloc]);
      t1.values[tloc] = std::round(t1.values[tloc]);
      t1.values[0] = t0.values[0] * (1.0 - truth.vg_reduction / 100.0);
      scenario.snapshots.push_back(t0);
      scenario.snapshots.push_back(t1);
      scenario.truth.teams.push_back(std::move(truth));
    }
  }
  return scenario;
}

std::vector<std::pair<std::string, std::string>> read_labels(std::string_view csv_text) {
  const auto records = parse_csv(csv_text);
  if (records.empty()) throw SchemaError("labels file is empty");
  const auto& header = records.front().fields;
  if (header.size() < 2 || header[0] != "team") throw SchemaError("labels file must have columns team,<label>");
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.malformed || r.fields.size() != header.size())
      throw SchemaError(fmt::format("labels line {}: field count mismatch", r.line));
    if (!seen.insert(r.fields[0]).second)
      throw SchemaError(fmt::format("labels line {}: duplicate team '{}'", r.line, r.fields[0]));
    out.emplace_back(r.fields[0], r.fields[1]);
  }
  return out;
}

}  // namespace devmine
