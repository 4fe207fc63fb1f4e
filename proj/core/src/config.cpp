#include "visform/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "visform/error.hpp"

namespace visform::harness {

std::string_view to_string(PerceptionMode m) noexcept { return m == PerceptionMode::vision ? "vision" : "oracle"; }

std::string_view to_string(GraphKind g) noexcept {
  switch (g) {
    case GraphKind::complete: return "complete";
    case GraphKind::grid8: return "grid8";
    case GraphKind::grid4: return "grid4";
    case GraphKind::edges: return "edges";
  }
  return "?";
}

std::string_view to_string(CameraKind c) noexcept { return c == CameraKind::downward ? "downward" : "forward"; }

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) { fail(ErrorCode::config, path + ": " + what); }

class Section {
 public:
  Section(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  std::string field(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  const toml::node* get(std::string_view key) {
    seen_.insert(std::string(key));
    return table_ == nullptr ? nullptr : table_->get(key);
  }

  double number(std::string_view key, double fallback) {
    const toml::node* n = get(key);
    if (n == nullptr) return fallback;
    return as_number(*n, field(key));
  }

  std::int64_t integer(std::string_view key, std::int64_t fallback, std::int64_t lo, std::int64_t hi) {
    const toml::node* n = get(key);
    if (n == nullptr) return fallback;
    const auto v = n->value_exact<std::int64_t>();
    if (!v) bad(field(key), "expected an integer");
    if (*v < lo || *v > hi) bad(field(key), "out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return *v;
  }

  bool boolean(std::string_view key, bool fallback) {
    const toml::node* n = get(key);
    if (n == nullptr) return fallback;
    const auto v = n->value_exact<bool>();
    if (!v) bad(field(key), "expected a boolean");
    return *v;
  }

  std::string string(std::string_view key, const std::string& fallback) {
    const toml::node* n = get(key);
    if (n == nullptr) return fallback;
    const auto v = n->value_exact<std::string>();
    if (!v) bad(field(key), "expected a string");
    return *v;
  }

  const toml::array* array(std::string_view key) {
    const toml::node* n = get(key);
    if (n == nullptr) return nullptr;
    if (!n->is_array()) bad(field(key), "expected an array");
    return n->as_array();
  }

  Section table(std::string_view key) {
    const toml::node* n = get(key);
    if (n != nullptr && !n->is_table()) bad(field(key), "expected a table");
    return Section(n == nullptr ? nullptr : n->as_table(), field(key));
  }

  void finish() const {
    if (table_ == nullptr) return;
    for (const auto& [k, v] : *table_)
      if (!seen_.contains(std::string(k.str()))) bad(field(k.str()), "unknown key");
  }

  static double as_number(const toml::node& n, const std::string& path) {
    if (const auto d = n.value_exact<double>()) return *d;
    if (const auto i = n.value_exact<std::int64_t>()) return static_cast<double>(*i);
    bad(path, "expected a number");
  }

 private:
  const toml::table* table_;
  std::string path_;
  std::set<std::string> seen_;
};

Vec2 point2(const toml::node& n, const std::string& path) {
  const toml::array* a = n.as_array();
  if (a == nullptr || a->size() != 2) bad(path, "expected [x, y]");
  return {Section::as_number(*a->get(0), path + "[0]"), Section::as_number(*a->get(1), path + "[1]")};
}

Vec3 point3(const toml::node& n, const std::string& path) {
  const toml::array* a = n.as_array();
  if (a == nullptr || a->size() != 3) bad(path, "expected [x, y, z]");
  Vec3 v;
  for (std::size_t k = 0; k < 3; ++k) v(static_cast<Eigen::Index>(k)) = Section::as_number(*a->get(k), path + "[" + std::to_string(k) + "]");
  return v;
}

template <class Enum, std::size_t N>
Enum choice(const std::string& value, const std::array<Enum, N>& options, const std::string& path) {
  std::string list;
  for (Enum e : options) {
    if (value == to_string(e)) return e;
    list += (list.empty() ? "" : ", ") + std::string(to_string(e));
  }
  bad(path, "expected one of " + list + ", got '" + value + "'");
}

constexpr std::int64_t kIntMax = std::numeric_limits<std::int64_t>::max();
constexpr std::int64_t kInt32Max = std::numeric_limits<std::int32_t>::max();

ScenarioConfig parse_table(const toml::table& root) {
  ScenarioConfig c;
  Section top(&root, "");
  c.name = top.string("name", c.name);
  c.seed = static_cast<std::uint64_t>(top.integer("seed", static_cast<std::int64_t>(c.seed), 0, kIntMax));

  {
    Section s = top.table("formation");
    const toml::array* desired = s.array("desired");
    if (desired == nullptr) bad(s.field("desired"), "required");
    for (std::size_t i = 0; i < desired->size(); ++i)
      c.desired.push_back(point2(*desired->get(i), s.field("desired") + "[" + std::to_string(i) + "]"));
    c.graph = choice(s.string("graph", std::string(to_string(c.graph))),
                     std::array{GraphKind::complete, GraphKind::grid8, GraphKind::grid4, GraphKind::edges}, s.field("graph"));
    c.grid_columns = static_cast<std::size_t>(s.integer("grid_columns", 0, 0, kInt32Max));
    if (const toml::array* edges = s.array("edges")) {
      for (std::size_t i = 0; i < edges->size(); ++i) {
        const std::string p = s.field("edges") + "[" + std::to_string(i) + "]";
        const toml::array* e = edges->get(i)->as_array();
        if (e == nullptr || e->size() != 2) bad(p, "expected [i, j]");
        std::array<std::size_t, 2> ij{};
        for (std::size_t k = 0; k < 2; ++k) {
          const auto v = e->get(k)->value_exact<std::int64_t>();
          if (!v || *v < 0) bad(p, "expected nonnegative agent indices");
          ij[k] = static_cast<std::size_t>(*v);
        }
        c.edges.emplace_back(ij[0], ij[1]);
      }
    }
    c.gains_file = s.string("gains_file", "");
    s.finish();
  }

  {
    const toml::node* agents = top.get("agents");
    if (agents == nullptr) bad("agents", "required");
    const toml::array* a = agents->as_array();
    if (a == nullptr) bad("agents", "expected an array of tables");
    for (std::size_t i = 0; i < a->size(); ++i) {
      const std::string p = "agents[" + std::to_string(i) + "]";
      const toml::table* t = a->get(i)->as_table();
      if (t == nullptr) bad(p, "expected a table");
      Section s(t, p);
      AgentConfig ac;
      const toml::node* init = s.get("initial");
      if (init == nullptr) bad(s.field("initial"), "required");
      ac.initial = point3(*init, s.field("initial"));
      ac.yaw = s.number("yaw", ac.yaw);
      ac.camera = choice(s.string("camera", std::string(to_string(ac.camera))),
                         std::array{CameraKind::downward, CameraKind::forward}, s.field("camera"));
      s.finish();
      c.agents.push_back(ac);
    }
  }

  {
    Section s = top.table("camera");
    c.camera.focal = s.number("focal", c.camera.focal);
    c.camera.cx = s.number("cx", c.camera.cx);
    c.camera.cy = s.number("cy", c.camera.cy);
    c.camera.width = s.number("width", c.camera.width);
    c.camera.height = s.number("height", c.camera.height);
    s.finish();
  }
  {
    Section s = top.table("world");
    if (const toml::node* n = s.get("lower")) c.world.lower = point2(*n, s.field("lower"));
    if (const toml::node* n = s.get("upper")) c.world.upper = point2(*n, s.field("upper"));
    c.world.count = static_cast<std::size_t>(s.integer("count", static_cast<std::int64_t>(c.world.count), 0, kInt32Max));
    c.world.clutter = static_cast<std::size_t>(s.integer("clutter", static_cast<std::int64_t>(c.world.clutter), 0, kInt32Max));
    c.world.clutter_height = s.number("clutter_height", c.world.clutter_height);
    c.world_seed = static_cast<std::uint64_t>(s.integer("seed", static_cast<std::int64_t>(c.world_seed), 0, kIntMax));
    s.finish();
  }
  {
    Section s = top.table("noise");
    c.pixel_sigma = s.number("pixel_sigma", c.pixel_sigma);
    c.descriptor_sigma = s.number("descriptor_sigma", c.descriptor_sigma);
    c.mismatch_rate = s.number("mismatch_rate", c.mismatch_rate);
    s.finish();
  }
  {
    Section s = top.table("control");
    c.dt = s.number("dt", c.dt);
    c.v_max = s.number("v_max", c.v_max);
    s.finish();
  }
  {
    Section s = top.table("avoidance");
    c.avoidance_enabled = s.boolean("enabled", c.avoidance_enabled);
    c.safety_radius = s.number("safety_radius", c.safety_radius);
    c.horizon = s.number("horizon", c.horizon);
    c.grid_step_deg = s.number("grid_step_deg", c.grid_step_deg);
    s.finish();
  }
  {
    Section s = top.table("perception");
    c.mode = choice(s.string("mode", std::string(to_string(c.mode))),
                    std::array{PerceptionMode::vision, PerceptionMode::oracle}, s.field("mode"));
    c.stale_limit = static_cast<int>(s.integer("stale_limit", c.stale_limit, 0, kInt32Max));
    c.ransac_threshold_px = s.number("ransac_threshold_px", c.ransac_threshold_px);
    c.ransac_confidence = s.number("ransac_confidence", c.ransac_confidence);
    c.ransac_max_iterations = static_cast<int>(s.integer("ransac_max_iterations", c.ransac_max_iterations, 1, kInt32Max));
    c.fallback_distance = s.number("fallback_distance", c.fallback_distance);
    s.finish();
  }
  {
    Section s = top.table("termination");
    c.max_steps = static_cast<int>(s.integer("max_steps", c.max_steps, 1, kInt32Max));
    c.error_threshold = s.number("error_threshold", c.error_threshold);
    s.finish();
  }
  {
    Section s = top.table("robustness");
    c.scaling_enabled = s.boolean("scaling", c.scaling_enabled);
    c.scaling_min = s.number("scaling_min", c.scaling_min);
    c.scaling_max = s.number("scaling_max", c.scaling_max);
    c.control_rotation_deg = s.number("control_rotation_deg", c.control_rotation_deg);
    s.finish();
  }
  top.finish();
  return c;
}

std::string num(double v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  std::string s(buf.data(), end);
  if (s.find_first_of(".eni") == std::string::npos) s += ".0";
  return s;
}

std::string quoted(std::string_view s) {
  std::string out = "\"";
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          std::array<char, 8> b{};
          std::snprintf(b.data(), b.size(), "\\u%04x", static_cast<unsigned>(ch));
          out += b.data();
        } else {
          out += ch;
        }
    }
  }
  return out + "\"";
}

}  // namespace

agent::AvoidanceParams ScenarioConfig::avoidance() const {
  agent::AvoidanceParams p;
  p.safety_radius = safety_radius;
  p.horizon = horizon;
  p.grid_step = grid_step_deg * std::numbers::pi / 180.0;
  return p;
}

gains::Adjacency ScenarioConfig::adjacency() const {
  const std::size_t n = desired.size();
  switch (graph) {
    case GraphKind::complete: return gains::Adjacency::complete(n);
    case GraphKind::grid8:
    case GraphKind::grid4:
      if (grid_columns == 0 || n % grid_columns != 0) bad("formation.grid_columns", "must divide the agent count");
      return gains::Adjacency::grid(n / grid_columns, grid_columns, graph == GraphKind::grid8);
    case GraphKind::edges: return gains::Adjacency::from_edges(n, edges);
  }
  bad("formation.graph", "unknown graph");
}

gains::FormationSpec ScenarioConfig::spec() const {
  try {
    return gains::FormationSpec::make(geometry::Configuration::from_points(desired), adjacency());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    bad("formation", e.what());
  }
}

void ScenarioConfig::validate() const {
  if (desired.size() < 2) bad("formation.desired", "needs at least 2 agents");
  if (agents.size() != desired.size())
    bad("agents", "has " + std::to_string(agents.size()) + " entries but formation.desired has " +
                      std::to_string(desired.size()));
  (void)spec();
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string p = "agents[" + std::to_string(i) + "]";
    if (!agents[i].initial.allFinite() || !std::isfinite(agents[i].yaw)) bad(p, "must be finite");
    if (mode == PerceptionMode::vision && !(agents[i].initial.z() > 0.0)) bad(p + ".initial", "altitude must be positive");
  }
  try {
    camera.validate();
  } catch (const Error& e) {
    bad("camera", e.what());
  }
  try {
    world.validate();
  } catch (const Error& e) {
    bad("world", e.what());
  }
  if (!(pixel_sigma >= 0.0)) bad("noise.pixel_sigma", "must be >= 0");
  if (!(descriptor_sigma >= 0.0)) bad("noise.descriptor_sigma", "must be >= 0");
  if (!(mismatch_rate >= 0.0 && mismatch_rate < 1.0)) bad("noise.mismatch_rate", "must be in [0, 1)");
  if (!(dt > 0.0) || !std::isfinite(dt)) bad("control.dt", "must be positive");
  if (!(v_max > 0.0)) bad("control.v_max", "must be positive");
  try {
    avoidance().validate();
  } catch (const Error& e) {
    bad("avoidance", e.what());
  }
  if (!(ransac_threshold_px > 0.0)) bad("perception.ransac_threshold_px", "must be positive");
  if (!(ransac_confidence > 0.0 && ransac_confidence < 1.0)) bad("perception.ransac_confidence", "must be in (0, 1)");
  if (!(fallback_distance > 0.0)) bad("perception.fallback_distance", "must be positive");
  if (!(error_threshold > 0.0 && error_threshold < 1.0)) bad("termination.error_threshold", "must be in (0, 1)");
  if (!(scaling_min > 0.0 && scaling_max >= scaling_min)) bad("robustness.scaling_min", "need 0 < scaling_min <= scaling_max");
  if (!(std::abs(control_rotation_deg) <= 180.0)) bad("robustness.control_rotation_deg", "must be within [-180, 180]");
}

ScenarioConfig parse_config(std::string_view text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    fail(ErrorCode::config, msg.str());
  }
  ScenarioConfig c = parse_table(root);
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  ScenarioConfig c = parse_config(ss.str(), path.string());
  if (!c.gains_file.empty() && c.gains_file.is_relative())
    c.gains_file = (path.parent_path() / c.gains_file).lexically_normal();
  return c;
}

std::string to_toml(const ScenarioConfig& c) {
  std::ostringstream o;
  o << "name = " << quoted(c.name) << "\n";
  o << "seed = " << c.seed << "\n\n";

  o << "[formation]\ndesired = [";
  for (std::size_t i = 0; i < c.desired.size(); ++i)
    o << (i ? ", " : "") << "[" << num(c.desired[i].x()) << ", " << num(c.desired[i].y()) << "]";
  o << "]\n";
  o << "graph = " << quoted(to_string(c.graph)) << "\n";
  o << "grid_columns = " << c.grid_columns << "\n";
  o << "edges = [";
  for (std::size_t i = 0; i < c.edges.size(); ++i)
    o << (i ? ", " : "") << "[" << c.edges[i].first << ", " << c.edges[i].second << "]";
  o << "]\n";
  o << "gains_file = " << quoted(c.gains_file.generic_string()) << "\n\n";

  o << "[camera]\nfocal = " << num(c.camera.focal) << "\ncx = " << num(c.camera.cx) << "\ncy = " << num(c.camera.cy)
    << "\nwidth = " << num(c.camera.width) << "\nheight = " << num(c.camera.height) << "\n\n";

  o << "[world]\nlower = [" << num(c.world.lower.x()) << ", " << num(c.world.lower.y()) << "]\nupper = ["
    << num(c.world.upper.x()) << ", " << num(c.world.upper.y()) << "]\ncount = " << c.world.count
    << "\nclutter = " << c.world.clutter << "\nclutter_height = " << num(c.world.clutter_height)
    << "\nseed = " << c.world_seed << "\n\n";

  o << "[noise]\npixel_sigma = " << num(c.pixel_sigma) << "\ndescriptor_sigma = " << num(c.descriptor_sigma)
    << "\nmismatch_rate = " << num(c.mismatch_rate) << "\n\n";

  o << "[control]\ndt = " << num(c.dt) << "\nv_max = " << num(c.v_max) << "\n\n";

  o << "[avoidance]\nenabled = " << (c.avoidance_enabled ? "true" : "false")
    << "\nsafety_radius = " << num(c.safety_radius) << "\nhorizon = " << num(c.horizon)
    << "\ngrid_step_deg = " << num(c.grid_step_deg) << "\n\n";

  o << "[perception]\nmode = " << quoted(to_string(c.mode)) << "\nstale_limit = " << c.stale_limit
    << "\nransac_threshold_px = " << num(c.ransac_threshold_px) << "\nransac_confidence = " << num(c.ransac_confidence)
    << "\nransac_max_iterations = " << c.ransac_max_iterations << "\nfallback_distance = " << num(c.fallback_distance)
    << "\n\n";

  o << "[termination]\nmax_steps = " << c.max_steps << "\nerror_threshold = " << num(c.error_threshold) << "\n\n";

  o << "[robustness]\nscaling = " << (c.scaling_enabled ? "true" : "false") << "\nscaling_min = " << num(c.scaling_min)
    << "\nscaling_max = " << num(c.scaling_max) << "\ncontrol_rotation_deg = " << num(c.control_rotation_deg) << "\n";

  for (const auto& a : c.agents) {
    o << "\n[[agents]]\ninitial = [" << num(a.initial.x()) << ", " << num(a.initial.y()) << ", " << num(a.initial.z())
      << "]\nyaw = " << num(a.yaw) << "\ncamera = " << quoted(to_string(a.camera)) << "\n";
  }
  return o.str();
}

}  // namespace visform::harness
