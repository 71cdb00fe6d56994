#include "rva/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "rva/errors.hpp"

namespace rva {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Walks one JSON object, remembering which keys were read so that the rest
// can be reported as unknown.
class Section {
 public:
  Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_->is_object()) {
      throw ValidationError(path_.empty() ? "(root)" : path_, "expected an object");
    }
  }

  const json* find(const char* key) {
    seen_.insert(key);
    if (!node_) {
      return nullptr;
    }
    const auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  std::string key_path(const char* key) const { return join(path_, key); }

  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) {
        throw ValidationError(key_path(key), "expected a number");
      }
      out = v->get<double>();
      if (!std::isfinite(out)) {
        throw ValidationError(key_path(key), "must be finite");
      }
    }
  }

  template <typename Int>
  void integer(const char* key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) {
        throw ValidationError(key_path(key), "expected an integer");
      }
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned()) {
          out = static_cast<Int>(v->get<std::uint64_t>());
          return;
        }
        throw ValidationError(key_path(key), "must be non-negative");
      } else {
        out = static_cast<Int>(v->get<std::int64_t>());
      }
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) {
        throw ValidationError(key_path(key), "expected a string");
      }
      out = v->get<std::string>();
    }
  }

  template <typename Parse, typename T>
  void enumeration(const char* key, T& out, Parse parse) {
    std::string name;
    string(key, name);
    if (find(key)) {
      try {
        out = parse(name);
      } catch (const ValidationError& e) {
        throw ValidationError(key_path(key), e.what());
      }
    }
  }

  void numbers(const char* key, double* out, std::size_t n) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != n) {
        throw ValidationError(key_path(key), "expected an array of " + std::to_string(n) + " numbers");
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!(*v)[i].is_number()) {
          throw ValidationError(key_path(key), "expected an array of " + std::to_string(n) + " numbers");
        }
        out[i] = (*v)[i].get<double>();
      }
    }
  }

  void vec3(const char* key, Vec3& out) {
    std::array<double, 3> values{out.x(), out.y(), out.z()};
    numbers(key, values.data(), 3);
    out = Vec3(values[0], values[1], values[2]);
  }

  Section child(const char* key) { return Section(find(key), key_path(key)); }

  void finish() const {
    if (!node_) {
      return;
    }
    for (const auto& [key, value] : node_->items()) {
      if (!seen_.contains(key)) {
        throw ValidationError(join(path_, key), "unknown key");
      }
    }
  }

 private:
  const json* node_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

KinematicChain read_chain(Section s) {
  const KinematicChain defaults = default_chain();
  std::array<JointDescriptor, kJointCount> joints = defaults.joints();
  if (const json* list = s.find("joints")) {
    if (!list->is_array() || list->size() != kJointCount) {
      throw ValidationError("chain.joints", "expected an array of " + std::to_string(kJointCount) + " joints");
    }
    for (std::size_t i = 0; i < kJointCount; ++i) {
      Section j(&(*list)[i], "chain.joints[" + std::to_string(i) + "]");
      j.enumeration("type", joints[i].type, joint_type_from_string);
      j.number("a_mm", joints[i].a_mm);
      j.number("alpha_rad", joints[i].alpha_rad);
      j.number("d_mm", joints[i].d_mm);
      j.number("theta_offset_rad", joints[i].theta_offset_rad);
      j.number("limit_min", joints[i].limit_min);
      j.number("limit_max", joints[i].limit_max);
      j.finish();
    }
  }
  std::array<double, kJointCount> home = defaults.q_home().values();
  s.numbers("q_home", home.data(), kJointCount);
  Vec3 mount = defaults.probe_mount().translation;
  s.vec3("probe_mount_mm", mount);
  s.finish();
  return KinematicChain(joints, JointVector::from(home), RigidTransform::translate(mount));
}

ScenarioConfig read_scenario(Section s) {
  ScenarioConfig c;
  s.vec3("work_center_mm", c.work_center);
  s.number("localization_sigma_mm", c.localization_sigma_mm);
  Section p = s.child("phantom");
  p.number("diameter_mm", c.phantom.diameter_mm);
  p.number("depth_mm", c.phantom.depth_mm);
  p.enumeration("depth_reference", c.phantom.depth_reference, depth_reference_from_string);
  p.number("wall_thickness_mm", c.phantom.wall_thickness_mm);
  p.number("stiffness_n_per_mm", c.phantom.stiffness_n_per_mm);
  p.finish();
  Section r = s.child("rat");
  r.number("diameter_mean_mm", c.rat.diameter_mean_mm);
  r.number("diameter_sd_mm", c.rat.diameter_sd_mm);
  r.number("diameter_min_mm", c.rat.diameter_min_mm);
  r.number("diameter_max_mm", c.rat.diameter_max_mm);
  r.number("depth_min_mm", c.rat.depth_min_mm);
  r.number("depth_max_mm", c.rat.depth_max_mm);
  r.number("sagitta_max_mm", c.rat.sagitta_max_mm);
  r.number("wall_thickness_mm", c.rat.wall_thickness_mm);
  r.number("stiffness_n_per_mm", c.rat.stiffness_n_per_mm);
  r.finish();
  s.finish();
  return c;
}

UsConfig read_us(Section s) {
  UsConfig c;
  s.number("gain_db", c.gain_db);
  s.number("depth_cm", c.depth_cm);
  s.number("dynamic_range_db", c.dynamic_range_db);
  s.number("frequency_mhz", c.frequency_mhz);
  s.number("probe_frequency_mhz", c.probe_frequency_mhz);
  s.integer("enhancement_level", c.enhancement_level);
  s.integer("grayscale_map", c.grayscale_map);
  s.integer("frame_correlation", c.frame_correlation);
  s.number("resolution_mm_per_px", c.resolution_mm_per_px);
  s.number("width_mm", c.width_mm);
  s.number("speckle_scale", c.speckle_scale);
  s.number("detection_sigma_mm", c.detection_sigma_mm);
  s.finish();
  return c;
}

ProcedureConfig read_safety(Section s) {
  ProcedureConfig c;
  s.number("f_threshold_n", c.limits.f_threshold_n);
  s.number("eps_deform_mm", c.limits.eps_deform_mm);
  s.number("eps_cal", c.limits.eps_cal);
  s.number("eps_align", c.limits.eps_align);
  s.number("q_threshold", c.limits.q_threshold);
  s.integer("max_quality_retries", c.max_quality_retries);
  s.integer("max_insertion_retries", c.max_insertion_retries);
  s.integer("max_align_iterations", c.max_align_iterations);
  s.integer("max_deform_adjustments", c.max_deform_adjustments);
  s.number("quality_jitter_step_mm", c.quality_jitter_step_mm);
  s.number("speed_mm_s", c.speed_mm_s);
  s.number("dt_s", c.dt_s);
  s.number("pitch_deg", c.pitch_deg);
  s.number("overshoot_fraction", c.overshoot_fraction);
  s.number("standoff_mm", c.standoff_mm);
  s.number("calibration_sigma_mm", c.calibration_sigma_mm);
  s.number("calibration_sigma_deg", c.calibration_sigma_deg);
  s.number("positioning_sigma_mm", c.positioning_sigma_mm);
  Section f = s.child("force");
  f.number("skin_pop_n", c.force.skin_pop_n);
  f.number("skin_membrane_mm", c.force.skin_membrane_mm);
  f.number("skin_residual_fraction", c.force.skin_residual_fraction);
  f.number("friction_n_per_mm", c.force.friction_n_per_mm);
  f.number("wall_pop_n", c.force.wall_pop_n);
  f.number("wall_tent_mm", c.force.wall_tent_mm);
  f.number("noise_sigma_n", c.force.noise_sigma_n);
  f.finish();
  s.finish();
  return c;
}

TrialsConfig read_trials(Section s) {
  TrialsConfig c;
  s.enumeration("scenario", c.scenario, scenario_kind_from_string);
  s.integer("n", c.n);
  s.integer("base_seed", c.base_seed);
  s.string("out_dir", c.out_dir);
  s.integer("workers", c.workers);
  s.finish();
  return c;
}

void validate_scenario(const ScenarioConfig& c) {
  const auto positive = [](double v, const char* key) {
    if (!(v > 0.0)) {
      throw ValidationError(key, "must be positive");
    }
  };
  const auto non_negative = [](double v, const char* key) {
    if (!(v >= 0.0)) {
      throw ValidationError(key, "must be non-negative");
    }
  };
  non_negative(c.localization_sigma_mm, "scenario.localization_sigma_mm");
  positive(c.phantom.diameter_mm, "scenario.phantom.diameter_mm");
  non_negative(c.phantom.depth_mm, "scenario.phantom.depth_mm");
  non_negative(c.phantom.wall_thickness_mm, "scenario.phantom.wall_thickness_mm");
  positive(c.phantom.stiffness_n_per_mm, "scenario.phantom.stiffness_n_per_mm");
  if (c.phantom.depth_reference == DepthReference::Centerline &&
      c.phantom.depth_mm <= 0.5 * c.phantom.diameter_mm) {
    throw ValidationError("scenario.phantom.depth_mm", "vessel would break the surface");
  }
  positive(c.rat.diameter_mean_mm, "scenario.rat.diameter_mean_mm");
  non_negative(c.rat.diameter_sd_mm, "scenario.rat.diameter_sd_mm");
  positive(c.rat.diameter_min_mm, "scenario.rat.diameter_min_mm");
  if (!(c.rat.diameter_max_mm > c.rat.diameter_min_mm)) {
    throw ValidationError("scenario.rat.diameter_max_mm", "must exceed diameter_min_mm");
  }
  // Rejection sampling needs non-negligible mass inside the bounds.
  if (c.rat.diameter_sd_mm == 0.0 &&
      (c.rat.diameter_mean_mm < c.rat.diameter_min_mm || c.rat.diameter_mean_mm > c.rat.diameter_max_mm)) {
    throw ValidationError("scenario.rat.diameter_mean_mm", "outside [diameter_min_mm, diameter_max_mm]");
  }
  non_negative(c.rat.depth_min_mm, "scenario.rat.depth_min_mm");
  if (!(c.rat.depth_max_mm >= c.rat.depth_min_mm)) {
    throw ValidationError("scenario.rat.depth_max_mm", "must not be below depth_min_mm");
  }
  if (c.rat.depth_max_mm + c.rat.diameter_max_mm + c.rat.sagitta_max_mm >= 16.0) {
    throw ValidationError("scenario.rat.depth_max_mm", "vessel must stay inside the 20 mm block");
  }
  non_negative(c.rat.sagitta_max_mm, "scenario.rat.sagitta_max_mm");
  non_negative(c.rat.wall_thickness_mm, "scenario.rat.wall_thickness_mm");
  positive(c.rat.stiffness_n_per_mm, "scenario.rat.stiffness_n_per_mm");
}

// Line and column (1-based) of a byte offset.
std::pair<std::size_t, std::size_t> locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

}  // namespace

void RunConfig::validate() const {
  validate_scenario(sim.scenario);
  sim.us.validate();
  sim.procedure.validate();
  if (trials.n < 1) {
    throw ValidationError("trials.n", "must be at least 1");
  }
}

RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports the offset one past the offending character.
    const auto [line, column] = locate(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + e.what(),
                     line, column);
  }
  Section top(&root, "");
  RunConfig config;
  config.sim.chain = read_chain(top.child("chain"));
  config.sim.scenario = read_scenario(top.child("scenario"));
  config.sim.us = read_us(top.child("us"));
  config.sim.procedure = read_safety(top.child("safety"));
  config.trials = read_trials(top.child("trials"));
  top.finish();
  config.validate();
  return config;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read config file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

json config_to_json(const RunConfig& config) {
  const auto vec = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  const SimConfig& sim = config.sim;

  json joints = json::array();
  for (const auto& j : sim.chain.joints()) {
    joints.push_back({{"type", to_string(j.type)},
                      {"a_mm", j.a_mm},
                      {"alpha_rad", j.alpha_rad},
                      {"d_mm", j.d_mm},
                      {"theta_offset_rad", j.theta_offset_rad},
                      {"limit_min", j.limit_min},
                      {"limit_max", j.limit_max}});
  }
  const auto& sc = sim.scenario;
  const auto& us = sim.us;
  const auto& pc = sim.procedure;
  return json{
      {"chain",
       {{"joints", joints},
        {"q_home", sim.chain.q_home().values()},
        {"probe_mount_mm", vec(sim.chain.probe_mount().translation)}}},
      {"scenario",
       {{"work_center_mm", vec(sc.work_center)},
        {"localization_sigma_mm", sc.localization_sigma_mm},
        {"phantom",
         {{"diameter_mm", sc.phantom.diameter_mm},
          {"depth_mm", sc.phantom.depth_mm},
          {"depth_reference", to_string(sc.phantom.depth_reference)},
          {"wall_thickness_mm", sc.phantom.wall_thickness_mm},
          {"stiffness_n_per_mm", sc.phantom.stiffness_n_per_mm}}},
        {"rat",
         {{"diameter_mean_mm", sc.rat.diameter_mean_mm},
          {"diameter_sd_mm", sc.rat.diameter_sd_mm},
          {"diameter_min_mm", sc.rat.diameter_min_mm},
          {"diameter_max_mm", sc.rat.diameter_max_mm},
          {"depth_min_mm", sc.rat.depth_min_mm},
          {"depth_max_mm", sc.rat.depth_max_mm},
          {"sagitta_max_mm", sc.rat.sagitta_max_mm},
          {"wall_thickness_mm", sc.rat.wall_thickness_mm},
          {"stiffness_n_per_mm", sc.rat.stiffness_n_per_mm}}}}},
      {"us",
       {{"gain_db", us.gain_db},
        {"depth_cm", us.depth_cm},
        {"dynamic_range_db", us.dynamic_range_db},
        {"frequency_mhz", us.frequency_mhz},
        {"probe_frequency_mhz", us.probe_frequency_mhz},
        {"enhancement_level", us.enhancement_level},
        {"grayscale_map", us.grayscale_map},
        {"frame_correlation", us.frame_correlation},
        {"resolution_mm_per_px", us.resolution_mm_per_px},
        {"width_mm", us.width_mm},
        {"speckle_scale", us.speckle_scale},
        {"detection_sigma_mm", us.detection_sigma_mm}}},
      {"safety",
       {{"f_threshold_n", pc.limits.f_threshold_n},
        {"eps_deform_mm", pc.limits.eps_deform_mm},
        {"eps_cal", pc.limits.eps_cal},
        {"eps_align", pc.limits.eps_align},
        {"q_threshold", pc.limits.q_threshold},
        {"max_quality_retries", pc.max_quality_retries},
        {"max_insertion_retries", pc.max_insertion_retries},
        {"max_align_iterations", pc.max_align_iterations},
        {"max_deform_adjustments", pc.max_deform_adjustments},
        {"quality_jitter_step_mm", pc.quality_jitter_step_mm},
        {"speed_mm_s", pc.speed_mm_s},
        {"dt_s", pc.dt_s},
        {"pitch_deg", pc.pitch_deg},
        {"overshoot_fraction", pc.overshoot_fraction},
        {"standoff_mm", pc.standoff_mm},
        {"calibration_sigma_mm", pc.calibration_sigma_mm},
        {"calibration_sigma_deg", pc.calibration_sigma_deg},
        {"positioning_sigma_mm", pc.positioning_sigma_mm},
        {"force",
         {{"skin_pop_n", pc.force.skin_pop_n},
          {"skin_membrane_mm", pc.force.skin_membrane_mm},
          {"skin_residual_fraction", pc.force.skin_residual_fraction},
          {"friction_n_per_mm", pc.force.friction_n_per_mm},
          {"wall_pop_n", pc.force.wall_pop_n},
          {"wall_tent_mm", pc.force.wall_tent_mm},
          {"noise_sigma_n", pc.force.noise_sigma_n}}}}},
      {"trials",
       {{"scenario", to_string(config.trials.scenario)},
        {"n", config.trials.n},
        {"base_seed", config.trials.base_seed},
        {"out_dir", config.trials.out_dir},
        {"workers", config.trials.workers}}},
  };
}

}  // namespace rva
