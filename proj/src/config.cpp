#include "anonpads/config.hpp"

#include <charconv>
#include <fstream>
#include <limits>

namespace anonpads {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint32_t parse_u32(std::string_view v) {
  const auto x = parse_u64(v);
  if (x > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("value out of range: " + std::string(v));
  return static_cast<std::uint32_t>(x);
}

void set_moments(EmuConfig& emu, double mean, double sd) {
  emu.circuit.params = LatencyParams::from_moments(mean, sd);
}

}  // namespace

bool parse_bool(std::string_view v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes" || v == "ALL_ON") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no" || v == "ALL_OFF") return false;
  throw ConfigError("not a boolean: " + std::string(v));
}

double parse_double(std::string_view v) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("not a number: " + std::string(v));
  return x;
}

std::uint64_t parse_u64(std::string_view v) {
  std::uint64_t x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("not a non-negative integer: " + std::string(v));
  return x;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  auto& e = cfg.engine;
  auto& m = e.model;
  auto& b = e.balancer;
  auto& emu = cfg.emu;
  try {
    if (key == "n_entities") m.n_entities = parse_u32(value);
    else if (key == "n_steps") e.n_steps = parse_u64(value);
    else if (key == "seed") e.seed = parse_u64(value);
    else if (key == "space_l") m.space_l = parse_double(value);
    else if (key == "radius") m.radius = parse_double(value);
    else if (key == "v_min") m.v_min = parse_double(value);
    else if (key == "v_max") m.v_max = parse_double(value);
    else if (key == "pause_max") m.pause_max = parse_u32(value);
    else if (key == "placement") {
      if (value == "round_robin") e.placement = Placement::round_robin;
      else if (value == "random") e.placement = Placement::seeded_random;
      else throw ConfigError("placement must be round_robin or random");
    }
    else if (key == "bootstrap_timeout_s") e.bootstrap_timeout_ms = parse_double(value) * 1000.0;
    else if (key == "step_timeout_s") e.step_timeout_ms = parse_double(value) * 1000.0;
    else if (key == "balancer.enabled") b.enabled = parse_bool(value);
    else if (key == "balancer.window") b.window = parse_u32(value);
    else if (key == "balancer.eval_period") b.eval_period = parse_u32(value);
    else if (key == "balancer.factor") b.migration_factor = parse_double(value);
    else if (key == "balancer.max_frac") b.max_migrations_frac = parse_double(value);
    else if (key == "balancer.cooldown") b.cooldown = parse_u32(value);
    else if (key == "emu.preset") {
      using namespace tor_presets;
      if (value == "dublin_okeanos") set_moments(emu, kDublinOkeanosMean, kDublinOkeanosStd);
      else if (value == "okeanos_frankfurt") set_moments(emu, kOkeanosFrankfurtMean, kOkeanosFrankfurtStd);
      else if (value == "frankfurt_dublin") set_moments(emu, kFrankfurtDublinMean, kFrankfurtDublinStd);
      else throw ConfigError("unknown emu.preset (dublin_okeanos, okeanos_frankfurt, frankfurt_dublin)");
    }
    else if (key == "emu.mean_ms") set_moments(emu, parse_double(value), emu.circuit.params.std_ms);
    else if (key == "emu.std_ms") set_moments(emu, emu.circuit.params.mean_ms, parse_double(value));
    else if (key == "emu.min_lifetime_ms") emu.circuit.min_lifetime_ms = parse_double(value);
    else if (key == "emu.max_lifetime_ms") emu.circuit.max_lifetime_ms = parse_double(value);
    else if (key == "emu.base_offset_max_ms") emu.circuit.base_offset_max_ms = parse_double(value);
    else if (key == "emu.p_reset") emu.circuit.p_reset = parse_double(value);
    else if (key == "emu.drop") emu.faults.drop = parse_double(value);
    else if (key == "emu.duplicate") emu.faults.duplicate = parse_double(value);
    else if (key == "emu.reorder") emu.faults.reorder = parse_double(value);
    else if (key == "emu.reorder_span_ms") emu.faults.reorder_span_ms = parse_double(value);
    else if (key == "emu.reset_every") emu.faults.reset_every = parse_u64(value);
    else if (key == "emu.mode") {
      if (value == "sleep") emu.sleep_mode = true;
      else if (value == "ledger") emu.sleep_mode = false;
      else throw ConfigError("emu.mode must be sleep or ledger");
    }
    else if (key == "emu.time_scale") emu.time_scale = parse_double(value);
    else if (key == "emu.seed") emu.seed = parse_u64(value);
    else if (key == "emu.window") emu.reliability.window = parse_u32(value);
    else if (key == "emu.min_rto_ms") emu.reliability.min_rto_ms = parse_double(value);
    else if (key == "emu.max_retries") emu.reliability.max_retries = static_cast<int>(parse_u32(value));
    else throw ConfigError("unknown key");
  } catch (const ConfigError& err) {
    throw ConfigError(std::string(key) + ": " + err.what());
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string(key) + ": " + err.what());
  }
}

std::vector<KeyValue> read_key_values(std::istream& in) {
  std::vector<KeyValue> out;
  std::string raw;
  std::size_t n = 0;
  while (std::getline(in, raw)) {
    ++n;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(n) + ": unterminated section header");
      out.push_back({std::string(trim(line.substr(1, line.size() - 2))), "", n, true});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(n) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(n) + ": empty key");
    out.push_back({std::string(key), std::string(trim(line.substr(eq + 1))), n});
  }
  return out;
}

RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  for (const auto& kv : read_key_values(in)) {
    if (kv.section) throw ConfigError("line " + std::to_string(kv.line) + ": sections are not allowed here");
    try {
      apply_setting(cfg, kv.key, kv.value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
  try {
    cfg.engine.validate();
    cfg.emu.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_run_config(in);
}

}  // namespace anonpads
