#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "anonpads/emu_runtime.hpp"
#include "anonpads/engine.hpp"

namespace anonpads {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything one LP (or an in-process cluster) needs besides endpoints.
struct RunConfig {
  EngineConfig engine;
  EmuConfig emu;
};

/// Sets one key. Known keys: n_entities, n_steps, seed, space_l, radius,
/// v_min, v_max, pause_max, placement, bootstrap_timeout_s, step_timeout_s,
/// balancer.{enabled,window,eval_period,factor,max_frac,cooldown} and
/// emu.{preset,mean_ms,std_ms,min_lifetime_ms,max_lifetime_ms,
/// base_offset_max_ms,p_reset,drop,duplicate,reorder,reorder_span_ms,
/// reset_every,mode,time_scale,seed,window,min_rto_ms,max_retries}.
/// Throws ConfigError on unknown keys or unparsable values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// One "key = value" line; blank lines and '#' comments yield nothing.
struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
  /// A "[name]" header; the name is in key.
  bool section = false;
};
/// Splits a flat config stream.
std::vector<KeyValue> read_key_values(std::istream& in);

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);

bool parse_bool(std::string_view v);
double parse_double(std::string_view v);
std::uint64_t parse_u64(std::string_view v);

}  // namespace anonpads
