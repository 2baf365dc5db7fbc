#include "tardis/scenario_config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

namespace tardis {
namespace {

using Json = nlohmann::ordered_json;

class Section {
 public:
  Section(const Json& node, std::string path)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& path,
                                const std::string& message) {
    throw ConfigError("config key '" + path + "': " + message);
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& item : node_.items()) {
      bool known = false;
      for (const char* k : keys) known |= item.key() == k;
      if (!known) fail(key_path(item.key()), "unknown key");
    }
  }

  bool has(const char* key) const { return node_.contains(key); }
  const Json& at(const char* key) const { return node_.at(key); }
  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  Section child(const char* key) const { return {node_.at(key), key_path(key)}; }

  void get(const char* key, double& out) const {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_number()) fail(key_path(key), "expected a number");
    out = v.get<double>();
  }
  void get(const char* key, std::size_t& out) const {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_number_unsigned()) {
      fail(key_path(key), "expected a non-negative integer");
    }
    out = v.get<std::size_t>();
  }
  void get_seed(const char* key, std::uint64_t& out) const {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_number_unsigned()) {
      fail(key_path(key), "expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  void get(const char* key, std::string& out) const {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_string()) fail(key_path(key), "expected a string");
    out = v.get<std::string>();
  }
  void get(const char* key, std::vector<double>& out) const {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_array()) fail(key_path(key), "expected an array of numbers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) fail(key_path(key), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
  }
  void get(const char* key, std::vector<std::size_t>& out) const {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_array()) fail(key_path(key), "expected an array of integers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) {
        fail(key_path(key), "expected an array of non-negative integers");
      }
      out.push_back(e.get<std::size_t>());
    }
  }

  // Applies `parse` to a string value, reporting its errors under the key.
  template <class T, class Parse>
  void get_enum(const char* key, T& out, Parse parse) const {
    std::string name;
    get(key, name);
    if (!has(key)) return;
    try {
      out = parse(name);
    } catch (const ValidationError& e) {
      fail(key_path(key), e.what());
    }
  }

 private:
  const Json& node_;
  std::string path_;
};

void read_trace(const Section& s, TraceSource& trace,
                const std::filesystem::path& base_dir) {
  s.allow({"path", "window_length", "synthetic"});
  s.get("path", trace.path);
  s.get("window_length", trace.window_length);
  if (!trace.path.empty()) {
    std::filesystem::path p(trace.path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    if (!std::filesystem::exists(p)) {
      throw ConfigError("trace file not found: " + p.string());
    }
    trace.path = p.string();
  }
  if (!s.has("synthetic")) return;
  const Section syn = s.child("synthetic");
  syn.allow({"users", "days", "windows_per_day", "diurnal_peak_hour",
             "peak_to_trough_ratio", "user_size_shape", "median_daily_bytes"});
  auto& p = trace.synthetic;
  syn.get("users", p.users);
  syn.get("days", p.days);
  syn.get("windows_per_day", p.windows_per_day);
  syn.get("diurnal_peak_hour", p.diurnal_peak_hour);
  syn.get("peak_to_trough_ratio", p.peak_to_trough_ratio);
  syn.get("user_size_shape", p.user_size_shape);
  syn.get("median_daily_bytes", p.median_daily_bytes);
}

void read_tpg(const Section& s, TpgSplitPolicy& tpg) {
  s.allow({"policy", "peak_hours", "equal_fraction"});
  s.get_enum("policy", tpg, tpg_policy_preset);
  if (s.has("peak_hours")) {
    s.get("peak_hours", tpg.peak_hours);
    tpg.tpg_count = tpg.peak_hours.size();
  }
  s.get("equal_fraction", tpg.equal_fraction);
}

void read_pricing(const Section& s, PricingConfig& p) {
  s.allow({"scheme", "ratios", "base_rate", "price_function",
           "sigma_fraction", "sample_count", "capacity", "free_fraction"});
  s.get_enum("scheme", p.scheme, parse_scheme_kind);
  if (s.has("ratios") && s.at("ratios").is_string()) {
    s.get_enum("ratios", p.ratios, price_ratio_preset);
  } else {
    s.get("ratios", p.ratios);
  }
  s.get("base_rate", p.base_rate);
  s.get_enum("price_function", p.price_function, parse_percentile_variant);
  s.get("sigma_fraction", p.sigma_fraction);
  s.get("sample_count", p.sample_count);
  s.get("capacity", p.capacity);
  s.get("free_fraction", p.free_fraction);
}

void read_choice(const Section& s, ChoiceModelConfig& c) {
  s.allow({"n_t", "n_s", "mu_t", "mu_s", "max_delay_windows",
           "tpgs_available", "assignment"});
  s.get("n_t", c.n_t);
  s.get("n_s", c.n_s);
  s.get("mu_t", c.mu_t);
  s.get("mu_s", c.mu_s);
  s.get("max_delay_windows", c.max_delay_windows);
  s.get("tpgs_available", c.tpgs_available);
  s.get_enum("assignment", c.policy, parse_assignment_policy);
}

void read_schedule(const Section& s, ScheduleConfig& c) {
  s.allow({"warmup_days", "run_days", "freeze_tail_days", "eval_head_days",
           "initial_scale", "final_scale"});
  s.get("warmup_days", c.warmup_days);
  s.get("run_days", c.run_days);
  s.get("freeze_tail_days", c.freeze_tail_days);
  s.get("eval_head_days", c.eval_head_days);
  s.get("initial_scale", c.initial_scale);
  s.get("final_scale", c.final_scale);
}

}  // namespace

ScenarioConfig parse_config(const std::string& text,
                            const std::filesystem::path& base_dir) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ScenarioConfig config;
  const Section s(root, "");
  s.allow({"scenario", "seed", "trace", "tpg", "pricing", "choice", "schedule",
           "day_source", "repeats", "user_sample"});
  s.get("scenario", config.scenario);
  s.get_seed("seed", config.seed);
  if (s.has("trace")) read_trace(s.child("trace"), config.trace, base_dir);
  if (s.has("tpg")) read_tpg(s.child("tpg"), config.tpg);
  if (s.has("pricing")) read_pricing(s.child("pricing"), config.pricing);
  if (s.has("choice")) read_choice(s.child("choice"), config.choice);
  if (s.has("schedule")) read_schedule(s.child("schedule"), config.schedule);
  s.get_enum("day_source", config.day_source, parse_day_source);
  s.get("repeats", config.repeats);
  s.get("user_sample", config.user_sample);
  try {
    config.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return config;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const ScenarioConfig& c) {
  Json j;
  j["scenario"] = c.scenario;
  j["seed"] = c.seed;
  auto& trace = j["trace"];
  trace["path"] = c.trace.path;
  trace["window_length"] = c.trace.window_length;
  const auto& p = c.trace.synthetic;
  trace["synthetic"] = {{"users", p.users},
                        {"days", p.days},
                        {"windows_per_day", p.windows_per_day},
                        {"diurnal_peak_hour", p.diurnal_peak_hour},
                        {"peak_to_trough_ratio", p.peak_to_trough_ratio},
                        {"user_size_shape", p.user_size_shape},
                        {"median_daily_bytes", p.median_daily_bytes}};
  j["tpg"] = {{"peak_hours", c.tpg.peak_hours},
              {"equal_fraction", c.tpg.equal_fraction}};
  j["pricing"] = {{"scheme", to_string(c.pricing.scheme)},
                  {"ratios", c.pricing.ratios},
                  {"base_rate", c.pricing.base_rate},
                  {"price_function", to_string(c.pricing.price_function)},
                  {"sigma_fraction", c.pricing.sigma_fraction},
                  {"sample_count", c.pricing.sample_count},
                  {"capacity", c.pricing.capacity},
                  {"free_fraction", c.pricing.free_fraction}};
  j["choice"] = {{"n_t", c.choice.n_t},
                 {"n_s", c.choice.n_s},
                 {"mu_t", c.choice.mu_t},
                 {"mu_s", c.choice.mu_s},
                 {"max_delay_windows", c.choice.max_delay_windows},
                 {"tpgs_available", c.choice.tpgs_available},
                 {"assignment", to_string(c.choice.policy)}};
  const auto& s = c.schedule;
  j["schedule"] = {{"warmup_days", s.warmup_days},
                   {"run_days", s.run_days},
                   {"freeze_tail_days", s.freeze_tail_days},
                   {"eval_head_days", s.eval_head_days},
                   {"initial_scale", s.initial_scale},
                   {"final_scale", s.final_scale}};
  j["day_source"] = to_string(c.day_source);
  j["repeats"] = c.repeats;
  j["user_sample"] = c.user_sample;
  return j.dump(2);
}

}  // namespace tardis
