#pragma once

// File formats: JSON for parameters, reports and configs, JSON lines for
// sample streams, CSV for traces and tables. Floating-point values are written
// in the shortest representation that round-trips, so identical inputs give
// byte-identical files.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "bingham/distribution.hpp"
#include "bingham/errors.hpp"
#include "bingham/fit.hpp"
#include "bingham/normconst.hpp"
#include "bingham/quaternion.hpp"
#include "bingham/types.hpp"

namespace bingham {

inline constexpr std::string_view kVersion = "0.1.0";

using Json = nlohmann::ordered_json;

/// Shortest round-trip decimal; "nan", "inf" and "-inf" for non-finite values.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

/// Fixed significant-digit formatting for human-facing output.
inline std::string format_significant(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

inline Json parse_json(std::string_view text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": invalid JSON: " + e.what());
  }
}

inline Json read_json_file(const std::filesystem::path& path) {
  return parse_json(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// BinghamParam

/// {"A": [16 row-major], "lambda": [...], "D": [16 row-major]}. Only "A" is
/// read back; the eigensystem is recomputed.
inline Json param_to_json(const BinghamParam& p) {
  Json a = Json::array(), d = Json::array(), lam = Json::array();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      a.push_back(p.a()(i, j));
      d.push_back(p.d()(i, j));
    }
    lam.push_back(p.lambda()[i]);
  }
  return Json{{"A", a}, {"lambda", lam}, {"D", d}};
}

inline BinghamParam param_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("A")) throw IoError("parameter JSON needs an \"A\" field");
  const Json& a = j.at("A");
  if (!a.is_array() || a.size() != 16) throw IoError("\"A\" must hold 16 numbers (row-major 4x4)");
  Matrix4 m;
  for (int k = 0; k < 16; ++k) {
    if (!a[k].is_number()) throw IoError("\"A\" must hold 16 numbers (row-major 4x4)");
    m(k / 4, k % 4) = a[k].get<double>();
  }
  if (!m.allFinite()) throw IoError("\"A\" has non-finite entries");
  try {
    return BinghamParam(m);
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("\"A\": ") + e.what());
  }
}

inline BinghamParam read_param_file(const std::filesystem::path& path) {
  try {
    return param_from_json(read_json_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Samples: one {"q": [w, x, y, z]} object per line

inline std::string samples_to_jsonl(std::span<const Quatd> samples) {
  std::string out;
  out.reserve(samples.size() * 96);
  for (const auto& q : samples) {
    out += "{\"q\":[";
    for (int i = 0; i < 4; ++i) {
      if (i) out += ',';
      out += format_double(q[i]);
    }
    out += "]}\n";
  }
  return out;
}

/// Parses JSON lines; blank lines are skipped. Each quaternion must have unit
/// norm within 1e-6; values off by more than 1e-12 are renormalised.
inline std::vector<Quatd> samples_from_jsonl(std::string_view text, const std::string& origin) {
  std::vector<Quatd> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    const Json j = parse_json(line, where);
    if (!j.is_object() || !j.contains("q") || !j["q"].is_array() || j["q"].size() != 4)
      throw IoError(where + ": expected {\"q\": [w, x, y, z]}");
    Vector4 v;
    for (int i = 0; i < 4; ++i) {
      if (!j["q"][i].is_number()) throw IoError(where + ": quaternion entries must be numbers");
      v[i] = j["q"][i].get<double>();
    }
    if (!v.allFinite() || std::abs(v.norm() - 1.0) > 1e-6) throw IoError(where + ": quaternion is not unit");
    // Values written by samples_to_jsonl are kept bit for bit.
    out.emplace_back(std::abs(v.norm() - 1.0) <= 1e-12 ? v : Vector4(v.normalized()));
  }
  return out;
}

inline std::vector<Quatd> read_samples_file(const std::filesystem::path& path) {
  return samples_from_jsonl(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Configs

inline std::string to_string(LossKind k) { return k == LossKind::bnll ? "bnll" : "qcqp"; }

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "bnll") return LossKind::bnll;
  if (s == "qcqp") return LossKind::qcqp;
  throw InvalidArgument("unknown loss '" + std::string(s) + "' (expected bnll or qcqp)");
}

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::gradient_descent: return "gd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "adam";
}

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "gd") return OptimizerKind::gradient_descent;
  if (s == "momentum") return OptimizerKind::momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidArgument("unknown optimizer '" + std::string(s) + "' (expected gd, momentum or adam)");
}

inline Json integrator_to_json(const IntegratorConfig& c) {
  return Json{{"r", c.r}, {"omega_d", c.omega_d}, {"n_min", c.n_min}, {"n", c.n}, {"d_fraction", c.d_fraction},
              {"max_imag_residual", c.max_imag_residual}};
}

namespace detail {

template <class T>
void read_field(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IoError(std::string("config field '") + key + "' has the wrong type");
  }
}

inline void reject_unknown(const Json& j, std::initializer_list<std::string_view> known, const char* section) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw IoError(std::string("unknown key '") + key + "' in config section '" + section + "'");
  }
}

}  // namespace detail

/// Overlays the keys present in `j` onto `base`.
inline IntegratorConfig integrator_from_json(const Json& j, IntegratorConfig base = {}) {
  if (!j.is_object()) throw IoError("config section 'integrator' must be an object");
  detail::reject_unknown(j, {"r", "omega_d", "n_min", "n", "d_fraction", "max_imag_residual"}, "integrator");
  detail::read_field(j, "r", base.r);
  detail::read_field(j, "omega_d", base.omega_d);
  detail::read_field(j, "n_min", base.n_min);
  detail::read_field(j, "n", base.n);
  detail::read_field(j, "d_fraction", base.d_fraction);
  detail::read_field(j, "max_imag_residual", base.max_imag_residual);
  return base;
}

/// The initial parameter is resolved by the caller; only the optimiser
/// settings are serialised here.
inline Json fit_config_to_json(const FitConfig& c) {
  return Json{{"loss", to_string(c.loss)},
              {"optimizer", to_string(c.optimizer)},
              {"max_iters", c.max_iters},
              {"learning_rate", c.learning_rate},
              {"momentum", c.momentum},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_epsilon", c.adam_epsilon},
              {"init_scale", c.init_scale},
              {"record_every", c.record_every},
              {"stop_tolerance", c.stop_tolerance},
              {"stop_window", c.stop_window}};
}

inline FitConfig fit_config_from_json(const Json& j, FitConfig base = {}) {
  if (!j.is_object()) throw IoError("config section 'fit' must be an object");
  detail::reject_unknown(j,
                         {"loss", "optimizer", "max_iters", "learning_rate", "momentum", "adam_beta1", "adam_beta2",
                          "adam_epsilon", "init", "init_scale", "record_every", "stop_tolerance", "stop_window"},
                         "fit");
  try {
    if (j.contains("loss")) base.loss = parse_loss_kind(j["loss"].get<std::string>());
    if (j.contains("optimizer")) base.optimizer = parse_optimizer(j["optimizer"].get<std::string>());
  } catch (const nlohmann::json::exception&) {
    throw IoError("config fields 'loss' and 'optimizer' must be strings");
  } catch (const InvalidArgument& e) {
    throw IoError(e.what());
  }
  detail::read_field(j, "max_iters", base.max_iters);
  detail::read_field(j, "learning_rate", base.learning_rate);
  detail::read_field(j, "momentum", base.momentum);
  detail::read_field(j, "adam_beta1", base.adam_beta1);
  detail::read_field(j, "adam_beta2", base.adam_beta2);
  detail::read_field(j, "adam_epsilon", base.adam_epsilon);
  detail::read_field(j, "init_scale", base.init_scale);
  detail::read_field(j, "record_every", base.record_every);
  detail::read_field(j, "stop_tolerance", base.stop_tolerance);
  detail::read_field(j, "stop_window", base.stop_window);
  return base;
}

// ---------------------------------------------------------------------------
// Reports and tables

inline Json theta_to_json(const Theta& t) {
  Json a = Json::array();
  for (int i = 0; i < 10; ++i) a.push_back(t[i]);
  return a;
}

/// NaN entries (no ground truth) become null.
inline Json fit_report_to_json(const FitReport& r, bool include_wall_time = false) {
  Json trace = Json::array();
  for (const auto& tp : r.trace) {
    trace.push_back(Json{{"iter", tp.iter},
                         {"loss", tp.loss},
                         {"kld", std::isnan(tp.kld) ? Json() : Json(tp.kld)},
                         {"mode_error_deg", std::isnan(tp.mode_error_deg) ? Json() : Json(tp.mode_error_deg)}});
  }
  Json out{{"converged", r.converged},
           {"iterations", r.iterations},
           {"final_loss", r.final_point().loss},
           {"final_kld", std::isnan(r.final_point().kld) ? Json() : Json(r.final_point().kld)},
           {"final_mode_error_deg",
            std::isnan(r.final_point().mode_error_deg) ? Json() : Json(r.final_point().mode_error_deg)},
           {"final_theta", theta_to_json(r.final_theta)},
           {"final_param", param_to_json(r.final_param)},
           {"trace", trace}};
  if (include_wall_time) out["wall_time_s"] = r.wall_time_s;
  return out;
}

inline std::string trace_csv(const FitReport& r) {
  std::string out = "iter,loss,kld,mode_error_deg\n";
  for (const auto& tp : r.trace) {
    out += std::to_string(tp.iter) + ',' + format_double(tp.loss) + ',' + format_double(tp.kld) + ',' +
           format_double(tp.mode_error_deg) + '\n';
  }
  return out;
}

inline std::string ablation_rows_csv(const AblationResult& r) {
  std::string out = "value,trial,truth_seed,sample_seed,ok,final_kld,final_loss,mode_error_deg,iterations\n";
  for (const auto& row : r.rows) {
    out += format_double(row.value) + ',' + std::to_string(row.trial) + ',' + std::to_string(row.truth_seed) + ',' +
           std::to_string(row.sample_seed) + ',' + (row.ok ? "1" : "0") + ',' + format_double(row.final_kld) + ',' +
           format_double(row.final_loss) + ',' + format_double(row.mode_error_deg) + ',' +
           std::to_string(row.iterations) + '\n';
  }
  return out;
}

inline std::string ablation_summary_csv(const AblationResult& r) {
  std::string out = "value,trials_ok,median_kld,min_kld,max_kld\n";
  for (const auto& s : r.summary) {
    out += format_double(s.value) + ',' + std::to_string(s.trials_ok) + ',' + format_double(s.median) + ',' +
           format_double(s.min) + ',' + format_double(s.max) + '\n';
  }
  return out;
}

/// One line per failed trial, or an empty string.
inline std::string ablation_errors(const AblationResult& r) {
  std::string out;
  for (const auto& row : r.rows) {
    if (!row.ok) out += format_double(row.value) + ',' + std::to_string(row.trial) + ": " + row.error + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run manifest

struct RunManifest {
  std::string command;
  Json config = Json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::optional<double> wall_time_s;  ///< left out by default so manifests stay reproducible
};

inline Json manifest_to_json(const RunManifest& m) {
  Json out{{"command", m.command},
           {"version", std::string(kVersion)},
           {"seed", m.seed},
           {"config", m.config},
           {"outputs", m.outputs}};
  if (m.wall_time_s) out["wall_time_s"] = *m.wall_time_s;
  return out;
}

inline std::string dump_json(const Json& j) { return j.dump(2) + '\n'; }

}  // namespace bingham
